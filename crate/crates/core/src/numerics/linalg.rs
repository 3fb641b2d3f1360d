//! Ridge-limit pseudoinverse `A⁺ ≈ (λI + AᵀA)⁻¹Aᵀ = Aᵀ(λI + AAᵀ)⁻¹`.
//!
//! Neither form inverts explicitly: the regularized Gram matrix is factored
//! with Cholesky and the factor is applied by triangular substitution.

use super::{Exec, NumericsError, RealMatrix, Result};

/// Which regularized Gram matrix to factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramForm {
    /// `(λI + AᵀA)⁻¹ Aᵀ`, factor is `cols x cols`.
    Primal,
    /// `Aᵀ (λI + AAᵀ)⁻¹`, factor is `rows x rows`.
    Dual,
    /// Whichever factor is smaller.
    Auto,
}

impl GramForm {
    fn resolve(self, a: &RealMatrix) -> GramForm {
        match self {
            GramForm::Auto if a.rows() >= a.cols() => GramForm::Primal,
            GramForm::Auto => GramForm::Dual,
            other => other,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(NumericsError::InvalidLambda(lambda))
    }
}

fn add_ridge(mut gram: RealMatrix, lambda: f64) -> RealMatrix {
    for i in 0..gram.rows() {
        let v = gram.get(i, i);
        gram.set(i, i, v + lambda);
    }
    gram
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, row-major.
fn cholesky(spd: &RealMatrix) -> Result<Vec<f64>> {
    let n = spd.rows();
    let a = spd.as_slice();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (li, lj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let dot: f64 = li.iter().zip(lj).map(|(x, y)| x * y).sum();
            let s = a[i * n + j] - dot;
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(NumericsError::Solver(format!(
                        "matrix is not numerically positive definite (pivot {i} = {s:e})"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solve `spd * X = rhs` for a symmetric positive-definite `spd`.
pub fn cholesky_solve(spd: &RealMatrix, rhs: &RealMatrix) -> Result<RealMatrix> {
    if spd.rows() != spd.cols() || spd.rows() != rhs.rows() {
        return Err(NumericsError::ShapeMismatch {
            op: "cholesky_solve",
            left: spd.shape(),
            right: rhs.shape(),
        });
    }
    let n = spd.rows();
    let m = rhs.cols();
    let l = cholesky(spd)?;
    let mut x = rhs.as_slice().to_vec();
    // L y = b
    for i in 0..n {
        for k in 0..i {
            let lik = l[i * n + k];
            if lik != 0.0 {
                for c in 0..m {
                    x[i * m + c] -= lik * x[k * m + c];
                }
            }
        }
        let d = l[i * n + i];
        for c in 0..m {
            x[i * m + c] /= d;
        }
    }
    // Lᵀ x = y
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l[k * n + i];
            if lki != 0.0 {
                for c in 0..m {
                    x[i * m + c] -= lki * x[k * m + c];
                }
            }
        }
        let d = l[i * n + i];
        for c in 0..m {
            x[i * m + c] /= d;
        }
    }
    let out = RealMatrix::from_vec(n, m, x)?;
    out.check_finite()
        .map_err(|e| NumericsError::Solver(format!("solution is not finite: {e}")))?;
    Ok(out)
}

/// Ridge pseudoinverse of `a` (`cols x rows`), picking the cheaper form.
pub fn pseudoinverse(a: &RealMatrix, lambda: f64) -> Result<RealMatrix> {
    pseudoinverse_with(a, lambda, GramForm::Auto, Exec::default())
}

pub fn pseudoinverse_with(a: &RealMatrix, lambda: f64, form: GramForm, exec: Exec) -> Result<RealMatrix> {
    check_lambda(lambda)?;
    a.check_finite()?;
    let at = a.transpose();
    match form.resolve(a) {
        GramForm::Primal => cholesky_solve(&add_ridge(a.gram(exec), lambda), &at),
        _ => {
            // Aᵀ(λI + AAᵀ)⁻¹ = ((λI + AAᵀ)⁻¹ A)ᵀ by symmetry of the Gram matrix.
            let g = add_ridge(a.outer_gram(exec), lambda);
            Ok(cholesky_solve(&g, a)?.transpose())
        }
    }
}

/// `W = A⁺ Y`, the ridge solution of `min ‖AW − Y‖² + λ‖W‖²`.
pub fn ridge_solve(a: &RealMatrix, y: &RealMatrix, lambda: f64) -> Result<RealMatrix> {
    ridge_solve_with(a, y, lambda, Exec::default())
}

pub(crate) fn ridge_solve_with(a: &RealMatrix, y: &RealMatrix, lambda: f64, exec: Exec) -> Result<RealMatrix> {
    if a.rows() != y.rows() {
        return Err(NumericsError::ShapeMismatch {
            op: "ridge_solve",
            left: a.shape(),
            right: y.shape(),
        });
    }
    check_lambda(lambda)?;
    a.check_finite()?;
    y.check_finite()?;
    if a.rows() >= a.cols() {
        let at = a.transpose();
        let aty = at.matmul_with(y, exec)?;
        cholesky_solve(&add_ridge(at.matmul_with(a, exec)?, lambda), &aty)
    } else {
        let alpha = cholesky_solve(&add_ridge(a.outer_gram(exec), lambda), y)?;
        a.transpose().matmul_with(&alpha, exec)
    }
}
