use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use zeroize::Zeroize;

use super::{Exec, NumericsError, Result};

/// k-block length of the multiply kernel. Entries are still accumulated in
/// ascending k order, so the blocking never changes results.
const K_BLOCK: usize = 128;
const ROWS_PER_TASK: usize = 16;

/// Dense row-major matrix of `f64` with at least one row and one column.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 36 {
            f.debug_struct("RealMatrix")
                .field("rows", &self.rows)
                .field("cols", &self.cols)
                .field("data", &self.data)
                .finish()
        } else {
            write!(f, "RealMatrix({}x{})", self.rows, self.cols)
        }
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        Err(NumericsError::ZeroDimension { rows, cols })
    } else {
        Ok(())
    }
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(NumericsError::EntryCount {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        check_dims(rows.len(), cols)?;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NumericsError::EntryCount {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(rows, cols)?;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// First offending entry, if any entry is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(NumericsError::NonFinite {
                row: p / self.cols,
                col: p % self.cols,
            }),
            None => Ok(()),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// Add `row` (1 x cols) to every row.
    pub fn add_row_broadcast(&self, row: &Self) -> Result<Self> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row_broadcast",
                left: self.shape(),
                right: row.shape(),
            });
        }
        let mut out = self.clone();
        for r in out.data.chunks_exact_mut(self.cols) {
            for (v, b) in r.iter_mut().zip(&row.data) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.matmul_with(other, Exec::default())
    }

    /// `self * other`. Entry (i, j) is always the left-to-right sum over k of
    /// `self[i,k] * other[k,j]`, independent of `exec` and of how the operands
    /// were sliced out of larger matrices.
    pub fn matmul_with(&self, other: &Self, exec: Exec) -> Result<Self> {
        if self.cols != other.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (k, n) = (self.cols, other.cols);
        let mut out = vec![0.0; self.rows * n];
        let a = &self.data;
        let b = &other.data;
        exec.for_each_row_chunk(&mut out, n, ROWS_PER_TASK, |first_row, chunk| {
            let rows = chunk.len() / n;
            gemm_block(&a[first_row * k..(first_row + rows) * k], b, chunk, k, n);
        });
        Ok(Self {
            rows: self.rows,
            cols: n,
            data: out,
        })
    }

    /// `selfᵀ * self`.
    pub fn gram(&self, exec: Exec) -> Self {
        self.transpose()
            .matmul_with(self, exec)
            .expect("gram shapes always agree")
    }

    /// `self * selfᵀ`.
    pub fn outer_gram(&self, exec: Exec) -> Self {
        self.matmul_with(&self.transpose(), exec)
            .expect("gram shapes always agree")
    }

    /// `[self | other]`
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        Self::hstack_all(&[self, other])
    }

    pub fn hstack_all(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(NumericsError::ZeroDimension { rows: 0, cols: 0 })?;
        let rows = first.rows;
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(NumericsError::ShapeMismatch {
                op: "hstack",
                left: first.shape(),
                right: bad.shape(),
            });
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Stack `self` above `other`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        Self::vstack_all(&[self, other])
    }

    pub fn vstack_all(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(NumericsError::ZeroDimension { rows: 0, cols: 0 })?;
        let cols = first.cols;
        if let Some(bad) = parts.iter().find(|p| p.cols != cols) {
            return Err(NumericsError::ShapeMismatch {
                op: "vstack",
                left: first.shape(),
                right: bad.shape(),
            });
        }
        let rows: usize = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self { rows, cols, data })
    }

    /// Columns `range` as a new matrix.
    pub fn columns(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "columns",
                left: self.shape(),
                right: (range.start, range.end),
            });
        }
        let width = range.end - range.start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in self.row_iter() {
            data.extend_from_slice(&r[range.clone()]);
        }
        Ok(Self {
            rows: self.rows,
            cols: width,
            data,
        })
    }

    /// Rows `range` as a new matrix.
    pub fn row_range(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "row_range",
                left: self.shape(),
                right: (range.start, range.end),
            });
        }
        Ok(Self {
            rows: range.end - range.start,
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        })
    }

    /// Gather the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        check_dims(indices.len(), self.cols)?;
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(NumericsError::ShapeMismatch {
                    op: "select_rows",
                    left: self.shape(),
                    right: (i, self.cols),
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `‖self − reference‖_F / ‖reference‖_F` (absolute when the reference is zero).
    pub fn relative_frobenius_error(&self, reference: &Self) -> f64 {
        let diff = self.sub(reference).expect("relative error shape mismatch").frobenius_norm();
        let base = reference.frobenius_norm();
        if base == 0.0 {
            diff
        } else {
            diff / base
        }
    }

    /// Overwrite every entry with zero.
    pub fn wipe(&mut self) {
        self.data.zeroize();
        self.data.resize(self.rows * self.cols, 0.0);
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

/// `c += a * b` for a block of `c.len() / n` rows. `a` holds the matching
/// rows of the left operand (row length `k`), `b` is the full `k x n` right
/// operand.
fn gemm_block(a: &[f64], b: &[f64], c: &mut [f64], k: usize, n: usize) {
    let rows = c.len() / n;
    let mut kb = 0;
    while kb < k {
        let kend = (kb + K_BLOCK).min(k);
        for i in 0..rows {
            let arow = &a[i * k..(i + 1) * k];
            let crow = &mut c[i * n..(i + 1) * n];
            for p in kb..kend {
                let aip = arow[p];
                // Adding a signed zero leaves every finite sum unchanged.
                if aip == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (cv, bv) in crow.iter_mut().zip(brow) {
                    *cv += aip * bv;
                }
            }
        }
        kb = kend;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> RealMatrix {
        RealMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(matches!(
            RealMatrix::zeros(0, 3),
            Err(NumericsError::ZeroDimension { rows: 0, cols: 3 })
        ));
        assert!(RealMatrix::from_vec(2, 0, vec![]).is_err());
        assert!(matches!(
            RealMatrix::from_vec(2, 2, vec![1.0; 3]),
            Err(NumericsError::EntryCount { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn matmul_small() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0], &[6.0]]);
        assert_eq!(a.matmul(&b).unwrap(), m(&[&[17.0], &[39.0]]));
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn matmul_sequential_and_parallel_agree_bitwise() {
        let a = RealMatrix::from_fn(70, 300, |i, j| ((i * 31 + j * 7) % 13) as f64 * 0.37 - 1.1).unwrap();
        let b = RealMatrix::from_fn(300, 9, |i, j| ((i * 3 + j * 5) % 11) as f64 * 0.19 - 0.8).unwrap();
        let s = a.matmul_with(&b, Exec::Sequential).unwrap();
        let p = a.matmul_with(&b, Exec::Parallel).unwrap();
        assert_eq!(s.as_slice(), p.as_slice());
    }

    #[test]
    fn matmul_entries_do_not_depend_on_column_slicing() {
        let a = RealMatrix::from_fn(5, 200, |i, j| ((i + 1) as f64 * 0.1).sin() * (j as f64).cos()).unwrap();
        let b = RealMatrix::from_fn(200, 6, |i, j| ((i * j) as f64 * 0.01).tan()).unwrap();
        let full = a.matmul(&b).unwrap();
        let left = a.matmul(&b.columns(0..2).unwrap()).unwrap();
        let right = a.matmul(&b.columns(2..6).unwrap()).unwrap();
        assert_eq!(full, left.hstack(&right).unwrap());
    }

    #[test]
    fn stacking_and_slicing() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0], &[6.0]]);
        let h = a.hstack(&b).unwrap();
        assert_eq!(h, m(&[&[1.0, 2.0, 5.0], &[3.0, 4.0, 6.0]]));
        assert_eq!(h.columns(2..3).unwrap(), b);
        let v = a.vstack(&a).unwrap();
        assert_eq!(v.shape(), (4, 2));
        assert_eq!(v.row_range(2..4).unwrap(), a);
        assert_eq!(v.select_rows(&[3, 0]).unwrap(), m(&[&[3.0, 4.0], &[1.0, 2.0]]));
        assert!(a.hstack(&m(&[&[1.0]])).is_err());
        assert!(a.vstack(&b).is_err());
    }

    #[test]
    fn transpose_and_broadcast() {
        let a = m(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(a.transpose(), m(&[&[1.0], &[2.0], &[3.0]]));
        let z = RealMatrix::zeros(2, 3).unwrap();
        assert_eq!(z.add_row_broadcast(&a).unwrap().row(1), &[1.0, 2.0, 3.0]);
        assert!(z.add_row_broadcast(&a.transpose()).is_err());
    }

    #[test]
    fn finiteness_and_wipe() {
        let mut a = m(&[&[1.0, f64::NAN]]);
        assert_eq!(a.check_finite(), Err(NumericsError::NonFinite { row: 0, col: 1 }));
        a.wipe();
        assert!(a.is_all_zero());
        assert_eq!(a.shape(), (1, 2));
    }
}
