//! Plaintext Broad Learning System.
//!
//! Mapped features are linear random maps of the augmented input, enhancement
//! features are `ξ(Zⁿ W_hj + β_hj)`, and the readout is the ridge solution of
//! `[Zⁿ | Hᵐ] W = Y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{random_matrix, ridge_solve, MatrixDistribution, NumericsError, RealMatrix, RngStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlsError {
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("invalid labels: {0}")]
    Labels(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T, E = BlsError> = std::result::Result<T, E>;

/// Enhancement nonlinearity ξ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = BlsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(BlsError::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlsHyperParams {
    /// n, number of mapped-feature groups.
    pub mapped_groups: usize,
    /// d_z, width of each mapped-feature group.
    pub mapped_dim: usize,
    /// m, number of enhancement groups.
    pub enhancement_groups: usize,
    /// d_h, width of each enhancement group.
    pub enhancement_dim: usize,
    pub lambda: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for BlsHyperParams {
    fn default() -> Self {
        Self {
            mapped_groups: 10,
            mapped_dim: 10,
            enhancement_groups: 1,
            enhancement_dim: 1000,
            lambda: 1e-8,
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

impl BlsHyperParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n", self.mapped_groups),
            ("d_z", self.mapped_dim),
            ("m", self.enhancement_groups),
            ("d_h", self.enhancement_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(BlsError::Config(format!("{name} must be at least 1")));
        }
        if !self.mapped_width().is_multiple_of(2) {
            return Err(BlsError::Config(format!(
                "n * d_z = {} must be even so the mapping key splits between two clients",
                self.mapped_width()
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(BlsError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    /// n · d_z
    pub fn mapped_width(&self) -> usize {
        self.mapped_groups * self.mapped_dim
    }

    /// n · d_z / 2, the width of each client's key half.
    pub fn half_width(&self) -> usize {
        self.mapped_width() / 2
    }

    /// m · d_h
    pub fn enhancement_width(&self) -> usize {
        self.enhancement_groups * self.enhancement_dim
    }

    pub fn feature_width(&self) -> usize {
        self.mapped_width() + self.enhancement_width()
    }
}

/// One-hot targets, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    targets: RealMatrix,
    classes: usize,
}

impl LabelMatrix {
    pub fn from_labels(labels: &[usize], classes: usize) -> Result<Self> {
        if classes == 0 || labels.is_empty() {
            return Err(BlsError::Labels("need at least one label and one class".into()));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, l)| **l >= classes) {
            return Err(BlsError::Labels(format!(
                "label {l} at row {i} is out of range for {classes} classes"
            )));
        }
        let targets = RealMatrix::from_fn(labels.len(), classes, |i, j| if labels[i] == j { 1.0 } else { 0.0 })?;
        Ok(Self { targets, classes })
    }

    pub fn targets(&self) -> &RealMatrix {
        &self.targets
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.targets.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> Vec<usize> {
        argmax_rows(&self.targets)
    }
}

/// Weights and bias row of one classic mapped-feature group.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedGroup {
    pub weights: RealMatrix,
    pub bias: RealMatrix,
}

/// `W_hj` and the bias row `β_hj` of one enhancement group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementKey {
    pub weights: RealMatrix,
    pub bias: RealMatrix,
}

/// `X̄ = [X | 1]`
pub fn augment(x: &RealMatrix) -> Result<RealMatrix> {
    x.check_finite()?;
    Ok(x.hstack(&RealMatrix::filled(x.rows(), 1, 1.0)?)?)
}

/// `[Z_1 | … | Z_n]` with `Z_i = X W_zi + 1 β_zi` (linear φ).
pub fn classic_mapped_features(x: &RealMatrix, groups: &[MappedGroup]) -> Result<RealMatrix> {
    if groups.is_empty() {
        return Err(BlsError::Config("at least one mapped group is required".into()));
    }
    let blocks = groups
        .iter()
        .map(|g| Ok(x.matmul(&g.weights)?.add_row_broadcast(&g.bias)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(RealMatrix::hstack_all(&blocks.iter().collect::<Vec<_>>())?)
}

/// Stack each group's `[W_zi; β_zi]` and place the groups side by side,
/// giving the `(d+1) x n·d_z` matrix `W₀` with `X̄ W₀ = [Z_1 | … | Z_n]`.
pub fn assemble_mapping_weights(groups: &[MappedGroup]) -> Result<RealMatrix> {
    if groups.is_empty() {
        return Err(BlsError::Config("at least one mapped group is required".into()));
    }
    let stacked = groups
        .iter()
        .map(|g| Ok(g.weights.vstack(&g.bias)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(RealMatrix::hstack_all(&stacked.iter().collect::<Vec<_>>())?)
}

/// `Zⁿ = X̄ W₀ W₁`
pub fn mapped_features_simplified(x_aug: &RealMatrix, w0: &RealMatrix, w1: &RealMatrix) -> Result<RealMatrix> {
    Ok(x_aug.matmul(w0)?.matmul(w1)?)
}

/// `[H_1 | … | H_m]` with `H_j = ξ(Zⁿ W_hj + 1 β_hj)`.
pub fn enhancement_features(zn: &RealMatrix, keys: &[EnhancementKey], activation: Activation) -> Result<RealMatrix> {
    if keys.is_empty() {
        return Err(BlsError::Config("at least one enhancement group is required".into()));
    }
    let blocks = keys
        .iter()
        .map(|k| {
            Ok(zn
                .matmul(&k.weights)?
                .add_row_broadcast(&k.bias)?
                .map(|v| activation.apply(v)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RealMatrix::hstack_all(&blocks.iter().collect::<Vec<_>>())?)
}

/// `A = [Zⁿ | Hᵐ]`, `Wⁿₘ = A⁺ Y`.
pub fn train(zn: &RealMatrix, hm: &RealMatrix, y: &LabelMatrix, lambda: f64) -> Result<RealMatrix> {
    let a = zn.hstack(hm)?;
    Ok(ridge_solve(&a, y.targets(), lambda)?)
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(m: &RealMatrix) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Class index per row of `features * weights`.
pub fn predict(features: &RealMatrix, weights: &RealMatrix) -> Result<Vec<usize>> {
    Ok(argmax_rows(&features.matmul(weights)?))
}

/// `nd_z x nd_z` standard-normal mixing key `W₁`.
pub fn random_mix_key(params: &BlsHyperParams, rng: &mut RngStream) -> Result<RealMatrix> {
    let w = params.mapped_width();
    Ok(random_matrix(w, w, MatrixDistribution::StandardNormal, rng)?)
}

/// m enhancement keys: `W_hj ~ N(0, 1)`, `β_hj ~ U(−1, 1)`.
pub fn random_enhancement_keys(params: &BlsHyperParams, rng: &mut RngStream) -> Result<Vec<EnhancementKey>> {
    (0..params.enhancement_groups)
        .map(|_| {
            let weights = random_matrix(
                params.mapped_width(),
                params.enhancement_dim,
                MatrixDistribution::StandardNormal,
                rng,
            )?;
            let bias = random_matrix(1, params.enhancement_dim, MatrixDistribution::symmetric_uniform(1.0), rng)?;
            Ok(EnhancementKey { weights, bias })
        })
        .collect()
}

/// Trained model as held by the server. The client-side mapping halves
/// `W_A`, `W_B` never appear here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlsModel {
    pub mix_key: RealMatrix,
    pub enhancement_keys: Vec<EnhancementKey>,
    pub output_weights: RealMatrix,
    pub hyperparams: BlsHyperParams,
}

impl BlsModel {
    /// Fit the readout on mapped features produced with `mix_key`.
    pub fn fit(
        zn: &RealMatrix,
        labels: &LabelMatrix,
        mix_key: RealMatrix,
        enhancement_keys: Vec<EnhancementKey>,
        hyperparams: BlsHyperParams,
    ) -> Result<Self> {
        hyperparams.validate()?;
        let hm = enhancement_features(zn, &enhancement_keys, hyperparams.activation)?;
        let output_weights = train(zn, &hm, labels, hyperparams.lambda)?;
        Ok(Self {
            mix_key,
            enhancement_keys,
            output_weights,
            hyperparams,
        })
    }

    /// `[Zⁿ | Hᵐ]` for already mixed mapped features.
    pub fn features(&self, zn: &RealMatrix) -> Result<RealMatrix> {
        let hm = enhancement_features(zn, &self.enhancement_keys, self.hyperparams.activation)?;
        Ok(zn.hstack(&hm)?)
    }

    pub fn predict(&self, zn: &RealMatrix) -> Result<Vec<usize>> {
        predict(&self.features(zn)?, &self.output_weights)
    }

    pub fn classes(&self) -> usize {
        self.output_weights.cols()
    }
}
