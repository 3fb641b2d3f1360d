//! The arithmetic of each protocol step, free of any messaging.
//!
//! One cross-product pass computes `X̄ W` where the data holder owns `X̄`
//! and the key holder owns `W`:
//!
//! ```text
//! data holder:  X* = X̄ + R_A
//! key holder:   W* = W + R_B,  E₁ = X* W + R_b
//! data holder:  E₂ = E₁ − R_A W*          (= X̄ W + R_b − R_A R_B)
//! server:       X̄ W = E₂ − R_b + R_A R_B
//! ```

use serde::{Deserialize, Serialize};

use crate::numerics::{random_matrix, MatrixDistribution, NumericsError, RealMatrix, RngStream};

use super::{ProtocolError, SessionParams};

/// Half-width of the uniform mask distribution. Zero disables masking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub half_width: f64,
}

impl MaskConfig {
    pub const DEFAULT_HALF_WIDTH: f64 = 1e3;

    pub fn zero() -> Self {
        Self { half_width: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.half_width == 0.0
    }

    fn distribution(&self) -> Result<MatrixDistribution, ProtocolError> {
        if !(self.half_width >= 0.0 && self.half_width.is_finite()) {
            return Err(ProtocolError::Config(format!(
                "mask half-width must be finite and non-negative, got {}",
                self.half_width
            )));
        }
        Ok(MatrixDistribution::symmetric_uniform(self.half_width))
    }
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            half_width: Self::DEFAULT_HALF_WIDTH,
        }
    }
}

/// Masks of one pass: `R_A` for the data holder, `(R_B, R_b)` for the key
/// holder.
#[derive(Debug, Clone, PartialEq)]
pub struct PassMasks {
    /// `R_A`, `N_holder x (d+1)`.
    pub data: RealMatrix,
    /// `R_B`, `(d+1) x nd_z/2`.
    pub key: RealMatrix,
    /// `R_b`, `N_holder x nd_z/2`.
    pub bias: RealMatrix,
}

impl PassMasks {
    fn draw(rows: usize, params: &SessionParams, dist: MatrixDistribution, rng: &mut RngStream) -> Result<Self, NumericsError> {
        let (cols, half) = (params.input_dim + 1, params.half_width());
        Ok(Self {
            data: random_matrix(rows, cols, dist, rng)?,
            key: random_matrix(cols, half, dist, rng)?,
            bias: random_matrix(rows, half, dist, rng)?,
        })
    }

    pub(crate) fn wipe(&mut self) {
        self.data.wipe();
        self.key.wipe();
        self.bias.wipe();
    }
}

/// Both passes' masks. `first` blinds client A's rows against `W_B`,
/// `second` blinds client B's rows against `W_A`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub first: PassMasks,
    pub second: PassMasks,
}

impl MaskSet {
    pub fn pass(&self, second: bool) -> &PassMasks {
        if second {
            &self.second
        } else {
            &self.first
        }
    }
}

/// Draw a fresh mask set for a session.
pub fn draw_masks(params: &SessionParams, config: MaskConfig, rng: &mut RngStream) -> Result<MaskSet, ProtocolError> {
    params.validate()?;
    let dist = config.distribution()?;
    Ok(MaskSet {
        first: PassMasks::draw(params.rows_a, params, dist, rng)?,
        second: PassMasks::draw(params.rows_b, params, dist, rng)?,
    })
}

/// `X* = X̄ + R_A`
pub fn blind_data(x_aug: &RealMatrix, data_mask: &RealMatrix) -> Result<RealMatrix, NumericsError> {
    x_aug.add(data_mask)
}

/// Key holder's step: `(W* = W + R_B, E₁ = X* W + R_b)`.
pub fn blind_key_and_product(
    blinded_data: &RealMatrix,
    key: &RealMatrix,
    key_mask: &RealMatrix,
    bias_mask: &RealMatrix,
) -> Result<(RealMatrix, RealMatrix), NumericsError> {
    let blinded_key = key.add(key_mask)?;
    let e1 = blinded_data.matmul(key)?.add(bias_mask)?;
    Ok((blinded_key, e1))
}

/// Data holder's step: `E₂ = E₁ − R_A W*`.
pub fn unblind_product(e1: &RealMatrix, blinded_key: &RealMatrix, data_mask: &RealMatrix) -> Result<RealMatrix, NumericsError> {
    e1.sub(&data_mask.matmul(blinded_key)?)
}

/// Server's step: `X̄ W = E₂ − R_b + R_A R_B`.
pub fn server_recover_cross(
    e2: &RealMatrix,
    bias_mask: &RealMatrix,
    data_mask: &RealMatrix,
    key_mask: &RealMatrix,
) -> Result<RealMatrix, NumericsError> {
    e2.sub(bias_mask)?.add(&data_mask.matmul(key_mask)?)
}

/// `X̄ W` computed locally by a client for its own key half.
pub fn own_product(x_aug: &RealMatrix, key: &RealMatrix) -> Result<RealMatrix, NumericsError> {
    x_aug.matmul(key)
}

/// The four products `X̄_A W_A`, `X̄_A W_B`, `X̄_B W_A`, `X̄_B W_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBlocks {
    pub aa: RealMatrix,
    pub ab: RealMatrix,
    pub ba: RealMatrix,
    pub bb: RealMatrix,
}

impl ProductBlocks {
    pub(crate) fn wipe(&mut self) {
        self.aa.wipe();
        self.ab.wipe();
        self.ba.wipe();
        self.bb.wipe();
    }
}

/// `Zⁿ = [[X̄_A W_A, X̄_A W_B], [X̄_B W_A, X̄_B W_B]] W₁`, rows of A first.
pub fn assemble_mapped_features(blocks: &ProductBlocks, mix_key: &RealMatrix) -> Result<RealMatrix, NumericsError> {
    let top = blocks.aa.hstack(&blocks.ab)?;
    let bottom = blocks.ba.hstack(&blocks.bb)?;
    top.vstack(&bottom)?.matmul(mix_key)
}
