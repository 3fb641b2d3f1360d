use crate::bls::{random_enhancement_keys, random_mix_key, BlsHyperParams, EnhancementKey};
use crate::numerics::{random_matrix, MatrixDistribution, RealMatrix, RngStream};

use super::Result;

/// Stream indices under one experiment seed. Every consumer of randomness
/// owns its own stream, so adding a draw in one place never shifts another.
pub mod streams {
    pub const KEY_A: u64 = 1;
    pub const KEY_B: u64 = 2;
    pub const MIX: u64 = 3;
    pub const ENHANCEMENT: u64 = 4;
    pub const MASKS_TRAIN: u64 = 5;
    pub const MASKS_TEST: u64 = 6;
    pub const SESSION_IDS: u64 = 7;
}

/// All model keys of one seed. The secure and plaintext runs draw identical
/// keys, which is what makes them comparable.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentKeys {
    /// `W_A`, `(d+1) x n·d_z/2`, drawn by client A.
    pub key_a: RealMatrix,
    /// `W_B`, drawn by client B.
    pub key_b: RealMatrix,
    /// `W₁`, drawn by the server.
    pub mix: RealMatrix,
    pub enhancement: Vec<EnhancementKey>,
}

impl ExperimentKeys {
    pub fn generate(hp: &BlsHyperParams, input_dim: usize, seed: u64) -> Result<Self> {
        hp.validate()?;
        let half = |stream| {
            random_matrix(
                input_dim + 1,
                hp.half_width(),
                MatrixDistribution::StandardNormal,
                &mut RngStream::with_stream(seed, stream),
            )
        };
        Ok(Self {
            key_a: half(streams::KEY_A)?,
            key_b: half(streams::KEY_B)?,
            mix: random_mix_key(hp, &mut Self::mix_rng(seed))?,
            enhancement: random_enhancement_keys(hp, &mut RngStream::with_stream(seed, streams::ENHANCEMENT))?,
        })
    }

    /// The stream the server draws `W₁` from.
    pub fn mix_rng(seed: u64) -> RngStream {
        RngStream::with_stream(seed, streams::MIX)
    }

    /// `W₀ = [W_A | W_B]`
    pub fn mapping_key(&self) -> Result<RealMatrix> {
        Ok(self.key_a.hstack(&self.key_b)?)
    }
}
