use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NumericsError, RealMatrix, Result};

/// Generator name echoed into experiment metadata.
pub const RNG_ALGORITHM: &str = "chacha20";

/// Seeded, single-owner random stream.
///
/// A `(seed, stream)` pair names one independent ChaCha20 keystream, so
/// parties and sessions that share an experiment seed still draw from
/// disjoint sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixDistribution {
    StandardNormal,
    /// Uniform on `[lo, hi)`; `lo == hi` yields the constant `lo`.
    Uniform { lo: f64, hi: f64 },
}

impl MatrixDistribution {
    pub fn symmetric_uniform(half_width: f64) -> Self {
        MatrixDistribution::Uniform {
            lo: -half_width,
            hi: half_width,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            MatrixDistribution::StandardNormal => Ok(()),
            MatrixDistribution::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            MatrixDistribution::Uniform { lo, hi } => Err(NumericsError::InvalidDistribution(format!(
                "uniform bounds must be finite with lo <= hi, got [{lo}, {hi})"
            ))),
        }
    }
}

/// Draw a `rows x cols` matrix with i.i.d. entries, one draw per entry in
/// row-major order.
pub fn random_matrix(rows: usize, cols: usize, dist: MatrixDistribution, rng: &mut RngStream) -> Result<RealMatrix> {
    dist.validate()?;
    match dist {
        MatrixDistribution::StandardNormal => RealMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal)),
        MatrixDistribution::Uniform { lo, hi } => {
            let width = hi - lo;
            RealMatrix::from_fn(rows, cols, |_, _| {
                let u: f64 = rng.gen();
                // `0.0 + 0.0 * u` keeps degenerate zero-width draws at +0.
                if width == 0.0 {
                    lo + 0.0 * u
                } else {
                    lo + width * u
                }
            })
        }
    }
}
