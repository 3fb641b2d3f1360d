//! End-to-end runs: secure training (MSBLS) and the two plaintext baselines,
//! each producing one [`MetricsReport`] per trained model.

mod keys;
mod report;
mod runners;

pub use keys::{streams, ExperimentKeys};
pub use report::{accuracy, summary_table, MetricsReport, ModelKind};
pub use runners::{
    fit_msbls, fit_non_privacy_bls, fit_single_party, run_experiment, run_msbls, run_non_privacy_bls,
    run_replicate, run_single_party, split_test_rows, FittedModel, MsblsFit, RunContext,
};

use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bls::{BlsError, BlsHyperParams};
use crate::datasets::{DatasetError, SplitPlan};
use crate::numerics::NumericsError;
use crate::protocol::{MaskConfig, ProtocolError};
use crate::transport::TransportError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Bls(#[from] BlsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("protocol aborted: {0}")]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// Which models a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Msbls,
    NonPrivacyBls,
    SinglePartyBls,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Msbls, Baseline::NonPrivacyBls, Baseline::SinglePartyBls];
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Msbls => "msbls",
            Baseline::NonPrivacyBls => "nbls",
            Baseline::SinglePartyBls => "sbls",
        })
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "msbls" => Ok(Baseline::Msbls),
            "nbls" | "non_privacy_bls" | "non-privacy-bls" => Ok(Baseline::NonPrivacyBls),
            "sbls" | "single_party_bls" | "single-party-bls" => Ok(Baseline::SinglePartyBls),
            other => Err(format!("unknown baseline `{other}` (expected msbls, nbls or sbls)")),
        }
    }
}

/// Listen addresses of the three roles, server first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpAddrs {
    pub server: SocketAddr,
    pub client_a: SocketAddr,
    pub client_b: SocketAddr,
}

impl TcpAddrs {
    /// Ephemeral loopback ports for all roles.
    pub fn loopback() -> Self {
        let any = SocketAddr::from(([127, 0, 0, 1], 0));
        Self {
            server: any,
            client_a: any,
            client_b: any,
        }
    }

    pub fn as_array(&self) -> [SocketAddr; 3] {
        [self.server, self.client_a, self.client_b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportChoice {
    InProcess,
    Tcp(TcpAddrs),
}

impl fmt::Display for TransportChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportChoice::InProcess => "inproc",
            TransportChoice::Tcp(_) => "tcp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub name: String,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetPaths,
    /// Use only the first rows of each file, if set.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub split: SplitPlan,
    pub hyperparams: BlsHyperParams,
    pub transport: TransportChoice,
    pub mask: MaskConfig,
    pub baselines: Vec<Baseline>,
    /// Repetition `r` uses seed `hyperparams.seed + r`.
    pub repetitions: usize,
    /// How many repetitions may run at once.
    pub parallel_runs: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.baselines.is_empty() {
            return Err(ExperimentError::Config("select at least one baseline".into()));
        }
        if self.repetitions == 0 {
            return Err(ExperimentError::Config("repetitions must be at least 1".into()));
        }
        if self.parallel_runs == 0 {
            return Err(ExperimentError::Config("parallel runs must be at least 1".into()));
        }
        self.hyperparams.validate()?;
        Ok(())
    }
}
