use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bls::BlsHyperParams;

use super::{ExperimentError, Result};

/// The model a report describes. Single-party runs produce one report per
/// client plus their mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Msbls,
    NonPrivacyBls,
    SinglePartyA,
    SinglePartyB,
    SinglePartyMean,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Msbls => "MSBLS",
            ModelKind::NonPrivacyBls => "N-BLS",
            ModelKind::SinglePartyA => "S-BLS(A)",
            ModelKind::SinglePartyB => "S-BLS(B)",
            ModelKind::SinglePartyMean => "S-BLS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: ModelKind,
    pub dataset: String,
    pub split: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub train_rows_a: usize,
    pub train_rows_b: usize,
    pub test_rows: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Wall time of feature generation plus the readout solve.
    pub train_time_s: f64,
    /// Messages of the training session (12 for MSBLS, 0 otherwise).
    pub message_count: usize,
    pub bytes_on_wire: usize,
    /// Messages and bytes of the session that maps the test set.
    pub test_message_count: usize,
    pub test_bytes_on_wire: usize,
    pub transport: String,
    pub mask_half_width: f64,
    pub hyperparams: BlsHyperParams,
}

impl MetricsReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

/// Fraction of positions where `predictions` equals `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(ExperimentError::Config(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(ExperimentError::Config("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Plain-text table, one row per (split, seed), one column pair per model.
pub fn summary_table(reports: &[MetricsReport]) -> String {
    let mut models: Vec<ModelKind> = Vec::new();
    let mut rows: Vec<(String, u64)> = Vec::new();
    for r in reports {
        if !models.contains(&r.model) {
            models.push(r.model);
        }
        let key = (r.split.clone(), r.seed);
        if !rows.contains(&key) {
            rows.push(key);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<16} {:>6}", "split", "seed");
    for m in &models {
        let _ = write!(out, " | {:>9} {:>9} {:>8}", format!("{} tr", m.label()), "test", "time(s)");
    }
    out.push('\n');
    for (split, seed) in &rows {
        let _ = write!(out, "{split:<16} {seed:>6}");
        for m in &models {
            match reports.iter().find(|r| &r.split == split && r.seed == *seed && r.model == *m) {
                Some(r) => {
                    let _ = write!(
                        out,
                        " | {:>8.2}% {:>8.2}% {:>8.2}",
                        100.0 * r.train_accuracy,
                        100.0 * r.test_accuracy,
                        r.train_time_s
                    );
                }
                None => {
                    let _ = write!(out, " | {:>9} {:>9} {:>8}", "-", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
