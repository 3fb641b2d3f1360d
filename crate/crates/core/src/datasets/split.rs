use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledDataset, Result};
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Client A receives `round(ratio_a · N)` uniformly drawn rows.
    Quantity { ratio_a: f64 },
    /// Classes sorted by size; the first half of the rows go to A.
    NonIid,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitMode::Quantity { ratio_a } => write!(f, "quantity:{ratio_a}"),
            SplitMode::NonIid => f.write_str("noniid"),
        }
    }
}

impl FromStr for SplitMode {
    type Err = String;

    /// `quantity:0.3`, `noniid` or `non-iid`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "noniid" || s == "non-iid" || s == "non_iid" {
            return Ok(SplitMode::NonIid);
        }
        let ratio = s
            .strip_prefix("quantity:")
            .ok_or_else(|| format!("unknown split `{s}` (expected quantity:<ratio> or noniid)"))?;
        let ratio_a: f64 = ratio.parse().map_err(|_| format!("bad ratio `{ratio}`"))?;
        if !(ratio_a > 0.0 && ratio_a < 1.0) {
            return Err(format!("ratio {ratio_a} must lie strictly between 0 and 1"));
        }
        Ok(SplitMode::Quantity { ratio_a })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
}

pub fn split(ds: &LabeledDataset, plan: &SplitPlan) -> Result<(LabeledDataset, LabeledDataset)> {
    match plan.mode {
        SplitMode::Quantity { ratio_a } => split_quantity(ds, ratio_a, plan.seed),
        SplitMode::NonIid => split_non_iid(ds),
    }
}

fn parts(ds: &LabeledDataset, mut a: Vec<usize>, mut b: Vec<usize>) -> Result<(LabeledDataset, LabeledDataset)> {
    a.sort_unstable();
    b.sort_unstable();
    Ok((
        ds.subset(format!("{}/A", ds.name), &a)?,
        ds.subset(format!("{}/B", ds.name), &b)?,
    ))
}

/// Uniform random partition without replacement. Both parts keep the
/// original row order.
pub fn split_quantity(ds: &LabeledDataset, ratio_a: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(ratio_a > 0.0 && ratio_a < 1.0) {
        return Err(DatasetError::Split(format!("ratio {ratio_a} must lie strictly between 0 and 1")));
    }
    let n = ds.len();
    let n_a = (ratio_a * n as f64).round() as usize;
    if n_a == 0 || n_a >= n {
        return Err(DatasetError::Split(format!(
            "ratio {ratio_a} of {n} rows leaves a client with no data"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStream::new(seed));
    let b = order.split_off(n_a);
    parts(ds, order, b)
}

/// Stable sort by (class size, class index, row index); the first ⌈N/2⌉ rows
/// go to A. The clients then share at most the one class straddling the cut.
pub fn split_non_iid(ds: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    if ds.classes() < 2 || ds.len() < 2 {
        return Err(DatasetError::Split("non-IID split needs at least two classes and two rows".into()));
    }
    let counts = ds.class_counts();
    let labels = ds.labels();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| (counts[labels[i]], labels[i], i));
    let b = order.split_off(ds.len().div_ceil(2));
    parts(ds, order, b)
}
