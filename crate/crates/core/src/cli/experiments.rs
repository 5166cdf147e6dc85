//! Cross-validated comparison of the strategic and non-strategic policies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::strategic::{bilevel_run, BiLevelConfig, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAccuracy {
    pub fold: usize,
    pub strategic: f64,
    pub non_strategic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub folds: Vec<FoldAccuracy>,
    pub strategic: MeanStd,
    pub non_strategic: MeanStd,
}

impl PolicyTable {
    /// Strategic minus non-strategic mean accuracy.
    pub fn gap(&self) -> f64 {
        self.strategic.mean - self.non_strategic.mean
    }
}

/// `k`-fold final test accuracy of both policies.
///
/// Each fold standardizes with statistics fitted on its training part only,
/// and both policies in fold `i` start from the rule seeded by `seed + i`.
/// Folds run in parallel and are reported in fold order.
pub fn policy_table(data: &Dataset, cfg: &BiLevelConfig, folds: usize, seed: u64) -> Result<PolicyTable> {
    if data.dim() != cfg.manipulation.dim() {
        return Err(Error::config(format!(
            "data has {} features but the cost matrix is {}-dimensional",
            data.dim(),
            cfg.manipulation.dim()
        )));
    }
    let splits = kfold(data.len(), folds, seed)?;
    let rows: Vec<FoldAccuracy> = splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| {
            let train_raw = data.select(&split.train)?;
            let scaler = Standardizer::fit(&train_raw)?;
            let train = scaler.apply(&train_raw)?;
            let test = scaler.apply(&data.select(&split.test)?)?;
            let fold_seed = seed.wrapping_add(i as u64);
            let run = |policy| bilevel_run(&train, &test, cfg, policy, fold_seed).map(|h| h.final_accuracy());
            Ok(FoldAccuracy {
                fold: i,
                strategic: run(Policy::Strategic)?,
                non_strategic: run(Policy::NonStrategic)?,
            })
        })
        .collect::<Result<_>>()?;
    let s: Vec<f64> = rows.iter().map(|r| r.strategic).collect();
    let ns: Vec<f64> = rows.iter().map(|r| r.non_strategic).collect();
    Ok(PolicyTable { strategic: MeanStd::of(&s), non_strategic: MeanStd::of(&ns), folds: rows })
}
