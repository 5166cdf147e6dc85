use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{ensure_len, Error, Result};
use crate::strategic::{FeatureVector, LabeledExample};

/// Standard deviations below this are replaced by it.
pub const STD_FLOOR: f64 = 1e-9;

/// Per-feature mean and (population) standard deviation of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(examples: &[LabeledExample]) -> Result<Self> {
        let first = examples.first().ok_or_else(|| Error::config("cannot standardize an empty dataset"))?;
        let d = first.dim();
        let n = examples.len() as f64;
        let mut mean = vec![0.0; d];
        for ex in examples {
            ensure_len("standardize", d, ex.dim())?;
            for (m, v) in mean.iter_mut().zip(ex.features.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for ex in examples {
            for ((s, v), m) in var.iter_mut().zip(ex.features.iter()).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn apply_one(&self, ex: &LabeledExample) -> Result<LabeledExample> {
        ensure_len("standardize", self.mean.len(), ex.dim())?;
        let values =
            ex.features.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect();
        Ok(LabeledExample::new(FeatureVector::new(values)?, ex.label))
    }

    pub fn apply(&self, examples: &[LabeledExample]) -> Result<Vec<LabeledExample>> {
        examples.iter().map(|ex| self.apply_one(ex)).collect()
    }
}

/// Fits a [`Standardizer`] on `ds` and applies it.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let st = Standardizer::fit(&ds.examples)?;
    let examples = st.apply(&ds.examples)?;
    let out = Dataset {
        examples,
        feature_names: ds.feature_names.clone(),
        provenance: Provenance::Derived("standardized".into()),
    };
    Ok((out, st))
}
