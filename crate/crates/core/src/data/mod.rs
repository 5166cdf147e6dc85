//! Datasets: the synthetic generator, CSV ingestion, standardization and
//! k-fold splitting.

mod csv_io;
mod split;
mod synthetic;
mod transform;

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::strategic::{Label, LabeledExample};

pub use csv_io::{load_csv, load_csv_with, write_csv, CsvOptions};
pub use split::{kfold, FoldSplit};
pub use synthetic::{gen_synthetic, SyntheticConfig};
pub use transform::{standardize, Standardizer, STD_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic(SyntheticConfig),
    File(PathBuf),
    /// Derived from another dataset by selection or transformation.
    Derived(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub feature_names: Vec<String>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Checks that every example has `feature_names.len()` features.
    pub fn new(
        examples: Vec<LabeledExample>,
        feature_names: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::Schema("dataset needs at least one feature".into()));
        }
        for (row, ex) in examples.iter().enumerate() {
            if ex.dim() != d {
                return Err(Error::Schema(format!("example {row} has {} features, expected {d}", ex.dim())));
            }
        }
        Ok(Self { examples, feature_names, provenance })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn positive_count(&self) -> usize {
        self.examples.iter().filter(|ex| ex.label == Label::Positive).count()
    }

    /// Examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Vec<LabeledExample>> {
        indices
            .iter()
            .map(|&i| {
                self.examples.get(i).cloned().ok_or_else(|| {
                    Error::config(format!("index {i} out of range for {} examples", self.len()))
                })
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            examples: self.select(indices)?,
            feature_names: self.feature_names.clone(),
            provenance: Provenance::Derived(format!("subset of {} rows", indices.len())),
        })
    }
}

/// Default names `x0, x1, …`.
pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}
