use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{default_feature_names, Dataset, Provenance};
use crate::error::{Error, Result};
use crate::strategic::{Label, LabeledExample};

/// Class-conditional isotropic Gaussians: `x | y ~ N(class_means[y], class_scale² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub d: usize,
    pub n: usize,
    /// Indexed by label: `[negative mean, positive mean]`.
    pub class_means: [Vec<f64>; 2],
    pub class_scale: f64,
    pub positive_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self::symmetric(8, 2000, 0.8, 2.5, 0)
    }
}

impl SyntheticConfig {
    /// Means `±offset·1`, balanced classes.
    pub fn symmetric(d: usize, n: usize, offset: f64, class_scale: f64, seed: u64) -> Self {
        Self {
            d,
            n,
            class_means: [vec![-offset; d], vec![offset; d]],
            class_scale,
            positive_fraction: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("synthetic d must be >= 1"));
        }
        if self.n == 0 {
            return Err(Error::config("synthetic n must be >= 1"));
        }
        for mean in &self.class_means {
            if mean.len() != self.d {
                return Err(Error::config(format!(
                    "class mean has length {}, expected d = {}",
                    mean.len(),
                    self.d
                )));
            }
            if mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("class means must be finite"));
            }
        }
        if !(self.class_scale > 0.0 && self.class_scale.is_finite()) {
            return Err(Error::config(format!("class_scale must be > 0, got {}", self.class_scale)));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(Error::config(format!(
                "positive_fraction must lie in (0, 1), got {}",
                self.positive_fraction
            )));
        }
        Ok(())
    }
}

pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut examples = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let label =
            if rng.random::<f64>() < cfg.positive_fraction { Label::Positive } else { Label::Negative };
        let mean = &cfg.class_means[label.as_u8() as usize];
        let values: Vec<f64> = mean
            .iter()
            .map(|m| {
                let z: f64 = rng.sample(StandardNormal);
                m + cfg.class_scale * z
            })
            .collect();
        examples.push(LabeledExample::from_parts(values, label.as_u8())?);
    }
    Dataset::new(examples, default_feature_names(cfg.d), Provenance::Synthetic(cfg.clone()))
}
