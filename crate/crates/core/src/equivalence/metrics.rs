use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::strategic::FeatureVector;

/// Norms below this make a cosine meaningless.
pub const ZERO_NORM: f64 = 1e-15;
/// Variance floor applied to both arguments of [`kl_gaussian`].
pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cosine {
    pub value: f64,
    /// Set when either input had (near) zero norm; `value` is then 0.
    pub zero_vector: bool,
}

pub fn cosine_similarity(a: &DVector<f64>, b: &DVector<f64>) -> Result<Cosine> {
    ensure_len("cosine similarity", a.len(), b.len())?;
    let (na, nb) = (a.norm(), b.norm());
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Ok(Cosine { value: 0.0, zero_vector: true });
    }
    // sqrt(fl(s²)) == s in binary floating point, so cos(a, a) is exactly 1.
    let joint = (a.norm_squared() * b.norm_squared()).sqrt();
    let denom = if joint.is_normal() { joint } else { na * nb };
    Ok(Cosine { value: (a.dot(b) / denom).clamp(-1.0, 1.0), zero_vector: false })
}

pub fn l2_distance(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    ensure_len("l2 distance", a.len(), b.len())?;
    Ok((a - b).norm())
}

/// Diagonal Gaussian fit: per-feature mean and unbiased variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub count: usize,
}

impl DistributionSummary {
    /// A single point yields zero variance.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a DVector<f64>>) -> Result<Self> {
        let points: Vec<&DVector<f64>> = points.into_iter().collect();
        let first = points.first().ok_or_else(|| Error::config("cannot summarize an empty sample"))?;
        let d = first.len();
        let n = points.len();
        let mut mean = DVector::zeros(d);
        for p in &points {
            ensure_len("distribution summary", d, p.len())?;
            mean += *p;
        }
        mean /= n as f64;
        let mut var = DVector::zeros(d);
        if n >= 2 {
            for p in &points {
                let c = *p - &mean;
                var += c.component_mul(&c);
            }
            var /= (n - 1) as f64;
        }
        Ok(Self { mean: mean.as_slice().to_vec(), variance: var.as_slice().to_vec(), count: n })
    }

    pub fn from_features(features: &[FeatureVector]) -> Result<Self> {
        Self::from_points(features.iter().map(|f| f.as_vector()))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `KL(p‖q)` between diagonal Gaussians, with both variances floored.
pub fn kl_gaussian(p: &DistributionSummary, q: &DistributionSummary) -> Result<f64> {
    ensure_len("kl divergence", p.dim(), q.dim())?;
    let mut total = 0.0;
    for k in 0..p.dim() {
        let vp = p.variance[k].max(VARIANCE_FLOOR);
        let vq = q.variance[k].max(VARIANCE_FLOOR);
        let dm = p.mean[k] - q.mean[k];
        total += 0.5 * (vq / vp).ln() + (vp + dm * dm) / (2.0 * vq) - 0.5;
    }
    Ok(total.max(0.0))
}

/// `‖mean(after) − mean(before)‖`.
pub fn mean_shift(before: &[FeatureVector], after: &[FeatureVector]) -> Result<f64> {
    if before.is_empty() || after.is_empty() {
        return Err(Error::config("mean shift needs non-empty samples"));
    }
    if before.len() != after.len() {
        return Err(Error::config(format!(
            "mean shift needs equal counts, got {} and {}",
            before.len(),
            after.len()
        )));
    }
    let a = DistributionSummary::from_features(before)?;
    let b = DistributionSummary::from_features(after)?;
    l2_distance(&DVector::from_vec(b.mean), &DVector::from_vec(a.mean))
}
