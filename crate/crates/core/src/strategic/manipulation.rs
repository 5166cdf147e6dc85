//! Inner stage: agents best-respond to a published linear rule by trading the
//! score gain `W·x'` against the Mahalanobis cost `(x' - x)ᵀ M (x' - x)`.

use nalgebra::{Cholesky, DVector, Dyn};

use super::types::{
    AdaptationMatrix, CostMatrix, FeatureVector, Label, LabeledExample, LinearClassifier, ManipulationConfig,
    ManipulationDelta,
};
use crate::error::{ensure_len, Error, Result};

pub fn mahalanobis_cost(x: &FeatureVector, x2: &FeatureVector, cost: &CostMatrix) -> Result<f64> {
    ensure_len("mahalanobis_cost", x.dim(), x2.dim())?;
    ensure_len("mahalanobis_cost", cost.dim(), x.dim())?;
    let diff = x2.as_vector() - x.as_vector();
    // Quadratic forms of an SPD matrix are >= 0; clamp rounding noise.
    Ok(diff.dot(&(cost.matrix() * &diff)).max(0.0))
}

fn factor(cfg: &ManipulationConfig) -> Result<Cholesky<f64, Dyn>> {
    cfg.system_matrix()
        .cholesky()
        .ok_or_else(|| Error::CostMatrix("I + 2ηλM is not positive definite".into()))
}

/// Forms `A = (I + 2ηλM)⁻¹` explicitly. Agents never need this (they solve the
/// system instead); the attention construction and tests do.
pub fn adaptation_matrix(cfg: &ManipulationConfig) -> Result<AdaptationMatrix> {
    Ok(AdaptationMatrix(factor(cfg)?.inverse()))
}

fn check_dims(
    x: &FeatureVector,
    x2: &FeatureVector,
    clf: &LinearClassifier,
    cfg: &ManipulationConfig,
) -> Result<()> {
    ensure_len("manipulation loss", x.dim(), x2.dim())?;
    ensure_len("manipulation loss", x.dim(), clf.dim())?;
    ensure_len("manipulation loss", x.dim(), cfg.dim())
}

/// Per-sample utility-aligned loss
/// `y·c(x,x') + (1 − y)·(1 − f(x') + λ·c(x,x'))`, with `f` the raw score.
pub fn manipulation_loss(
    x: &FeatureVector,
    x2: &FeatureVector,
    y: Label,
    clf: &LinearClassifier,
    cfg: &ManipulationConfig,
) -> Result<f64> {
    check_dims(x, x2, clf, cfg)?;
    let c = mahalanobis_cost(x, x2, &cfg.cost)?;
    let y = y.value();
    let score = clf.weights().dot(x2.as_vector());
    Ok(y * c + (1.0 - y) * (1.0 - score + cfg.lambda * c))
}

/// Batch form of [`manipulation_loss`], averaged over the batch (the 1/N
/// factor is applied here and only here).
pub fn manipulation_loss_batch(
    originals: &[LabeledExample],
    manipulated: &[FeatureVector],
    clf: &LinearClassifier,
    cfg: &ManipulationConfig,
) -> Result<f64> {
    ensure_len("manipulation loss batch", originals.len(), manipulated.len())?;
    if originals.is_empty() {
        return Err(Error::config("manipulation loss over an empty batch"));
    }
    let mut total = 0.0;
    for (ex, x2) in originals.iter().zip(manipulated) {
        total += manipulation_loss(&ex.features, x2, ex.label, clf, cfg)?;
    }
    Ok(total / originals.len() as f64)
}

/// Gradient of the per-sample loss with respect to `x'` (no 1/N factor):
/// `y·2M(x'−x) + (1−y)(−Wᵀ + 2λM(x'−x))`.
pub fn manipulation_loss_grad(
    x: &FeatureVector,
    x2: &FeatureVector,
    y: Label,
    clf: &LinearClassifier,
    cfg: &ManipulationConfig,
) -> Result<DVector<f64>> {
    check_dims(x, x2, clf, cfg)?;
    let m_diff = cfg.cost.matrix() * (x2.as_vector() - x.as_vector());
    Ok(match y {
        Label::Positive => m_diff * 2.0,
        Label::Negative => m_diff * (2.0 * cfg.lambda) - clf.weights(),
    })
}

/// Closed-form best response of a negative agent to a fixed rule. The step
/// does not depend on the agent's own features, so it is solved once and
/// reused for a whole batch.
#[derive(Debug, Clone)]
pub struct Responder {
    step: DVector<f64>,
}

impl Responder {
    pub fn new(clf: &LinearClassifier, cfg: &ManipulationConfig) -> Result<Self> {
        ensure_len("manipulation step", cfg.dim(), clf.dim())?;
        let rhs = clf.weights() * cfg.eta;
        let step = factor(cfg)?.solve(&rhs);
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::CostMatrix("manipulation solve produced non-finite values".into()));
        }
        Ok(Self { step })
    }

    /// Δx for an agent with label `y`; exactly zero for positives.
    pub fn delta(&self, y: Label) -> ManipulationDelta {
        match y {
            Label::Positive => ManipulationDelta(DVector::zeros(self.step.len())),
            Label::Negative => ManipulationDelta(self.step.clone()),
        }
    }

    pub fn respond(&self, ex: &LabeledExample) -> Result<LabeledExample> {
        ensure_len("best response", self.step.len(), ex.dim())?;
        let features = match ex.label {
            Label::Positive => ex.features.clone(),
            Label::Negative => ex.features.shifted(&self.step)?,
        };
        Ok(LabeledExample::new(features, ex.label))
    }

    /// ‖Δx‖ for a negative agent.
    pub fn magnitude(&self) -> f64 {
        self.step.norm()
    }
}

/// Solves `(I + 2ηλM)Δx = η(1 − y)Wᵀ`.
pub fn manipulation_step(
    ex: &LabeledExample,
    clf: &LinearClassifier,
    cfg: &ManipulationConfig,
) -> Result<ManipulationDelta> {
    ensure_len("manipulation step", cfg.dim(), ex.dim())?;
    if ex.label.is_positive() {
        ensure_len("manipulation step", cfg.dim(), clf.dim())?;
        return Ok(ManipulationDelta(DVector::zeros(ex.dim())));
    }
    Ok(Responder::new(clf, cfg)?.delta(ex.label))
}

/// Every agent moves to `x + Δx`; labels are never touched.
pub fn best_response_batch(
    data: &[LabeledExample],
    clf: &LinearClassifier,
    cfg: &ManipulationConfig,
) -> Result<Vec<LabeledExample>> {
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let responder = Responder::new(clf, cfg)?;
    data.iter().map(|ex| responder.respond(ex)).collect()
}

/// Residual `‖(I + 2ηλM)Δx − η(1−y)Wᵀ‖∞`.
pub fn manipulation_residual(
    delta: &ManipulationDelta,
    y: Label,
    clf: &LinearClassifier,
    cfg: &ManipulationConfig,
) -> f64 {
    let lhs: DVector<f64> = cfg.system_matrix() * delta.vector();
    let rhs: DVector<f64> = clf.weights() * (cfg.eta * (1.0 - y.value()));
    (lhs - rhs).amax()
}
