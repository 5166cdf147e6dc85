//! Outer stage: the decision maker updates `W` by a gradient step on the
//! summed cross-entropy of the (possibly manipulated) batch.

use nalgebra::DVector;

use super::types::{FeatureVector, Label, LabeledExample, LinearClassifier, ScoreLink};
use crate::error::{ensure_len, Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log or
/// division.
pub const PROB_EPS: f64 = 1e-7;

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Raw score `W·x`, never squashed.
pub fn predict(clf: &LinearClassifier, x: &FeatureVector) -> Result<f64> {
    ensure_len("predict", clf.dim(), x.dim())?;
    Ok(clf.weights().dot(x.as_vector()))
}

/// Positive iff the raw score reaches the threshold (ties go positive).
pub fn classify(clf: &LinearClassifier, x: &FeatureVector) -> Result<Label> {
    Ok(if predict(clf, x)? >= clf.threshold() { Label::Positive } else { Label::Negative })
}

pub fn accuracy(clf: &LinearClassifier, data: &[LabeledExample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::config("accuracy over an empty batch"));
    }
    let mut hits = 0usize;
    for ex in data {
        if classify(clf, &ex.features)? == ex.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    /// Set when the batch was empty and `value` is a placeholder 0.
    pub degenerate: bool,
}

/// `−Σⱼ [yⱼ log pⱼ + (1−yⱼ) log(1−pⱼ)]`, summed (not averaged), with
/// `pⱼ = link(W·x'ⱼ)` clamped.
pub fn cross_entropy_loss(clf: &LinearClassifier, data: &[LabeledExample]) -> Result<CrossEntropy> {
    if data.is_empty() {
        return Ok(CrossEntropy { value: 0.0, degenerate: true });
    }
    let mut scored = Vec::with_capacity(data.len());
    for ex in data {
        scored.push((ex.label, predict(clf, &ex.features)?));
    }
    Ok(cross_entropy_from_scores(clf.link(), &scored))
}

/// Summed cross-entropy of precomputed `(label, raw score)` pairs.
pub fn cross_entropy_from_scores(link: ScoreLink, scored: &[(Label, f64)]) -> CrossEntropy {
    let mut total = 0.0;
    for &(label, score) in scored {
        let p = clamp_probability(link.probability(score));
        let y = label.value();
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    CrossEntropy { value: total, degenerate: scored.is_empty() }
}

/// Per-token factor `cᵢ` with `ΔW = η Σᵢ cᵢ x'ᵢ`.
///
/// For the identity link this is `y/s − (1−y)/(1−s)` with the clamped score in
/// the denominators; for the logistic link the chain rule through the sigmoid
/// collapses it to `y − σ(s)`.
pub fn score_coefficient(link: ScoreLink, y: Label, score: f64) -> f64 {
    let y = y.value();
    let p = clamp_probability(link.probability(score));
    match link {
        ScoreLink::Identity => y / p - (1.0 - y) / (1.0 - p),
        ScoreLink::Logistic => y - p,
    }
}

/// `ΔW = η Σⱼ cⱼ x'ⱼ`, an ascent step on the log-likelihood.
pub fn decision_grad(clf: &LinearClassifier, data: &[LabeledExample], eta: f64) -> Result<DVector<f64>> {
    let mut delta = DVector::zeros(clf.dim());
    for ex in data {
        let score = predict(clf, &ex.features)?;
        let c = score_coefficient(clf.link(), ex.label, score);
        delta.axpy(eta * c, ex.features.as_vector(), 1.0);
    }
    Ok(delta)
}

pub fn decision_step(clf: &LinearClassifier, data: &[LabeledExample], eta: f64) -> Result<LinearClassifier> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::config(format!("outer learning rate must be >= 0, got {eta}")));
    }
    let delta = decision_grad(clf, data, eta)?;
    let updated = clf.weights() + delta;
    if updated.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("decision step diverged to non-finite weights"));
    }
    clf.with_weights(updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ex(v: &[f64], y: u8) -> LabeledExample {
        LabeledExample::from_parts(v.to_vec(), y).unwrap()
    }

    // Central differences on −ℒf, scaled by η.
    fn fd_ascent(clf: &LinearClassifier, data: &[LabeledExample], eta: f64) -> DVector<f64> {
        let h = 1e-6;
        DVector::from_fn(clf.dim(), |k, _| {
            let mut up = clf.weights().clone();
            let mut down = clf.weights().clone();
            up[k] += h;
            down[k] -= h;
            let lu = cross_entropy_loss(&clf.with_weights(up).unwrap(), data).unwrap().value;
            let ld = cross_entropy_loss(&clf.with_weights(down).unwrap(), data).unwrap().value;
            -eta * (lu - ld) / (2.0 * h)
        })
    }

    #[test]
    fn predict_examples() {
        let w = LinearClassifier::new(vec![1.0, 2.0], 0.5).unwrap();
        let x = FeatureVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(predict(&w, &x).unwrap(), 3.0);
        assert_eq!(predict(&w, &FeatureVector::zeros(2)).unwrap(), 0.0);
        let zero = LinearClassifier::new(vec![0.0, 0.0], 0.5).unwrap();
        assert_eq!(predict(&zero, &x).unwrap(), 0.0);
        let short = FeatureVector::new(vec![1.0]).unwrap();
        assert!(predict(&w, &short).is_err());
    }

    #[test]
    fn ties_classify_positive() {
        let w = LinearClassifier::new(vec![0.5, 0.0], 0.5).unwrap();
        let x = FeatureVector::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(classify(&w, &x).unwrap(), Label::Positive);
    }

    #[test]
    fn cross_entropy_examples() {
        // score 1 − ε for y = 1
        let w = LinearClassifier::new(vec![1.0 - PROB_EPS], 0.5).unwrap();
        let l = cross_entropy_loss(&w, &[ex(&[1.0], 1)]).unwrap();
        assert!(l.value > 0.0 && l.value <= 2e-7);

        let w = LinearClassifier::new(vec![0.5], 0.5).unwrap();
        let l = cross_entropy_loss(&w, &[ex(&[1.0], 1)]).unwrap();
        assert_abs_diff_eq!(l.value, std::f64::consts::LN_2, epsilon = 1e-12);

        let l = cross_entropy_loss(&w, &[ex(&[1.0], 1), ex(&[1.0], 0)]).unwrap();
        assert_abs_diff_eq!(l.value, 2.0 * std::f64::consts::LN_2, epsilon = 1e-12);

        let empty = cross_entropy_loss(&w, &[]).unwrap();
        assert!(empty.degenerate);
        assert_eq!(empty.value, 0.0);
    }

    #[test]
    fn cross_entropy_stays_finite_outside_unit_interval() {
        let w = LinearClassifier::new(vec![3.0], 0.5).unwrap();
        let l = cross_entropy_loss(&w, &[ex(&[1.0], 0), ex(&[-1.0], 1)]).unwrap();
        assert!(l.value.is_finite());
    }

    #[test]
    fn decision_grad_examples() {
        let w = LinearClassifier::new(vec![0.5, 0.3], 0.5).unwrap();
        let pos = ex(&[1.0, 0.0], 1);
        let neg = ex(&[1.0, 0.0], 0);

        let g = decision_grad(&w, std::slice::from_ref(&pos), 0.1).unwrap();
        assert_abs_diff_eq!(g, DVector::from_vec(vec![0.2, 0.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(g, fd_ascent(&w, std::slice::from_ref(&pos), 0.1), epsilon = 1e-6);

        let g = decision_grad(&w, std::slice::from_ref(&neg), 0.1).unwrap();
        assert_abs_diff_eq!(g, DVector::from_vec(vec![-0.2, 0.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(g, fd_ascent(&w, std::slice::from_ref(&neg), 0.1), epsilon = 1e-6);

        let g = decision_grad(&w, &[pos, neg], 0.1).unwrap();
        assert_abs_diff_eq!(g, DVector::zeros(2), epsilon = 1e-15);
    }

    #[test]
    fn logistic_grad_matches_finite_differences() {
        let w = LinearClassifier::new(vec![0.7, -0.4], 0.0).unwrap().with_link(ScoreLink::Logistic);
        let data = [ex(&[1.0, 0.5], 1), ex(&[-0.3, 2.0], 0), ex(&[0.2, -1.0], 1)];
        let g = decision_grad(&w, &data, 0.3).unwrap();
        let fd = fd_ascent(&w, &data, 0.3);
        assert!((g - fd).amax() < 1e-7);
    }

    #[test]
    fn decision_step_examples() {
        let w = LinearClassifier::new(vec![0.5, 0.3], 0.5).unwrap();
        let pos = ex(&[1.0, 0.0], 1);
        let neg = ex(&[1.0, 0.0], 0);

        let same = decision_step(&w, &[pos.clone(), neg], 0.1).unwrap();
        assert_abs_diff_eq!(same.weights().clone(), w.weights().clone(), epsilon = 1e-15);

        let moved = decision_step(&w, std::slice::from_ref(&pos), 0.1).unwrap();
        assert_abs_diff_eq!(moved.weights().clone(), DVector::from_vec(vec![0.7, 0.3]), epsilon = 1e-12);
        assert_eq!(moved.threshold(), 0.5);

        let frozen = decision_step(&w, &[pos], 0.0).unwrap();
        assert_eq!(frozen.weights(), w.weights());
    }
}
