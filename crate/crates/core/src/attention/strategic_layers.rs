//! Attention layers that reproduce the two stages of the strategic game.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::{folded_update, linear_attention_forward, AttentionLayerWeights};
use super::regression::feature_identity;
use super::tokens::TokenMatrix;
use crate::error::{ensure_len, Error, Result};
use crate::strategic::{
    adaptation_matrix, decision_grad, LabeledExample, LinearClassifier, ManipulationConfig,
};

/// Below this magnitude the homogeneity factor cannot be divided out.
pub const DEGENERATE_FACTOR: f64 = 1e-12;
/// Allowed deviation of `⟨x̃, x_j⟩` from 1 for an exact-mode context.
pub const EXACT_OVERLAP_TOL: f64 = 1e-12;

/// How the inner-layer forward pass is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMode {
    /// Requires the single normalized-token context of
    /// [`TokenMatrix::exact_context`].
    Exact,
    /// The literal forward pass, including the factor `c_j`.
    Raw,
    /// The forward pass divided by `c_j`.
    #[default]
    Corrected,
}

impl std::str::FromStr for InnerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(InnerMode::Exact),
            "raw" => Ok(InnerMode::Raw),
            "corrected" => Ok(InnerMode::Corrected),
            other => {
                Err(Error::config(format!("unknown inner mode '{other}' (expected exact|raw|corrected)")))
            }
        }
    }
}

/// Inner-stage layer for a context of `n_context` agents.
///
/// Keys and queries read the features only. The value of token `i` is
/// `W_V e_i + b_V = (η(1−y_i)Wᵀ, 0)`: the bias carries `ηWᵀ` and the label
/// column of `W_V` subtracts it again for positive tokens. The projection is
/// `(1/N)·diag(A, 0)`, so the label channel is never written.
pub fn build_inner_layer(
    clf: &LinearClassifier,
    cfg: &ManipulationConfig,
    n_context: usize,
) -> Result<AttentionLayerWeights> {
    if n_context == 0 {
        return Err(Error::config("inner layer needs N >= 1"));
    }
    let d = cfg.dim();
    ensure_len("inner layer weights", d, clf.dim())?;
    let a = adaptation_matrix(cfg)?;
    let eta_w = clf.weights() * cfg.eta;

    let kq = feature_identity(d);
    let mut value = DMatrix::zeros(d + 1, d + 1);
    value.view_mut((0, d), (d, 1)).copy_from(&(-&eta_w));
    let mut bias = DVector::zeros(d + 1);
    bias.rows_mut(0, d).copy_from(&eta_w);
    let mut projection = DMatrix::zeros(d + 1, d + 1);
    projection.view_mut((0, 0), (d, d)).copy_from(&(a.matrix() / n_context as f64));
    AttentionLayerWeights::with_value_bias(kq.clone(), kq, value, projection, bias)
}

/// `c_j = (1/N) Σᵢ ⟨xᵢ, x_j⟩` over all context tokens.
pub fn homogeneity_factor(z: &TokenMatrix) -> f64 {
    let q = z.query_features();
    let n = z.n_context();
    (0..n).map(|i| z.features(i).dot(&q)).sum::<f64>() / n as f64
}

/// Feature-channel delta of the query column under the inner layer.
pub fn icl_manipulation_update(
    z: &TokenMatrix,
    layer: &AttentionLayerWeights,
    mode: InnerMode,
) -> Result<DVector<f64>> {
    if mode == InnerMode::Exact {
        let overlap = z.features(0).dot(&z.query_features());
        if z.n_context() != 1 || (overlap - 1.0).abs() > EXACT_OVERLAP_TOL {
            return Err(Error::config(
                "exact mode needs a single context token with unit overlap against the query",
            ));
        }
    }
    let q = z.query_index();
    let d = z.dim();
    let out = linear_attention_forward(z, layer, true)?;
    let raw: DVector<f64> = out.matrix().column(q).rows(0, d) - z.matrix().column(q).rows(0, d);
    match mode {
        InnerMode::Exact | InnerMode::Raw => Ok(raw),
        InnerMode::Corrected => {
            let c = homogeneity_factor(z);
            if !c.is_finite() || c.abs() < DEGENERATE_FACTOR {
                return Err(Error::DegenerateContext(c));
            }
            Ok(raw / c)
        }
    }
}

/// Outer-stage layer with the context sum folded into the value matrix.
///
/// The value row of the score channel holds `Σᵢ δᵢ`, where `δᵢ` is the
/// per-token cross-entropy step computed exactly as in
/// [`decision_grad`]. The projection keeps only the score channel.
pub fn build_outer_layer(
    clf: &LinearClassifier,
    context: &[LabeledExample],
    eta: f64,
) -> Result<AttentionLayerWeights> {
    if context.is_empty() {
        return Err(Error::config("outer layer needs a non-empty context"));
    }
    let d = clf.dim();
    let delta = decision_grad(clf, context, eta)?;
    let kq = feature_identity(d);
    let mut value = DMatrix::zeros(d + 1, d + 1);
    value.view_mut((d, 0), (1, d)).copy_from(&delta.transpose());
    let mut projection = DMatrix::zeros(d + 1, d + 1);
    projection[(d, d)] = 1.0;
    AttentionLayerWeights::new(kq.clone(), kq, value, projection)
}

/// The summed rule update `ΔW` stored in an outer layer's value block.
pub fn outer_layer_delta(layer: &AttentionLayerWeights) -> DVector<f64> {
    let d = layer.width() - 1;
    layer.value().row(d).columns(0, d).transpose()
}

/// Score-channel delta of the query column, `PVKᵀq`.
pub fn icl_prediction_update(z: &TokenMatrix, layer: &AttentionLayerWeights) -> Result<f64> {
    let token = z.matrix().column(z.query_index()).into_owned();
    Ok(folded_update(layer, &token)?[z.dim()])
}

/// `ΔW·x′` accumulated in index order, the reference the attention track is
/// compared against.
pub fn gd_prediction_update(delta_w: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    ensure_len("prediction update", delta_w.len(), x.len())?;
    Ok(delta_w.iter().zip(x.iter()).fold(0.0, |acc, (a, b)| acc + a * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategic::{manipulation_step, CostMatrix, FeatureVector, Label};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (LinearClassifier, ManipulationConfig) {
        (
            LinearClassifier::new(vec![1.0, 2.0], 0.5).unwrap(),
            ManipulationConfig::new(0.5, 1.0, CostMatrix::identity(2)).unwrap(),
        )
    }

    fn ex(v: &[f64], y: u8) -> LabeledExample {
        LabeledExample::from_parts(v.to_vec(), y).unwrap()
    }

    #[test]
    fn inner_projection_readback() {
        let (clf, cfg) = setup();
        let layer = build_inner_layer(&clf, &cfg, 1).unwrap();
        let a = adaptation_matrix(&cfg).unwrap();
        assert_eq!(layer.projection().view((0, 0), (2, 2)), *a.matrix());
        assert!(layer.projection().row(2).iter().all(|v| *v == 0.0));
        assert!(layer.projection().column(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn positive_context_leaves_tokens_unchanged() {
        let (clf, cfg) = setup();
        let ctx = vec![ex(&[1.0, 0.5], 1), ex(&[-0.3, 2.0], 1)];
        let q = FeatureVector::new(vec![0.4, 0.9]).unwrap();
        let z = TokenMatrix::from_examples(&ctx, &q, 1.0).unwrap();
        let layer = build_inner_layer(&clf, &cfg, 2).unwrap();
        assert_eq!(linear_attention_forward(&z, &layer, true).unwrap(), z);
        for mode in [InnerMode::Raw, InnerMode::Corrected] {
            assert!(icl_manipulation_update(&z, &layer, mode).unwrap().iter().all(|v| *v == 0.0));
        }
        let exact = TokenMatrix::exact_context(&q, Label::Positive).unwrap();
        let layer = build_inner_layer(&clf, &cfg, 1).unwrap();
        let d = icl_manipulation_update(&exact, &layer, InnerMode::Exact).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exact_mode_matches_best_response() {
        let (clf, cfg) = setup();
        let q = FeatureVector::new(vec![0.7, -1.3]).unwrap();
        let z = TokenMatrix::exact_context(&q, Label::Negative).unwrap();
        let layer = build_inner_layer(&clf, &cfg, 1).unwrap();
        let icl = icl_manipulation_update(&z, &layer, InnerMode::Exact).unwrap();
        assert!((icl - DVector::from_vec(vec![0.25, 0.5])).amax() < 1e-12);
    }

    #[test]
    fn exact_mode_rejects_other_contexts() {
        let (clf, cfg) = setup();
        let q = FeatureVector::new(vec![0.7, -1.3]).unwrap();
        let z = TokenMatrix::from_examples(&[ex(&[1.0, 1.0], 0)], &q, 0.0).unwrap();
        let layer = build_inner_layer(&clf, &cfg, 1).unwrap();
        assert!(icl_manipulation_update(&z, &layer, InnerMode::Exact).is_err());
    }

    #[test]
    fn corrected_mode_on_homogeneous_negatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ManipulationConfig::new(0.3, 0.7, CostMatrix::diagonal(&[1.0, 2.0, 0.5]).unwrap()).unwrap();
        let clf = LinearClassifier::new(vec![0.4, -1.0, 0.8], 0.5).unwrap();
        let ctx: Vec<_> = (0..32)
            .map(|_| {
                ex(&[rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)], 0)
            })
            .collect();
        let q = ex(&[1.0, 0.5, 1.5], 0);
        let z = TokenMatrix::from_examples(&ctx, &q.features, 0.0).unwrap();
        let layer = build_inner_layer(&clf, &cfg, 32).unwrap();
        let icl = icl_manipulation_update(&z, &layer, InnerMode::Corrected).unwrap();
        let gd = manipulation_step(&q, &clf, &cfg).unwrap();
        assert!((icl - gd.vector()).amax() <= 1e-10);

        let raw = icl_manipulation_update(&z, &layer, InnerMode::Raw).unwrap();
        let c = homogeneity_factor(&z);
        let gap = (raw - gd.vector()).norm();
        assert!((gap - (c - 1.0).abs() * gd.norm()).abs() <= 1e-12);
    }

    #[test]
    fn corrected_mode_flags_degenerate_context() {
        let (clf, cfg) = setup();
        let q = FeatureVector::new(vec![1.0, 0.0]).unwrap();
        let z = TokenMatrix::from_examples(&[ex(&[0.0, 1.0], 0)], &q, 0.0).unwrap();
        let layer = build_inner_layer(&clf, &cfg, 1).unwrap();
        assert!(matches!(
            icl_manipulation_update(&z, &layer, InnerMode::Corrected),
            Err(Error::DegenerateContext(_))
        ));
    }

    #[test]
    fn outer_layer_examples() {
        let clf = LinearClassifier::new(vec![0.5, 0.3], 0.5).unwrap();
        let pair = [ex(&[1.0, 0.0], 1), ex(&[1.0, 0.0], 0)];
        let layer = build_outer_layer(&clf, &pair, 0.1).unwrap();
        assert!(outer_layer_delta(&layer).iter().all(|v| v.abs() < 1e-15));
        assert_eq!(layer.projection().iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(layer.projection()[(2, 2)], 1.0);

        let single = build_outer_layer(&clf, &pair[..1], 0.1).unwrap();
        let delta = outer_layer_delta(&single);
        assert!((delta - DVector::from_vec(vec![0.2, 0.0])).amax() < 1e-12);
        let q = FeatureVector::new(vec![1.0, 0.0]).unwrap();
        let z = TokenMatrix::from_examples(&pair[..1], &q, 0.5).unwrap();
        let dy = icl_prediction_update(&z, &single).unwrap();
        assert!((dy - 0.2).abs() < 1e-12);
        assert!(build_outer_layer(&clf, &[], 0.1).is_err());
    }

    #[test]
    fn outer_forward_only_touches_score_channel() {
        let clf = LinearClassifier::new(vec![0.2, -0.1, 0.4], 0.5).unwrap();
        let ctx = [ex(&[1.0, 0.3, -0.5], 1), ex(&[0.2, 0.9, 0.1], 0)];
        let layer = build_outer_layer(&clf, &ctx, 0.05).unwrap();
        let q = FeatureVector::new(vec![0.5, -0.5, 1.0]).unwrap();
        let z = TokenMatrix::from_examples(&ctx, &q, 0.1).unwrap();
        let out = super::super::linear::folded_attention_forward(&z, &layer).unwrap();
        assert_eq!(out.matrix().rows(0, 3), z.matrix().rows(0, 3));
    }
}
