//! The bi-level loop run twice from one initial rule: once with explicit
//! gradient steps, once with constructed attention layers.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{cosine_similarity, kl_gaussian, l2_distance, DistributionSummary};
use crate::attention::{
    build_inner_layer, build_outer_layer, folded_update, icl_manipulation_update, outer_layer_delta,
    InnerMode, TokenMatrix,
};
use crate::error::{Error, Result};
use crate::strategic::{
    best_response_batch, cross_entropy_from_scores, cross_entropy_loss, decision_step, initial_classifier,
    BiLevelConfig, LabeledExample, LinearClassifier,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CurvesConfig {
    pub bilevel: BiLevelConfig,
    /// The attention track's outer context holds the first
    /// `min(N, window_step·t)` agents of a seeded permutation at iteration `t`.
    pub window_step: usize,
}

/// One row of the dual-track table. Row 0 is the shared initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iter: usize,
    pub cosine: f64,
    pub l2: f64,
    pub kl: f64,
    pub mean_shift: f64,
    pub ce_gd: f64,
    pub ce_icl: f64,
}

/// Attention-track best response: every agent is queried against a
/// single-token context built from its own features, through one inner
/// layer shared by the whole population.
fn icl_best_response(
    data: &[LabeledExample],
    clf: &LinearClassifier,
    cfg: &BiLevelConfig,
) -> Result<Vec<LabeledExample>> {
    let layer = build_inner_layer(clf, &cfg.manipulation, 1)?;
    data.iter()
        .map(|ex| {
            let z = TokenMatrix::exact_context(&ex.features, ex.label)?;
            let delta = icl_manipulation_update(&z, &layer, InnerMode::Exact)?;
            Ok(LabeledExample::new(ex.features.shifted(&delta)?, ex.label))
        })
        .collect()
}

fn summary(batch: &[LabeledExample]) -> Result<DistributionSummary> {
    DistributionSummary::from_points(batch.iter().map(|ex| ex.features.as_vector()))
}

fn compare(
    iter: usize,
    w_gd: &LinearClassifier,
    w_icl: &LinearClassifier,
    batch_gd: &[LabeledExample],
    batch_icl: &[LabeledExample],
    ce_gd: f64,
    ce_icl: f64,
) -> Result<CurveRow> {
    let cos = cosine_similarity(w_gd.weights(), w_icl.weights())?;
    let (s_gd, s_icl) = (summary(batch_gd)?, summary(batch_icl)?);
    Ok(CurveRow {
        iter,
        cosine: if cos.zero_vector { 1.0 } else { cos.value },
        l2: l2_distance(w_gd.weights(), w_icl.weights())?,
        kl: kl_gaussian(&s_icl, &s_gd)?,
        mean_shift: l2_distance(&DVector::from_vec(s_icl.mean), &DVector::from_vec(s_gd.mean))?,
        ce_gd,
        ce_icl,
    })
}

/// Runs `cfg.bilevel.iterations` rounds on both tracks and tabulates their
/// agreement.
///
/// The explicit track trains on the full manipulated population. The
/// attention track manipulates through the inner layer, then folds a growing
/// window of the manipulated agents into an outer layer with its step scaled
/// by `N / window`. Its published rule is the previous rule plus the layer's
/// value block, and its cross-entropy is scored from forward-pass
/// predictions. `kl` is `KL(attention ‖ explicit)` over the manipulated
/// features and `mean_shift` the distance between their means.
pub fn dual_track_curves(data: &[LabeledExample], cfg: &CurvesConfig, seed: u64) -> Result<Vec<CurveRow>> {
    if data.is_empty() {
        return Err(Error::config("dual-track curves need a non-empty dataset"));
    }
    if cfg.window_step == 0 {
        return Err(Error::config("window_step must be >= 1"));
    }
    let b = &cfg.bilevel;
    let n = data.len();
    let w0 = initial_classifier(b.manipulation.dim(), seed, b.init_scale, b.link, b.threshold)?;
    // Windows are growing prefixes of one seeded permutation, so each
    // iteration's context contains the previous one.
    let order = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, n).into_vec();

    let mut w_gd = w0.clone();
    let mut w_icl = w0;
    let batch0 = best_response_batch(data, &w_gd, &b.manipulation)?;
    let ce0 = cross_entropy_loss(&w_gd, &batch0)?.value;
    let mut rows = vec![compare(0, &w_gd, &w_icl, &batch0, &batch0, ce0, ce0)?];

    for t in 1..=b.iterations {
        let batch_gd = best_response_batch(data, &w_gd, &b.manipulation)?;
        w_gd = decision_step(&w_gd, &batch_gd, b.outer_eta)?;
        let ce_gd = cross_entropy_loss(&w_gd, &batch_gd)?.value;

        let batch_icl = icl_best_response(data, &w_icl, b)?;
        let m = n.min(cfg.window_step.saturating_mul(t));
        let window: Vec<LabeledExample> = order[..m].iter().map(|&i| batch_icl[i].clone()).collect();
        let layer = build_outer_layer(&w_icl, &window, b.outer_eta * n as f64 / m as f64)?;
        let scored: Vec<_> = batch_icl
            .iter()
            .map(|ex| {
                let score = w_icl.weights().dot(ex.features.as_vector());
                let mut token = ex.features.as_vector().clone().insert_row(ex.features.dim(), score);
                token += folded_update(&layer, &token)?;
                Ok((ex.label, token[ex.features.dim()]))
            })
            .collect::<Result<_>>()?;
        w_icl = w_icl.with_weights(w_icl.weights() + outer_layer_delta(&layer))?;
        let ce_icl = cross_entropy_from_scores(w_icl.link(), &scored).value;

        rows.push(compare(t, &w_gd, &w_icl, &batch_gd, &batch_icl, ce_gd, ce_icl)?);
    }
    Ok(rows)
}
