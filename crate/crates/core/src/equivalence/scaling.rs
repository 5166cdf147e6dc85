//! How the inner-stage error on mixed-label contexts shrinks with context
//! size.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{build_inner_layer, icl_manipulation_update, InnerMode, TokenMatrix};
use crate::data::{gen_synthetic, SyntheticConfig};
use crate::error::{Error, Result};
use crate::strategic::{
    initial_classifier, manipulation_step, FeatureVector, Label, LabeledExample, ManipulationConfig,
    ScoreLink,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig {
    /// Distribution of both contexts and queries; `n` and `seed` are ignored.
    pub population: SyntheticConfig,
    pub manipulation: ManipulationConfig,
    pub queries_per_seed: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub median_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `ln median` against `ln N`; absent for fewer
    /// than two sizes.
    pub slope: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn derived_seed(base: u64, seed: u64, n: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(seed.wrapping_mul(1 << 20).wrapping_add(n as u64));
    rng.random()
}

/// Errors `εⱼ` for one seed across all context sizes.
fn seed_errors(ns: &[usize], seed: u64, cfg: &ScalingConfig) -> Result<Vec<Vec<f64>>> {
    let pop = &cfg.population;
    let d = pop.d;
    let clf = initial_classifier(d, derived_seed(cfg.seed, seed, 0), 1.0, ScoreLink::Identity, 0.5)?;
    let mu0 = DVector::from_column_slice(&pop.class_means[0]);
    let negative_share = 1.0 - pop.positive_fraction;

    let mut qrng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, seed, usize::MAX));
    let queries: Vec<FeatureVector> = (0..cfg.queries_per_seed)
        .map(|_| {
            let x = DVector::from_fn(d, |k, _| {
                let z: f64 = qrng.sample(StandardNormal);
                mu0[k] + pop.class_scale * z
            });
            FeatureVector::from_dvector(x)
        })
        .collect::<Result<_>>()?;

    let target = manipulation_step(
        &LabeledExample::new(FeatureVector::zeros(d), Label::Negative),
        &clf,
        &cfg.manipulation,
    )?;

    ns.iter()
        .map(|&n| {
            let context =
                gen_synthetic(&SyntheticConfig { n, seed: derived_seed(cfg.seed, seed, n), ..pop.clone() })?
                    .examples;
            let layer = build_inner_layer(&clf, &cfg.manipulation, n)?;
            queries
                .iter()
                .map(|q| {
                    let z = TokenMatrix::from_examples(&context, q, 0.0)?;
                    let raw = icl_manipulation_update(&z, &layer, InnerMode::Raw)?;
                    let normalizer = negative_share * mu0.dot(q.as_vector());
                    if normalizer.abs() < 1e-12 {
                        return Err(Error::DegenerateContext(normalizer));
                    }
                    Ok((raw / normalizer - target.vector()).norm())
                })
                .collect()
        })
        .collect()
}

/// Median `εⱼ = ‖Δx^ICL / c̄ⱼ − Δx^GD‖` per context size, where the raw
/// forward pass on an iid mixed-label context is divided by the population
/// value of its label-masked factor, `c̄ⱼ = (1 − p)·⟨μ₀, xⱼ⟩`. Queries are
/// held-out negatives. Seeds run in parallel and are merged in seed order.
pub fn context_scaling_study(ns: &[usize], seeds: usize, cfg: &ScalingConfig) -> Result<ScalingTable> {
    if ns.is_empty() || ns.iter().any(|&n| n < 2) {
        return Err(Error::config("context sizes must all be >= 2"));
    }
    if seeds < 5 {
        return Err(Error::config(format!("scaling study needs >= 5 seeds, got {seeds}")));
    }
    if cfg.queries_per_seed == 0 {
        return Err(Error::config("queries_per_seed must be >= 1"));
    }
    cfg.population.validate()?;

    let per_seed: Vec<Vec<Vec<f64>>> =
        (0..seeds as u64).into_par_iter().map(|s| seed_errors(ns, s, cfg)).collect::<Result<_>>()?;

    let rows: Vec<ScalingRow> = ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let errors: Vec<f64> = per_seed.iter().flat_map(|s| s[k].iter().copied()).collect();
            ScalingRow { n, samples: errors.len(), median_error: median(errors) }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_error.ln()).collect();
    Ok(ScalingTable { slope: fit_slope(&xs, &ys), rows })
}
