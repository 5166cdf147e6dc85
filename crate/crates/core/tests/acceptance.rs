//! End-to-end acceptance checks. Runs without the libtest harness so that the
//! `criterion N: PASS|FAIL` line of every criterion is always printed, and
//! exits non-zero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strategem::attention::{build_inner_layer, icl_manipulation_update, InnerMode, TokenMatrix};
use strategem::cli::{policy_table, RunConfig};
use strategem::data::SyntheticConfig;
use strategem::equivalence::{
    alpha_simplex_error, context_scaling_study, dual_track_curves, verify_inner, verify_lemma, verify_outer,
    verify_softmax, CurvesConfig, ScalingConfig,
};
use strategem::strategic::{
    cross_entropy_loss, decision_grad, manipulation_loss, manipulation_loss_grad, manipulation_step,
    CostMatrix, FeatureVector, Label, LabeledExample, LinearClassifier, ManipulationConfig, ScoreLink,
};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn defaults() -> RunConfig {
    RunConfig::default()
}

fn criterion_01_outer_identity() -> Outcome {
    let cfg = defaults();
    let (r, t) = timed(|| verify_outer(&cfg.verify_settings(1000)).unwrap());
    let pass = r.instances == 1000 && r.max_abs <= 1e-10 && t < Duration::from_secs(5);
    report(
        "outer identity",
        pass,
        format!("max_abs={:e} instances={} runtime={t:.2?}", r.max_abs, r.instances),
    )
}

fn criterion_02_inner_identity() -> Outcome {
    let cfg = defaults();
    let s = cfg.verify_settings(1000);
    let ((exact, corrected, raw), t) = timed(|| {
        (
            verify_inner(&s, InnerMode::Exact, Label::Negative).unwrap(),
            verify_inner(&s, InnerMode::Corrected, Label::Negative).unwrap(),
            verify_inner(&s, InnerMode::Raw, Label::Negative).unwrap(),
        )
    });
    let gap_err = raw.gap_identity_error.unwrap();
    let pass = exact.max_abs <= 1e-10
        && corrected.max_abs <= 1e-10
        && gap_err <= 1e-12
        && raw.homogeneity_gap.unwrap() > 0.0
        && t < Duration::from_secs(5);
    report(
        "inner identity",
        pass,
        format!(
            "exact={:e} corrected={:e} raw_gap_identity={:e} runtime={t:.2?}",
            exact.max_abs, corrected.max_abs, gap_err
        ),
    )
}

fn criterion_03_regression_dual_track() -> Outcome {
    let cfg = defaults();
    let mut s = cfg.verify_settings(100);
    s.layers = 10;
    let (r, t) = timed(|| verify_lemma(&s).unwrap());
    let pass = r.instances == 100 && r.max_abs <= 1e-8 && t < Duration::from_secs(5);
    report("regression layers vs gradient descent", pass, format!("max_abs={:e} runtime={t:.2?}", r.max_abs))
}

fn criterion_04_positive_agents_never_move() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let d = rng.random_range(1..=12);
        let n = rng.random_range(1..=16);
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let cost = CostMatrix::new(&b * b.transpose() + DMatrix::identity(d, d) * 0.1).unwrap();
        let cfg =
            ManipulationConfig::new(rng.random_range(0.1..2.0), rng.random_range(0.0..4.0), cost).unwrap();
        let clf =
            LinearClassifier::from_dvector(DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)), 0.5)
                .unwrap();
        let point = |rng: &mut ChaCha8Rng| {
            FeatureVector::from_dvector(DVector::from_fn(d, |_, _| rng.random_range(0.1..1.5))).unwrap()
        };

        let query = point(&mut rng);
        let gd = manipulation_step(&LabeledExample::new(query.clone(), Label::Positive), &clf, &cfg).unwrap();
        worst = worst.max(gd.vector().amax());

        let ctx: Vec<_> = (0..n).map(|_| LabeledExample::new(point(&mut rng), Label::Positive)).collect();
        let z = TokenMatrix::from_examples(&ctx, &query, 0.0).unwrap();
        let layer = build_inner_layer(&clf, &cfg, n).unwrap();
        for mode in [InnerMode::Raw, InnerMode::Corrected] {
            worst = worst.max(icl_manipulation_update(&z, &layer, mode).unwrap().amax());
        }
        let exact = TokenMatrix::exact_context(&query, Label::Positive).unwrap();
        let single = build_inner_layer(&clf, &cfg, 1).unwrap();
        worst = worst.max(icl_manipulation_update(&exact, &single, InnerMode::Exact).unwrap().amax());
    }
    report(
        "positive agents never move",
        worst == 0.0,
        format!("largest |dx| over gd/raw/corrected/exact = {worst:e}"),
    )
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
fn relative_error(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}

fn criterion_05_gradient_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_manip: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(1..=12);
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let cost = CostMatrix::new(&b * b.transpose() + DMatrix::identity(d, d) * 0.1).unwrap();
        let cfg = ManipulationConfig::new(0.5, rng.random_range(0.0..3.0), cost).unwrap();
        let clf =
            LinearClassifier::from_dvector(DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)), 0.5)
                .unwrap();
        let x = FeatureVector::from_dvector(DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let x2 = x.shifted(&DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let y = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
        let g = manipulation_loss_grad(&x, &x2, y, &clf, &cfg).unwrap();
        let h = 1e-5;
        let fd = DVector::from_fn(d, |k, _| {
            let mut e = DVector::zeros(d);
            e[k] = h;
            let up = manipulation_loss(&x, &x2.shifted(&e).unwrap(), y, &clf, &cfg).unwrap();
            let down = manipulation_loss(&x, &x2.shifted(&(-e)).unwrap(), y, &clf, &cfg).unwrap();
            (up - down) / (2.0 * h)
        });
        worst_manip = worst_manip.max(relative_error(&g, &fd, 1e-3));
    }

    let mut worst_decision: f64 = 0.0;
    for i in 0..1000 {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=12);
        let link = if i % 2 == 0 { ScoreLink::Identity } else { ScoreLink::Logistic };
        let w = loop {
            let w = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            if w.norm() > 0.3 {
                break w;
            }
        };
        // Identity-link scores stay inside (0.05, 0.95), clear of the clamp.
        let data: Vec<LabeledExample> = (0..n)
            .map(|_| {
                let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let target = match link {
                    ScoreLink::Identity => rng.random_range(0.05..0.95),
                    ScoreLink::Logistic => rng.random_range(-4.0..4.0),
                };
                let x = &x + &w * ((target - w.dot(&x)) / w.norm_squared());
                let y = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
                LabeledExample::new(FeatureVector::from_dvector(x).unwrap(), y)
            })
            .collect();
        let clf =
            LinearClassifier::from_dvector(w.clone(), link.default_threshold()).unwrap().with_link(link);
        let eta = rng.random_range(0.01..1.0);
        let g = decision_grad(&clf, &data, eta).unwrap();
        let h = 1e-6;
        let fd = DVector::from_fn(d, |k, _| {
            let mut up = w.clone();
            let mut down = w.clone();
            up[k] += h;
            down[k] -= h;
            let lu = cross_entropy_loss(&clf.with_weights(up).unwrap(), &data).unwrap().value;
            let ld = cross_entropy_loss(&clf.with_weights(down).unwrap(), &data).unwrap().value;
            -eta * (lu - ld) / (2.0 * h)
        });
        worst_decision = worst_decision.max(relative_error(&g, &fd, 1.0));
    }
    let pass = worst_manip < 1e-5 && worst_decision < 1e-5;
    report(
        "gradient oracles",
        pass,
        format!(
            "manipulation_loss_grad rel={worst_manip:e} decision_grad rel={worst_decision:e} (1000 each)"
        ),
    )
}

fn criterion_06_softmax_first_layer() -> Outcome {
    let cfg = defaults();
    let s = cfg.verify_settings(500);
    let ((r, (sum_err, min_alpha)), t) =
        timed(|| (verify_softmax(&s).unwrap(), alpha_simplex_error(&s).unwrap()));
    let pass = r.instances == 500 && r.max_abs <= 1e-10 && sum_err <= 1e-12 && min_alpha >= 0.0;
    report(
        "softmax first-layer identity",
        pass,
        format!(
            "max_abs={:e} |sum(alpha)-1|={sum_err:e} min(alpha)={min_alpha:e} runtime={t:.2?}",
            r.max_abs
        ),
    )
}

fn criterion_07_context_scaling() -> Outcome {
    let cfg = defaults();
    let study = ScalingConfig {
        population: SyntheticConfig {
            positive_fraction: cfg.positive_fraction,
            ..SyntheticConfig::symmetric(cfg.d, cfg.n, cfg.class_offset, cfg.scaling_class_scale, cfg.seed)
        },
        manipulation: cfg.manipulation(cfg.d).unwrap(),
        queries_per_seed: cfg.scaling_queries,
        seed: cfg.seed,
    };
    let (table, t) = timed(|| context_scaling_study(&[16, 32, 64, 128, 256], 20, &study).unwrap());
    let medians: Vec<f64> = table.rows.iter().map(|r| r.median_error).collect();
    let decreasing = medians.windows(2).all(|p| p[1] < p[0]);
    let slope = table.slope.unwrap();
    let pass = decreasing && (-0.8..=-0.2).contains(&slope) && t < Duration::from_secs(30);
    report("context scaling", pass, format!("medians={medians:.4?} slope={slope:.3} runtime={t:.2?}"))
}

fn criterion_08_convergence_curves() -> Outcome {
    let cfg = defaults();
    let data = cfg.load_dataset().unwrap();
    let curves = CurvesConfig { bilevel: cfg.bilevel(data.dim()).unwrap(), window_step: cfg.window_step };
    let (rows, t) = timed(|| dual_track_curves(&data.examples, &curves, cfg.seed).unwrap());
    let last = rows.last().unwrap();
    let pass = rows.len() == 101 && last.cosine >= 0.95 && last.l2 <= 0.1 && t < Duration::from_secs(10);
    report(
        "convergence curves",
        pass,
        format!("final cosine={:.6} l2={:e} rows={} runtime={t:.2?}", last.cosine, last.l2, rows.len()),
    )
}

fn criterion_09_strategic_policy_gap() -> Outcome {
    let cfg = defaults();
    let data = cfg.load_dataset().unwrap();
    let bilevel = cfg.bilevel(data.dim()).unwrap();
    let (table, t) = timed(|| policy_table(&data, &bilevel, 10, cfg.seed).unwrap());
    let pass = table.folds.len() == 10 && table.gap() >= 0.02 && t < Duration::from_secs(30);
    report(
        "strategic vs non-strategic gap",
        pass,
        format!(
            "strategic={:.4}±{:.4} non-strategic={:.4}±{:.4} gap={:.2}pp runtime={t:.2?}",
            table.strategic.mean,
            table.strategic.std,
            table.non_strategic.mean,
            table.non_strategic.std,
            100.0 * table.gap()
        ),
    )
}

fn criterion_10_verify_all_command() -> Outcome {
    let out_dir = tempfile::tempdir().unwrap();
    let out = out_dir.path().join("verify.csv");
    let (status, t) = timed(|| {
        Command::new(env!("CARGO_BIN_EXE_strategem"))
            .args(["verify", "all", "--jobs", "1", "--out"])
            .arg(&out)
            .env_remove("STRATEGEM_SEED")
            .output()
            .unwrap()
    });
    let code = status.status.code();
    let written = std::fs::read_to_string(&out).unwrap_or_default();
    let rows = written.lines().filter(|l| !l.starts_with('#')).count();
    let pass = code == Some(0) && rows == 9 && t < Duration::from_secs(60);
    report(
        "verify all",
        pass,
        format!("exit={code:?} report_rows={} runtime={t:.2?}", rows.saturating_sub(1)),
    )
}

fn main() {
    let criteria: [fn() -> Outcome; 10] = [
        criterion_01_outer_identity,
        criterion_02_inner_identity,
        criterion_03_regression_dual_track,
        criterion_04_positive_agents_never_move,
        criterion_05_gradient_oracles,
        criterion_06_softmax_first_layer,
        criterion_07_context_scaling,
        criterion_08_convergence_curves,
        criterion_09_strategic_policy_gap,
        criterion_10_verify_all_command,
    ];
    let mut failed = 0;
    for (i, run) in criteria.iter().enumerate() {
        let n = i + 1;
        match std::panic::catch_unwind(run) {
            Ok(o) => {
                println!("criterion {n} ({}): {} {}", o.name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
                failed += usize::from(!o.pass);
            }
            Err(_) => {
                println!("criterion {n}: FAIL (panicked)");
                failed += 1;
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
