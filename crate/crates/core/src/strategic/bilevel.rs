//! The full Stackelberg loop: agents best-respond to the published rule, the
//! decision maker takes one cross-entropy step, repeat.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::decision::{accuracy, cross_entropy_loss, decision_step};
use super::manipulation::Responder;
use super::types::{LabeledExample, LinearClassifier, ManipulationConfig, ScoreLink};
use crate::error::{Error, Result};

/// Whether the decision maker anticipates manipulation while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Strategic,
    NonStrategic,
}

impl Policy {
    pub fn is_strategic(self) -> bool {
        matches!(self, Policy::Strategic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLevelConfig {
    pub manipulation: ManipulationConfig,
    /// Outer-stage step size, independent of the agents' `eta`.
    pub outer_eta: f64,
    pub iterations: usize,
    pub link: ScoreLink,
    pub threshold: f64,
    /// Standard deviation of the seeded Gaussian initial weights.
    pub init_scale: f64,
}

impl BiLevelConfig {
    pub fn new(manipulation: ManipulationConfig, outer_eta: f64, iterations: usize) -> Self {
        Self {
            manipulation,
            outer_eta,
            iterations,
            link: ScoreLink::Identity,
            threshold: ScoreLink::Identity.default_threshold(),
            init_scale: 0.1,
        }
    }

    pub fn with_link(mut self, link: ScoreLink) -> Self {
        self.link = link;
        self.threshold = link.default_threshold();
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.outer_eta >= 0.0 && self.outer_eta.is_finite()) {
            return Err(Error::config(format!("outer_eta must be >= 0, got {}", self.outer_eta)));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("init_scale must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Seeded `N(0, scale²)` weights.
pub fn initial_classifier(
    dim: usize,
    seed: u64,
    scale: f64,
    link: ScoreLink,
    threshold: f64,
) -> Result<LinearClassifier> {
    let normal = Normal::new(0.0, scale).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
    Ok(LinearClassifier::from_dvector(w, threshold)?.with_link(link))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLevelRecord {
    pub iteration: usize,
    pub weights: DVector<f64>,
    /// Mean ‖Δx‖ over the training agents when facing these weights.
    pub mean_manipulation: f64,
    /// Summed cross-entropy on the batch these weights were trained on.
    pub cross_entropy: f64,
    /// Accuracy on test agents that best-respond to these weights.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLevelHistory {
    pub policy: Policy,
    pub records: Vec<BiLevelRecord>,
}

impl BiLevelHistory {
    pub fn final_record(&self) -> &BiLevelRecord {
        self.records.last().expect("history always holds the initial record")
    }

    pub fn final_accuracy(&self) -> f64 {
        self.final_record().accuracy
    }
}

fn mean_manipulation(responder: &Responder, data: &[LabeledExample]) -> f64 {
    let negatives = data.iter().filter(|ex| !ex.label.is_positive()).count();
    responder.magnitude() * negatives as f64 / data.len() as f64
}

/// Runs `cfg.iterations` rounds of the game starting from
/// `initial_classifier(seed)`.
///
/// Agents always respond from their original features. The non-strategic
/// policy trains on those raw features, but its test agents still manipulate
/// against whatever rule is published.
pub fn bilevel_run(
    train: &[LabeledExample],
    test: &[LabeledExample],
    cfg: &BiLevelConfig,
    policy: Policy,
    seed: u64,
) -> Result<BiLevelHistory> {
    if train.is_empty() {
        return Err(Error::config("bilevel_run needs a non-empty training set"));
    }
    if test.is_empty() {
        return Err(Error::config("bilevel_run needs a non-empty test set"));
    }
    cfg.validate()?;
    let d = cfg.manipulation.dim();
    let mut clf = initial_classifier(d, seed, cfg.init_scale, cfg.link, cfg.threshold)?;

    let training_batch = |responder: &Responder| -> Result<Vec<LabeledExample>> {
        if policy.is_strategic() {
            train.iter().map(|ex| responder.respond(ex)).collect()
        } else {
            Ok(train.to_vec())
        }
    };
    let record =
        |iteration: usize, clf: &LinearClassifier, batch: &[LabeledExample]| -> Result<BiLevelRecord> {
            let responder = Responder::new(clf, &cfg.manipulation)?;
            let moved_test: Vec<LabeledExample> =
                test.iter().map(|ex| responder.respond(ex)).collect::<Result<_>>()?;
            Ok(BiLevelRecord {
                iteration,
                weights: clf.weights().clone(),
                mean_manipulation: mean_manipulation(&responder, train),
                cross_entropy: cross_entropy_loss(clf, batch)?.value,
                accuracy: accuracy(clf, &moved_test)?,
            })
        };

    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let responder = Responder::new(&clf, &cfg.manipulation)?;
    let batch = training_batch(&responder)?;
    records.push(record(0, &clf, &batch)?);

    for t in 1..=cfg.iterations {
        let responder = Responder::new(&clf, &cfg.manipulation)?;
        let batch = training_batch(&responder)?;
        clf = decision_step(&clf, &batch, cfg.outer_eta)?;
        records.push(record(t, &clf, &batch)?);
    }
    Ok(BiLevelHistory { policy, records })
}
