//! Explicit implementation of both stages of the strategic classification
//! game.

mod bilevel;
mod decision;
mod manipulation;
mod types;

pub use bilevel::{bilevel_run, initial_classifier, BiLevelConfig, BiLevelHistory, BiLevelRecord, Policy};
pub use decision::{
    accuracy, clamp_probability, classify, cross_entropy_from_scores, cross_entropy_loss, decision_grad,
    decision_step, predict, score_coefficient, CrossEntropy, PROB_EPS,
};
pub use manipulation::{
    adaptation_matrix, best_response_batch, mahalanobis_cost, manipulation_loss, manipulation_loss_batch,
    manipulation_loss_grad, manipulation_residual, manipulation_step, Responder,
};
pub use types::{
    AdaptationMatrix, CostMatrix, FeatureVector, Label, LabeledExample, LinearClassifier, ManipulationConfig,
    ManipulationDelta, ScoreLink, SYMMETRY_TOL,
};
