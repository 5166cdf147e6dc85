//! Agreement metrics between the attention track and the explicit track,
//! the verification suites built on them, and the experiment runners.

mod curves;
mod metrics;
mod scaling;
mod verify;

pub use curves::{dual_track_curves, CurveRow, CurvesConfig};
pub use metrics::{
    cosine_similarity, kl_gaussian, l2_distance, mean_shift, Cosine, DistributionSummary, VARIANCE_FLOOR,
    ZERO_NORM,
};
pub use scaling::{context_scaling_study, fit_slope, ScalingConfig, ScalingRow, ScalingTable};
pub use verify::{
    alpha_simplex_error, verify_alpha_simplex, verify_inner, verify_lemma, verify_outer, verify_softmax,
    EquivalenceReport, VerifySettings, ALPHA_TOLERANCE, GAP_IDENTITY_TOLERANCE, INNER_TOLERANCE,
    LEMMA_TOLERANCE, OUTER_TOLERANCE, SOFTMAX_TOLERANCE, TAMPER_AMOUNT,
};
