//! Token-matrix self-attention and the analytic weight constructions that
//! turn a forward pass into an explicit optimization step.

mod linear;
mod regression;
mod softmax;
mod strategic_layers;
mod tokens;

pub use linear::{
    folded_attention_forward, folded_update, linear_attention_forward, linear_attention_forward_raw,
    AttentionLayerWeights, WeightBlock,
};
pub use regression::{
    build_regression_icl_layer, feature_identity, implicit_gd_verify, implicit_gd_verify_with, GdTrajectory,
};
pub use softmax::{
    attention_alpha, exponential_kernel, functional_gd_step, softmax_attention_forward, FunctionEstimate,
    SoftmaxAttentionConfig,
};
pub use strategic_layers::{
    build_inner_layer, build_outer_layer, gd_prediction_update, homogeneity_factor, icl_manipulation_update,
    icl_prediction_update, outer_layer_delta, InnerMode, DEGENERATE_FACTOR, EXACT_OVERLAP_TOL,
};
pub use tokens::TokenMatrix;
