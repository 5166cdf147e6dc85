//! Stacked linear attention as implicit gradient descent on least squares.

use nalgebra::{DMatrix, DVector};

use super::linear::{linear_attention_forward, AttentionLayerWeights};
use super::tokens::TokenMatrix;
use crate::error::{ensure_len, Error, Result};

/// `W_K = W_Q = diag(I_d, 0)`, `W_V = [[0, 0], [w0ᵀ, −1]]`, `P = (η/N)·I`.
pub fn build_regression_icl_layer(
    w0: &DVector<f64>,
    eta: f64,
    n: usize,
    d: usize,
) -> Result<AttentionLayerWeights> {
    if n == 0 {
        return Err(Error::config("regression layer needs N >= 1"));
    }
    ensure_len("regression initial weights", d, w0.len())?;
    let kq = feature_identity(d);
    let mut value = DMatrix::zeros(d + 1, d + 1);
    value.view_mut((d, 0), (1, d)).copy_from(&w0.transpose());
    value[(d, d)] = -1.0;
    let projection = DMatrix::identity(d + 1, d + 1) * (eta / n as f64);
    AttentionLayerWeights::new(kq.clone(), kq, value, projection)
}

/// `diag(I_d, 0)`: reads the features and ignores the label channel.
pub fn feature_identity(d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(d + 1, d + 1);
    m[(d, d)] = 0.0;
    m
}

/// Both tracks of the implicit-GD comparison. Index `ℓ` holds the state after
/// `ℓ` layers (or steps); index 0 is the initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct GdTrajectory {
    pub weights_per_step: Vec<DVector<f64>>,
    pub predictions_per_step: Vec<f64>,
    pub x_test: DVector<f64>,
}

impl GdTrajectory {
    /// `|y_ℓ + ⟨x_test, w_ℓ⟩|` per layer.
    pub fn deviations(&self) -> Vec<f64> {
        self.weights_per_step
            .iter()
            .zip(&self.predictions_per_step)
            .map(|(w, y)| (y + self.x_test.dot(w)).abs())
            .collect()
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations().into_iter().fold(0.0, f64::max)
    }
}

/// Runs `layers` identical constructed layers over the prompt and, separately,
/// `layers` explicit GD steps on `(1/2N)Σ(wᵀxᵢ − yᵢ)²` from `w0`.
///
/// The query attends to the context but is not itself a key/value source, so
/// each layer's context label channel carries exactly the current residual.
pub fn implicit_gd_verify(
    prompt: &[(DVector<f64>, f64)],
    x_test: &DVector<f64>,
    w0: &DVector<f64>,
    eta: f64,
    layers: usize,
) -> Result<GdTrajectory> {
    implicit_gd_verify_with(prompt, x_test, w0, eta, layers, Ok)
}

/// As [`implicit_gd_verify`], with a hook applied to the constructed layer
/// before it is stacked.
pub fn implicit_gd_verify_with(
    prompt: &[(DVector<f64>, f64)],
    x_test: &DVector<f64>,
    w0: &DVector<f64>,
    eta: f64,
    layers: usize,
    adjust: impl FnOnce(AttentionLayerWeights) -> Result<AttentionLayerWeights>,
) -> Result<GdTrajectory> {
    if prompt.is_empty() {
        return Err(Error::config("implicit GD needs a non-empty prompt"));
    }
    let d = x_test.len();
    let n = prompt.len();
    let layer = adjust(build_regression_icl_layer(w0, eta, n, d)?)?;
    let mut z = TokenMatrix::regression(prompt, x_test, w0)?;

    let mut w = w0.clone();
    let mut weights = vec![w.clone()];
    let mut predictions = vec![z.query_label()];
    let scale = eta / n as f64;
    for _ in 0..layers {
        let mut grad = DVector::zeros(d);
        for (x, y) in prompt {
            grad.axpy(w.dot(x) - y, x, 1.0);
        }
        w.axpy(-scale, &grad, 1.0);
        weights.push(w.clone());

        z = linear_attention_forward(&z, &layer, true)?;
        predictions.push(z.query_label());
    }
    Ok(GdTrajectory { weights_per_step: weights, predictions_per_step: predictions, x_test: x_test.clone() })
}
