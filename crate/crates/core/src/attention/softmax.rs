//! Softmax attention with an exponential kernel, and the functional gradient
//! descent step it approximates.

use nalgebra::{DMatrix, DVector};

use super::tokens::TokenMatrix;
use crate::error::{ensure_len, Error, Result};
use crate::strategic::LabeledExample;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxAttentionConfig {
    pub sigma: f64,
    /// Step `r_ℓ` of each layer; the layer count is `rates.len()`.
    pub rates: Vec<f64>,
}

impl SoftmaxAttentionConfig {
    pub fn new(sigma: f64, rates: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::config(format!("sigma must be > 0, got {sigma}")));
        }
        if rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::config("layer rates must be finite"));
        }
        Ok(Self { sigma, rates })
    }

    /// Bandwidth `√d`.
    pub fn for_dim(d: usize, rates: Vec<f64>) -> Result<Self> {
        Self::new((d.max(1) as f64).sqrt(), rates)
    }

    pub fn layers(&self) -> usize {
        self.rates.len()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("sigma must be > 0, got {sigma}")))
    }
}

/// `exp(⟨x, x2⟩ / σ²)`.
pub fn exponential_kernel(x: &DVector<f64>, x2: &DVector<f64>, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    ensure_len("exponential kernel", x.len(), x2.len())?;
    Ok((x.dot(x2) / (sigma * sigma)).exp())
}

/// Normalized kernel weights of the columns of `x_context` (`d × n`) against
/// `x_query`, computed in log space with the maximum subtracted.
pub fn attention_alpha(x_context: &DMatrix<f64>, x_query: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    check_sigma(sigma)?;
    if x_context.ncols() == 0 {
        return Err(Error::config("attention weights need at least one context point"));
    }
    ensure_len("attention weights", x_context.nrows(), x_query.len())?;
    let s2 = sigma * sigma;
    let logits = x_context.tr_mul(x_query) / s2;
    let max = logits.max();
    let w = logits.map(|l| (l - max).exp());
    let total = w.sum();
    Ok(w / total)
}

/// One softmax layer: every column's label channel moves by
/// `−r_ℓ Σᵢ αᵢ yᵢ` with `α` taken over the context positions. Features are
/// left as they are.
pub fn softmax_attention_forward(
    z: &TokenMatrix,
    cfg: &SoftmaxAttentionConfig,
    layer: usize,
) -> Result<TokenMatrix> {
    let r = *cfg
        .rates
        .get(layer)
        .ok_or_else(|| Error::config(format!("layer {layer} out of range for {} layers", cfg.layers())))?;
    let ctx = z.context_features();
    let labels = z.context_labels();
    let d = z.dim();
    let mut out = z.matrix().clone();
    for j in 0..z.matrix().ncols() {
        let alpha = attention_alpha(&ctx, &z.features(j), cfg.sigma)?;
        out[(d, j)] -= r * alpha.dot(&labels);
    }
    TokenMatrix::new(out)
}

/// Current function values at the `n` context points followed by the query.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionEstimate {
    pub values: DVector<f64>,
}

impl FunctionEstimate {
    pub fn zeros(n_context: usize) -> Self {
        Self { values: DVector::zeros(n_context + 1) }
    }

    pub fn query_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// `f(x) ← f(x) + r Σᵢ (yᵢ − f(xᵢ)) K(xᵢ, x)` at every context point and the
/// query, with the unnormalized kernel.
pub fn functional_gd_step(
    f: &FunctionEstimate,
    data: &[LabeledExample],
    x_query: &DVector<f64>,
    r: f64,
    sigma: f64,
) -> Result<FunctionEstimate> {
    check_sigma(sigma)?;
    ensure_len("function estimate", data.len() + 1, f.values.len())?;
    let residuals: Vec<f64> = data.iter().enumerate().map(|(i, ex)| ex.label.value() - f.values[i]).collect();
    let points: Vec<&DVector<f64>> =
        data.iter().map(|ex| ex.features.as_vector()).chain(std::iter::once(x_query)).collect();
    let mut values = f.values.clone();
    for (k, x) in points.iter().enumerate() {
        let mut step = 0.0;
        for (ex, res) in data.iter().zip(&residuals) {
            step += res * exponential_kernel(ex.features.as_vector(), x, sigma)?;
        }
        values[k] += r * step;
    }
    Ok(FunctionEstimate { values })
}
