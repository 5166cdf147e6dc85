use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::tokens::TokenMatrix;
use crate::error::{ensure_len, Error, Result};

/// Which matrix of a layer to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightBlock {
    Key,
    Query,
    Value,
    Projection,
}

/// One single-head linear attention layer. Values are `W_V e + b_V`; the bias
/// is zero unless a construction needs a constant value component.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayerWeights {
    key: DMatrix<f64>,
    query: DMatrix<f64>,
    value: DMatrix<f64>,
    projection: DMatrix<f64>,
    value_bias: DVector<f64>,
}

impl AttentionLayerWeights {
    pub fn new(
        key: DMatrix<f64>,
        query: DMatrix<f64>,
        value: DMatrix<f64>,
        projection: DMatrix<f64>,
    ) -> Result<Self> {
        let n = key.nrows();
        Self::with_value_bias(key, query, value, projection, DVector::zeros(n))
    }

    pub fn with_value_bias(
        key: DMatrix<f64>,
        query: DMatrix<f64>,
        value: DMatrix<f64>,
        projection: DMatrix<f64>,
        value_bias: DVector<f64>,
    ) -> Result<Self> {
        let n = key.nrows();
        if n == 0 {
            return Err(Error::config("attention weights must be non-empty"));
        }
        for (name, m) in [("key", &key), ("query", &query), ("value", &value), ("projection", &projection)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::config(format!(
                    "{name} matrix is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("{name} matrix has non-finite entries")));
            }
        }
        ensure_len("value bias", n, value_bias.len())?;
        if value_bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("value bias has non-finite entries"));
        }
        Ok(Self { key, query, value, projection, value_bias })
    }

    /// Token width `d + 1`.
    pub fn width(&self) -> usize {
        self.key.nrows()
    }

    pub fn key(&self) -> &DMatrix<f64> {
        &self.key
    }

    pub fn query(&self) -> &DMatrix<f64> {
        &self.query
    }

    pub fn value(&self) -> &DMatrix<f64> {
        &self.value
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn value_bias(&self) -> &DVector<f64> {
        &self.value_bias
    }

    pub fn block(&self, which: WeightBlock) -> &DMatrix<f64> {
        match which {
            WeightBlock::Key => &self.key,
            WeightBlock::Query => &self.query,
            WeightBlock::Value => &self.value,
            WeightBlock::Projection => &self.projection,
        }
    }

    /// Copy with one entry shifted by `amount`.
    pub fn perturbed(&self, which: WeightBlock, row: usize, col: usize, amount: f64) -> Result<Self> {
        let n = self.width();
        if row >= n || col >= n {
            return Err(Error::config(format!("entry ({row}, {col}) outside {n}x{n} block")));
        }
        let mut out = self.clone();
        let m = match which {
            WeightBlock::Key => &mut out.key,
            WeightBlock::Query => &mut out.query,
            WeightBlock::Value => &mut out.value,
            WeightBlock::Projection => &mut out.projection,
        };
        m[(row, col)] += amount;
        Ok(out)
    }
}

/// `Z + P (Σ_{i∈sources} v_i k_iᵀ) W_Q Z` on a bare matrix, with
/// `v_i = W_V z_i + b_V` and `k_i = W_K z_i`.
pub fn linear_attention_forward_raw(
    z: &DMatrix<f64>,
    layer: &AttentionLayerWeights,
    sources: Range<usize>,
) -> Result<DMatrix<f64>> {
    ensure_len("attention token width", layer.width(), z.nrows())?;
    if sources.end > z.ncols() || sources.start > sources.end {
        return Err(Error::config(format!(
            "source columns {sources:?} outside a {}-column block",
            z.ncols()
        )));
    }
    let src = z.columns(sources.start, sources.len());
    let mut values = &layer.value * src;
    for mut col in values.column_iter_mut() {
        col += &layer.value_bias;
    }
    let keys = &layer.key * src;
    let kernel = values * keys.transpose();
    Ok(z + &layer.projection * kernel * (&layer.query * z))
}

/// Updates every token as `e_j + P·(Σᵢ (W_V eᵢ)(W_K eᵢ)ᵀ)·(W_Q e_j)`. With
/// `mask_context_only` the sum runs over context tokens only.
pub fn linear_attention_forward(
    z: &TokenMatrix,
    layer: &AttentionLayerWeights,
    mask_context_only: bool,
) -> Result<TokenMatrix> {
    let end = if mask_context_only { z.n_context() } else { z.n_context() + 1 };
    TokenMatrix::new(linear_attention_forward_raw(z.matrix(), layer, 0..end)?)
}

/// `P·V·W_Kᵀ·W_Q·e` for a single token, evaluated right to left as a chain
/// of matrix-vector products.
pub fn folded_update(layer: &AttentionLayerWeights, token: &DVector<f64>) -> Result<DVector<f64>> {
    let n = layer.width();
    ensure_len("attention token width", n, token.len())?;
    let mut q = DVector::zeros(n);
    q.gemv(1.0, layer.query(), token, 0.0);
    let mut k = DVector::zeros(n);
    k.gemv_tr(1.0, layer.key(), &q, 0.0);
    let mut v = DVector::zeros(n);
    v.gemv(1.0, layer.value(), &k, 0.0);
    let mut out = DVector::zeros(n);
    out.gemv(1.0, layer.projection(), &v, 0.0);
    Ok(out)
}

/// Forward pass for a layer whose value matrix already holds the summed
/// context contribution: `e_j + P·V·W_Kᵀ·W_Q·e_j`.
pub fn folded_attention_forward(z: &TokenMatrix, layer: &AttentionLayerWeights) -> Result<TokenMatrix> {
    let mut out = z.matrix().clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col += folded_update(layer, &z.matrix().column(j).into_owned())?;
    }
    TokenMatrix::new(out)
}
