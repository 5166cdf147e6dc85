use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// Symmetry tolerance applied when validating a cost matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A finite, non-empty feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(DVector<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(values))
    }

    pub fn from_dvector(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("feature vector must have at least one entry"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("feature vector entry {i} is not finite ({})", values[i])));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim.max(1)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Adds `delta` in place, keeping the finiteness invariant.
    pub fn shifted(&self, delta: &DVector<f64>) -> Result<Self> {
        ensure_len("feature shift", self.dim(), delta.len())?;
        Self::from_dvector(&self.0 + delta)
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(Error::config(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(features: FeatureVector, label: Label) -> Self {
        Self { features, label }
    }

    pub fn from_parts(values: Vec<f64>, label: u8) -> Result<Self> {
        Ok(Self { features: FeatureVector::new(values)?, label: Label::try_from(label)? })
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }
}

/// Symmetric positive-definite Mahalanobis matrix `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(DMatrix<f64>);

impl CostMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::CostMatrix(format!(
                "matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.nrows() == 0 {
            return Err(Error::CostMatrix("matrix must be non-empty".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::CostMatrix("matrix has non-finite entries".into()));
        }
        let asym = (&entries - entries.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::CostMatrix(format!("matrix is not symmetric (max |M - Mᵀ| = {asym:e})")));
        }
        if entries.clone().cholesky().is_none() {
            return Err(Error::CostMatrix(
                "matrix is not positive definite (Cholesky factorization failed)".into(),
            ));
        }
        Ok(Self(entries))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// How a raw linear score is turned into the probability that enters the
/// cross-entropy loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreLink {
    /// The raw score `W·x` is read directly as a probability.
    #[default]
    Identity,
    /// The raw score is a logit, squashed by the logistic function.
    Logistic,
}

impl ScoreLink {
    pub fn probability(self, score: f64) -> f64 {
        match self {
            ScoreLink::Identity => score,
            ScoreLink::Logistic => 1.0 / (1.0 + (-score).exp()),
        }
    }

    /// Decision threshold on the raw score that corresponds to p = 0.5.
    pub fn default_threshold(self) -> f64 {
        match self {
            ScoreLink::Identity => 0.5,
            ScoreLink::Logistic => 0.0,
        }
    }
}

impl std::str::FromStr for ScoreLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(ScoreLink::Identity),
            "logistic" | "sigmoid" => Ok(ScoreLink::Logistic),
            other => Err(Error::config(format!("unknown score link '{other}' (expected identity|logistic)"))),
        }
    }
}

impl std::fmt::Display for ScoreLink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreLink::Identity => "identity",
            ScoreLink::Logistic => "logistic",
        })
    }
}

/// Linear decision rule `f(x) = W·x`, classified positive when the raw score
/// reaches `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    weights: DVector<f64>,
    threshold: f64,
    link: ScoreLink,
}

impl LinearClassifier {
    pub fn new(weights: Vec<f64>, threshold: f64) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(weights), threshold)
    }

    pub fn from_dvector(weights: DVector<f64>, threshold: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("classifier needs at least one weight"));
        }
        if weights.iter().any(|w| !w.is_finite()) || !threshold.is_finite() {
            return Err(Error::config("classifier weights and threshold must be finite"));
        }
        Ok(Self { weights, threshold, link: ScoreLink::Identity })
    }

    pub fn with_link(mut self, link: ScoreLink) -> Self {
        self.link = link;
        self
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn link(&self) -> ScoreLink {
        self.link
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Same threshold and link, new weights.
    pub fn with_weights(&self, weights: DVector<f64>) -> Result<Self> {
        ensure_len("classifier weights", self.dim(), weights.len())?;
        Ok(Self { weights, threshold: self.threshold, link: self.link })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = Self::from_dvector(&self.weights * factor, self.threshold * factor)?;
        out.link = self.link;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationConfig {
    pub eta: f64,
    pub lambda: f64,
    pub cost: CostMatrix,
}

impl ManipulationConfig {
    pub fn new(eta: f64, lambda: f64, cost: CostMatrix) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("eta must be > 0, got {eta}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { eta, lambda, cost })
    }

    pub fn dim(&self) -> usize {
        self.cost.dim()
    }

    /// `I + 2ηλM`.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::identity(d, d) + self.cost.matrix() * (2.0 * self.eta * self.lambda)
    }
}

/// `A = (I + 2ηλM)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationMatrix(pub DMatrix<f64>);

impl AdaptationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationDelta(pub DVector<f64>);

impl ManipulationDelta {
    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}
