use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_len, Error, Result};
use crate::strategic::{FeatureVector, Label, LabeledExample};

/// Stacked token block: rows `0..d` hold features and row `d` is the
/// label/score channel; columns `0..n` are context tokens and column `n` is
/// the query.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    entries: DMatrix<f64>,
}

impl TokenMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() < 2 {
            return Err(Error::config("token matrix needs d >= 1 feature rows plus a label row"));
        }
        if entries.ncols() < 2 {
            return Err(Error::config("token matrix needs n >= 1 context tokens plus a query"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("token matrix entries must be finite"));
        }
        Ok(Self { entries })
    }

    /// Builds the block from real-valued `(x, y)` context pairs and a query.
    pub fn from_pairs(
        context: &[(DVector<f64>, f64)],
        query: &DVector<f64>,
        query_label: f64,
    ) -> Result<Self> {
        if context.is_empty() {
            return Err(Error::config("token matrix needs at least one context token"));
        }
        let d = query.len();
        let n = context.len();
        let mut z = DMatrix::zeros(d + 1, n + 1);
        for (i, (x, y)) in context.iter().enumerate() {
            ensure_len("context token", d, x.len())?;
            z.view_mut((0, i), (d, 1)).copy_from(x);
            z[(d, i)] = *y;
        }
        z.view_mut((0, n), (d, 1)).copy_from(query);
        z[(d, n)] = query_label;
        Self::new(z)
    }

    pub fn from_examples(
        context: &[LabeledExample],
        query: &FeatureVector,
        query_label: f64,
    ) -> Result<Self> {
        let pairs: Vec<_> =
            context.iter().map(|ex| (ex.features.as_vector().clone(), ex.label.value())).collect();
        Self::from_pairs(&pairs, query.as_vector(), query_label)
    }

    /// Regression prompt whose query label channel starts at `−w0·x_test`.
    pub fn regression(
        prompt: &[(DVector<f64>, f64)],
        x_test: &DVector<f64>,
        w0: &DVector<f64>,
    ) -> Result<Self> {
        ensure_len("regression initial weights", x_test.len(), w0.len())?;
        Self::from_pairs(prompt, x_test, -w0.dot(x_test))
    }

    /// One context token `x/‖x‖²` carrying label `y`, queried at `(x, y)`.
    /// Its inner product with the query is 1, so the homogeneity factor
    /// vanishes by construction.
    pub fn exact_context(query: &FeatureVector, y: Label) -> Result<Self> {
        let sq = query.norm_squared();
        if sq < 1e-300 {
            return Err(Error::DegenerateContext(sq));
        }
        let token = query.as_vector() / sq;
        Self::from_pairs(&[(token, y.value())], query.as_vector(), y.value())
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows() - 1
    }

    pub fn n_context(&self) -> usize {
        self.entries.ncols() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn features(&self, col: usize) -> DVector<f64> {
        self.entries.column(col).rows(0, self.dim()).into_owned()
    }

    pub fn label(&self, col: usize) -> f64 {
        self.entries[(self.dim(), col)]
    }

    pub fn query_index(&self) -> usize {
        self.n_context()
    }

    pub fn query_features(&self) -> DVector<f64> {
        self.features(self.query_index())
    }

    pub fn query_label(&self) -> f64 {
        self.label(self.query_index())
    }

    /// `d × n` block of context features.
    pub fn context_features(&self) -> DMatrix<f64> {
        self.entries.view((0, 0), (self.dim(), self.n_context())).into_owned()
    }

    pub fn context_labels(&self) -> DVector<f64> {
        self.entries.row(self.dim()).columns(0, self.n_context()).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let ctx = vec![(DVector::from_vec(vec![1.0, 2.0]), 1.0)];
        let z = TokenMatrix::from_pairs(&ctx, &DVector::from_vec(vec![3.0, 4.0]), 0.0).unwrap();
        assert_eq!(z.dim(), 2);
        assert_eq!(z.n_context(), 1);
        assert_eq!(z.matrix()[(2, 0)], 1.0);
        assert_eq!(z.query_features().as_slice(), &[3.0, 4.0]);
        assert_eq!(z.context_labels().as_slice(), &[1.0]);
    }

    #[test]
    fn regression_query_label() {
        let ctx = vec![(DVector::from_vec(vec![1.0]), 2.0)];
        let x = DVector::from_vec(vec![3.0]);
        let z = TokenMatrix::regression(&ctx, &x, &DVector::from_vec(vec![0.5])).unwrap();
        assert_eq!(z.query_label(), -1.5);
        let z = TokenMatrix::regression(&ctx, &x, &DVector::zeros(1)).unwrap();
        assert_eq!(z.query_label(), 0.0);
    }

    #[test]
    fn exact_context_has_unit_overlap() {
        let q = FeatureVector::new(vec![0.3, -2.0, 1.5]).unwrap();
        let z = TokenMatrix::exact_context(&q, Label::Negative).unwrap();
        assert!((z.features(0).dot(&z.query_features()) - 1.0).abs() < 1e-15);
        assert!(TokenMatrix::exact_context(&FeatureVector::zeros(2), Label::Negative).is_err());
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(TokenMatrix::new(DMatrix::from_element(3, 2, f64::NAN)).is_err());
        assert!(TokenMatrix::new(DMatrix::zeros(1, 2)).is_err());
        assert!(TokenMatrix::new(DMatrix::zeros(2, 1)).is_err());
    }
}
