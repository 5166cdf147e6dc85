#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use strategem::strategic::{CostMatrix, LinearClassifier, ManipulationConfig};

/// `BBᵀ + 0.1·I` from row-major entries of `B`.
pub fn spd(d: usize, entries: &[f64]) -> CostMatrix {
    let b = DMatrix::from_row_slice(d, d, entries);
    CostMatrix::new(&b * b.transpose() + DMatrix::identity(d, d) * 0.1).expect("BBᵀ + 0.1I is SPD")
}

/// A dimension together with a square block and two vectors of that size.
pub fn sized(max_dim: usize) -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|d| {
        (
            Just(d),
            prop::collection::vec(-1.0..1.0f64, d * d),
            prop::collection::vec(-1.0..1.0f64, d),
            prop::collection::vec(-1.0..1.0f64, d),
        )
    })
}

pub fn manipulation(d: usize, entries: &[f64], eta: f64, lambda: f64) -> ManipulationConfig {
    ManipulationConfig::new(eta, lambda, spd(d, entries)).unwrap()
}

pub fn classifier(w: &[f64]) -> LinearClassifier {
    LinearClassifier::new(w.to_vec(), 0.5).unwrap()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
