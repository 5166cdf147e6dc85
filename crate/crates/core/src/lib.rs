//! Strategic classification as a bi-level game, together with attention
//! layers whose forward passes reproduce each stage of that game.
//!
//! [`strategic`] holds the game itself, [`attention`] the constructed
//! layers, [`equivalence`] the dual-track comparisons between the two,
//! [`data`] dataset handling and [`cli`] the command-line front end.

pub mod attention;
pub mod cli;
pub mod data;
pub mod equivalence;
pub mod error;
pub mod strategic;

pub use error::{Error, Result};
