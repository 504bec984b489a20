//! Active learning under domain shift.
//!
//! Trains domain-adversarial classifiers, scores unlabeled target rows with
//! the importance weight `((1 - G_d) / G_d) · H(G_y)`, runs round-based
//! selection against a simulated oracle, and compares the result with other
//! sampling strategies and training schemes.

pub mod active_loop;
pub mod dann;
pub mod data;
pub mod harness;
mod error;
pub mod nn;
pub mod sampling;

pub use error::{Error, Result};
