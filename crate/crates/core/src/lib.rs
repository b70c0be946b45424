//! Discrimination testing for black-box binary classifiers.
//!
//! One protected group is mapped onto the other with an optimal transport
//! map (exact assignment or a cost-penalized adversarial generator); members
//! whose classification differs from their counterpart's form the flipsets,
//! and per-feature summaries of the flipsets form transparency reports.

pub mod data;
pub mod error;
pub mod exact;
pub mod flip;
pub mod io;
pub mod linalg;
pub mod neural;
pub mod rng;
pub mod synth;
pub mod validation;

pub use data::{cost_matrix, CostFunction, FeatureMatrix, GroupedDataset, Normalizer};
pub use error::{Error, Result};
pub use exact::{brute_force_exact, solve_exact, subsample, ExactMap};
