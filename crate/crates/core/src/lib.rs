//! Soil-fertility style classification pipeline for imbalanced tabular data.
//!
//! The crate is organised by stage:
//!
//! | module | role |
//! |--------|------|
//! | [`dataset`] | CSV ingestion, standardization, stratified split, oversampling, synthetic data |
//! | [`umap`] | fuzzy k-NN graph and negative-sampling layout optimization |
//! | [`lasso`] | coordinate-descent LASSO over a λ path, entry-order feature ranking |
//! | [`sarn`] | sparse attention regression network (factorized convolution, masked attention, DKL loss) |
//! | [`metrics`] | confusion matrix, accuracy, macro precision/recall, Cohen's kappa |
//! | [`pipeline`] | end-to-end composition and artifact persistence |
//! | [`cli`] | the `ummaso` command-line tool |

// NaN has to fail every range check, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod sarn;
pub mod umap;

pub use error::{Error, Result};
pub use ndarray;

/// Semantic version of the library and tool.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
