//! Neural networks whose connection weights are input-dependent Chebyshev
//! expansions, `w(x) = sum_j c_j T_j(x)`, next to a plain MLP baseline.
//!
//! The crate is organised bottom-up:
//!
//! - [`basis`]: Chebyshev polynomials of the first kind and range maps.
//! - [`matrix`]: the dense row-major [`Matrix`] every layer computes with.
//! - [`network`]: dense and Chebyshev-adaptive layers, forward/backward passes,
//!   softmax cross-entropy and the model file format.
//! - [`optim`]: SGD (with momentum) and Adam.
//! - [`prune`]: magnitude thresholding with layer-by-layer fine-tuning and
//!   grouped coefficient-norm pruning.
//! - [`data`]: CSV ingestion, min-max scaling, stratified splits and
//!   synthetic generators.
//! - [`multicheb`]: tensor-product Chebyshev series fitting and pairwise
//!   decompositions.
//! - [`harness`]: training loops, the MLP-vs-Chebyshev comparison protocol,
//!   k-sweeps, pruning runs, timing and figure-data exports.

// `!(a < b)` is used on purpose wherever NaN must fall on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]


pub mod basis;
pub mod data;
mod error;
pub mod harness;
pub mod matrix;
pub mod multicheb;
pub mod network;
pub mod optim;
pub mod prune;

pub use error::{Error, Result};
pub use matrix::Matrix;
