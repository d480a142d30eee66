//! Draft refinement for blockwise parallel decoding.
//!
//! A blockwise parallel LM predicts the next `h` tokens at once, one head per
//! position. Rather than taking the argmax of every head as the draft, this
//! crate keeps the top-k tokens of each head as a sausage lattice and picks
//! better drafts from it, either greedily with a pluggable local scorer or
//! globally with an n-gram model and an exact p-best dynamic program. The
//! [`engine`] module runs the predict / verify / accept loop and
//! [`analysis`] measures block efficiency and the statistics around it.
//!
//! Lattice and rescoring math is generic over [`Scalar`]; the aliases at the
//! crate root fix the common `f64` and `f32` instantiations.

// `!(x >= 0.0)` is how NaN gets rejected along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
pub mod error;
pub mod lattice;
pub mod ngram;
pub mod rescoring;
pub mod rng;
pub mod scalar;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use vocab::{TokenId, Vocabulary};

pub type Lattice = lattice::SausageLattice<f64>;
pub type LatticeF32 = lattice::SausageLattice<f32>;
pub type Arc = lattice::LatticeArc<f64>;
pub type Draft = rescoring::DraftCandidate<f64>;
pub type DraftF32 = rescoring::DraftCandidate<f32>;
pub type Report = engine::DecodeReport<f64>;
pub type ReportF32 = engine::DecodeReport<f32>;
