//! Role mining and influence estimation over timestamped link-sharing corpora.
//!
//! The crate is organized as a pipeline:
//!
//! - [`corpus`]: post ingestion, link source typing, windowing, account selection
//! - [`lexicon`]: word-category lexicons and opinion/solicitation phrase patterns
//! - [`features`]: the 13-dimensional per-(account, window) feature vector
//! - [`roles`]: kmeans++ clustering, elbow scan, and the robustness battery
//! - [`dynamics`]: role retention and role-transition estimation
//! - [`hawkes`]: discrete-time multivariate Hawkes simulation, EM fitting,
//!   and per-source-type influence aggregation
//!
//! [`synth`] generates the deterministic synthetic corpus used by the
//! end-to-end tests.

// Matrix code indexes several arrays by the same (from, to) pair.
#![allow(clippy::needless_range_loop)]

pub mod corpus;
pub mod dynamics;
pub mod error;
pub mod features;
pub mod hawkes;
pub mod lexicon;
pub mod roles;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
