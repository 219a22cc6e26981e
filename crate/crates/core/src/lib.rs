//! Audits and enforces fairness of binary classifiers trained on
//! selection-biased tabular data.
//!
//! The library answers three questions about a classifier trained on a
//! sample whose inclusion depended on attribute values:
//!
//! * what range of fairness-violation values is consistent with the data,
//!   the data-collection diagram and whatever external statistics exist
//!   ([`cra`]);
//! * which selection structures can make an otherwise fair learning problem
//!   unfair ([`graph::diagnose`]);
//! * how to train a logistic-regression classifier whose consistent upper
//!   bound on unfairness sits below a chosen threshold ([`train`]).
//!
//! [`synth`] generates benchmark populations with configurable selection
//! mechanisms and [`oracle`] holds the brute-force counterparts used to
//! validate the fast paths.

pub mod cra;
pub mod data;
pub mod fairness;
pub mod graph;
pub mod oracle;
pub mod synth;
pub mod train;

/// Version string embedded into every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
