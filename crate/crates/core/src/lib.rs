//! Counterfactual search over a Takagi-Sugeno fuzzy model.
//!
//! The crate is `no_std` with `alloc`. It holds everything that does not
//! touch the filesystem or the network:
//!
//! - [`fuzzy`]: first-order Takagi-Sugeno inference with Gaussian memberships.
//! - [`training`]: hybrid least-squares / gradient-descent fitting.
//! - [`annealer`]: box-constrained simulated annealing with lockable coordinates.
//! - [`counterfactual`]: the search that turns a factual antecedent into the
//!   antecedent that best attains a desired consequent.
//! - [`data`]: the dyadic feature schema, normalization, balanced splits and a
//!   synthetic generator.
//!
//! File formats, the CLI and the HTTP service live in the `countermachine`
//! crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod annealer;
pub mod counterfactual;
pub mod data;
pub mod fuzzy;
mod linalg;
pub mod training;

pub use annealer::{AnnealConfig, AnnealError, AnnealOutcome, AnnealTrace, TraceRecord};
pub use counterfactual::{
    find_counterfactual, CounterfactualError, CounterfactualQuery, CounterfactualResult, Delta,
    Direction,
};
pub use data::{Dataset, DataError, DyadRecord, GroundTruth, Label, NormalizationParams};
pub use fuzzy::{
    Consequent, Evaluation, FeatureVector, FuzzyError, LabelEncoding, MembershipFunction,
    ModelDocument, Rule, TskModel,
};
pub use training::{TrainConfig, TrainError, TrainReport};

/// Canonical lowercase feature names, in dyad-schema order.
pub const FEATURE_NAMES: [&str; 7] = [
    "distance",
    "contiguity",
    "major_power",
    "allies",
    "democracy",
    "econ_interdependence",
    "capability",
];
