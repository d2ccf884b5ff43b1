//! Variable selection and count prediction with regression trees and random
//! forests.
//!
//! The crate grows CART regression trees and bagged forests, scores variables
//! by out-of-bag permutation importance, estimates a minimum-importance
//! threshold from repeated full-data fits, tunes the node size / tree count by
//! a quadratic-distance criterion on importance vectors, and wires all of it
//! into a two-level cross-validation loop that selects a sparse predictor
//! subset and produces held-out predictions.
//!
//! Parameter naming: `min_node_size` is the per-tree node-size control,
//! `ntree` the number of trees in a forest and `feature_subset_size` the number
//! of candidate variables drawn at each split.

pub mod bundle;
pub mod cart;
pub mod cli;
pub mod data;
pub mod error;
pub mod forest;
pub mod par;
pub mod pipeline;
pub mod recode;
pub mod rng;
pub mod simgen;
pub mod tuning;

pub use error::{Error, Result};
