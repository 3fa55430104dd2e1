//! Subsampled random forests and a tree-permutation test for feature significance.
//!
//! The workflow is: build a [`Dataset`](data::Dataset), grow two forests
//! (one on the data, one with the features under test muted), predict both
//! at a held-out test set, and compare their MSEs against the distribution
//! obtained by shuffling trees between the two forests
//! ([`permtest::run_test`]). [`simbench`] reproduces level and power
//! experiments on synthetic models.

pub mod cli;
pub mod data;
pub mod error;
pub mod forest;
pub mod permtest;
pub mod plot;
pub mod report;
pub mod rng;
pub mod simbench;
pub mod tree;

pub use data::{Column, Dataset, FeatureKind, FeatureSubset, KnockoffColumns, MutingStrategy};
pub use error::{Error, Result};
pub use forest::{Forest, ForestConfig, PredictionMatrix, SubsampleDiagnostics, SubsampleSize};
pub use permtest::{ImportanceReport, PermTestConfig, PermTestResult};
pub use rng::Seed;
pub use tree::{RegressionTree, TreeConfig};
