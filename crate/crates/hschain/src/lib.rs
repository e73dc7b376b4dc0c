//! Data-parallel outlier detection for large, possibly mixed-type datasets.
//!
//! The pipeline has three steps: hashed sparse random projection of each
//! point into a K-dimensional sketch, density estimation with an ensemble of
//! half-space chains backed by count-min sketches, and outlier scoring via
//! extrapolated minimum bin counts. All stages run as programs against an
//! in-process shared-nothing execution engine ([`engine`]), so results are
//! independent of partitioning and thread scheduling. A streaming front-end
//! ([`streaming`]) applies per-feature delta updates to cached sketches and
//! re-scores in constant time against a frozen model.

pub mod bench;
pub mod chain;
pub mod cli;
pub mod cms;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod hash;
pub mod model;
pub mod projector;
pub mod scoring;
pub mod streaming;

pub use error::{Error, Result};
