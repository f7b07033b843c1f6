//! Outdated fact detection for knowledge graphs.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`kgdata`] loads triple files, cleans the evaluation splits and injects
//!    labeled outdated facts.
//! 2. [`embed_init`] trains TransE to produce initial entity and relation
//!    features.
//! 3. [`fact_attention`] and [`r2n_contrast`] are trained jointly: a
//!    multi-head attention encoder over facts, plus a contrastive objective
//!    on the relation co-occurrence graph.
//! 4. [`detector`] trains a fully connected classifier on frozen fact
//!    vectors and reports accuracy, precision, recall and F1.
//!
//! [`pipeline`] wires the stages together and [`sweep`] repeats the
//! pipeline over a grid of hyperparameter values.

pub mod detector;
pub mod embed_init;
pub mod error;
pub mod fact_attention;
pub mod kgdata;
pub mod metrics;
pub mod numcore;
pub mod pipeline;
pub mod r2n_contrast;
pub mod sweep;
pub mod trainer;

pub use error::{Error, Result};
pub use numcore::{Matrix, Rng};
