//! Connectome fingerprinting toolkit: functional-connectivity construction,
//! leverage-score feature selection with randomized row sampling, subject
//! matching across sessions and tasks, t-SNE condition maps, and linear
//! performance regression, all fully deterministic for a given seed.
//!
//! Start with [`ingest::generate_synthetic_cohort`] or a cohort manifest,
//! build group matrices with [`connectome::build_group_matrix`], and drive
//! complete experiments via [`pipeline::run_experiment`].

pub mod connectome;
pub mod error;
pub mod ingest;
pub mod matcher;
pub mod pipeline;
pub mod regress;
pub mod rng;
pub mod sketch;
pub mod tsne;

pub use error::{Error, Result};
