//! Open-world continual learning on synthetic multimodal streams.
//!
//! The crate covers the full loop: generating class-incremental multimodal
//! benchmarks, training replay-based learners (plain replay, fused-logit
//! distillation, per-modality logit distillation), scoring test samples for
//! novelty with energy-based modality reliability weighting, and evaluating
//! AUC/FPR95/accuracy/forgetting with significance tests.
//!
//! All randomness flows through explicit [`numcore::Rng`] values, so every
//! run is bitwise reproducible from its seeds.

pub mod error;
pub mod eval;
pub mod datagen;
pub mod memory;
pub mod model;
pub mod score;
pub mod train;
pub mod numcore;
pub(crate) mod textio;

pub use error::{Error, Result};
