//! Prosody-aware speech-to-intent classification.
//!
//! The crate covers the whole desk-scale pipeline: a log-mel and prosodic
//! front end ([`dsp`]), a small define-by-run reverse-mode autodiff engine
//! ([`autodiff`]), the teacher/student/baseline architectures with
//! prosody-attention pooling ([`model`]), prosody-distillation training
//! ([`train`]), WAV/manifest handling plus a synthetic prosody-disambiguated
//! corpus ([`data`]) and evaluation/reporting ([`eval`]).
//!
//! Per-utterance work (feature extraction, forward/backward passes within a
//! batch, evaluation) fans out through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Reductions
//! always happen in a fixed order, so results are bitwise identical either way.

pub mod autodiff;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod model;
pub mod par;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
