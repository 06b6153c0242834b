//! Training and simulation engine for spiking networks with binary {+1,-1}
//! synaptic weights.
//!
//! The crate provides discrete-time spike-response dynamics with local
//! surrogate-gradient learning, two training rules over binary weights — a
//! straight-through rule on latent real weights and a variational Bayes rule
//! on Bernoulli logits with relaxed sampling — plus input encodings, dataset
//! handling (including event-camera recordings), calibration evaluation, and
//! an experiment runner behind a command-line front end.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod events;
pub mod math;
pub mod network;
pub mod oracle;
pub mod rng;
pub mod runner;
pub mod spikes;
pub mod srm;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
