//! Deterministic simulator of a neuromorphic SPAD imaging pipeline.
//!
//! The pipeline runs photon arrival generation and a SPAD detector model
//! ([`photon_sim`]), a cycle-level D-flip-flop ring encoder with clock gating
//! and an injection stopper ([`ring`]), a histogram-then-binarize reference
//! encoder ([`oracle`]), and a leaky-integrate-and-fire network trained with
//! surrogate-gradient backpropagation through time ([`snn`]) that estimates
//! fluorescence lifetimes from 128-step binary spike trains ([`dataset`]).
//!
//! All randomness flows from explicit `u64` seeds through ChaCha streams, so
//! every function here is reproducible bit for bit.

pub mod dataset;
pub mod error;
pub mod oracle;
pub mod photon_sim;
pub mod ring;
pub mod seed;
pub mod snn;
pub mod spike_train;

pub use error::{Error, Result};
pub use spike_train::SpikeTrain;
