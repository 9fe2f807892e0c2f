//! Multi-label non-intrusive load monitoring (NILM).
//!
//! Per-appliance current waveforms are superposed into synthetic household
//! aggregates, reduced to a fused set of PCA projections and kurtosis-ranked
//! FastICA components, and classified by a residual feed-forward network
//! that flags each appliance class as active or inactive.
//!
//! Module map:
//!
//! * [`signal`] waveform primitives (resampling, zero crossings, windows, RMS)
//! * [`ingest`] PLAID-style CSV loading and synthetic appliance signatures
//! * [`mixer`] random superposition of appliance windows into aggregates
//! * [`decomp`] PCA, FastICA, kurtosis ranking and feature fusion
//! * [`model`] the residual classifier, BCE loss, Adam and training loop
//! * [`baseline`] Fryze and FIT-PS feature transforms
//! * [`eval`] sample-averaged, per-class and per-k F1 reports
//! * [`pipeline`] config-driven `generate`/`train`/`eval`/`report` commands

pub mod baseline;
pub mod decomp;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod io;
pub mod mixer;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod signal;

pub use error::{NilmError, Result};

/// Version stamped into every persisted artifact.
pub const ARTIFACT_VERSION: u32 = 1;
