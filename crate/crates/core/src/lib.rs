//! Federated training of spiking variational quantum classifiers on a dense
//! statevector simulator.
//!
//! * [`qsim`] – statevector and the RY / RZ / Rot / CZ / X gate set
//! * [`circuit`] – encoding, layered ansatz, threshold spikes, readout, gradients
//! * [`fedcore`] – non-IID sharding, Adam, local updates, averaging, τ schedule
//! * [`datasets`] – bundled data, CSV ingestion, split, PCA, scaling
//! * [`metrics`] – accuracy, MSE and macro-averaged classification report

pub mod circuit;
pub mod datasets;
pub mod error;
pub mod fedcore;
pub mod metrics;
pub mod qsim;
pub mod seed;

pub use error::{Error, Result};
