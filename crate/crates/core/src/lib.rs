//! Compressed-sensing reconstruction of time-varying multi-substance
//! distributions from randomly undersampled multi-spectral MRSI signals.
//!
//! Every voxel spectrum is modelled as a weighted sum of known substance
//! base spectra, so the unknown is a real tensor `x(frame, voxel, substance)`.
//! Each acquired frame contributes one undersampled readout `y_m = A_m x_m`.
//! The reconstruction minimizes a least-squares data term plus an `ℓ1`
//! penalty on `x` and an elastic-net penalty on its frame-to-frame
//! differences, using a nested ADMM.
//!
//! Module map:
//! - [`model`]: geometry, data types, unitary DFTs and the forward operator
//! - [`sampling`]: Sobol-based undersampling schedules
//! - [`phantom`]: synthetic ground truth, base spectra and noisy acquisition
//! - [`solver`]: the ADMM reconstruction and its closed-form updates
//! - [`oracle`]: an independent primal-dual solver and optimality check
//! - [`selection`]: two-fold cross-validation over regularization weights
//! - [`evaluate`]: reconstruction metrics, profiles and PGM snapshots
//! - [`tensor`]: the MRST binary tensor container

pub mod error;
pub mod evaluate;
pub mod model;
pub mod oracle;
pub mod phantom;
pub mod sampling;
pub mod selection;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
