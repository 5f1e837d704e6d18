//! Core data model and the separable forward operator.

mod dft;
mod geometry;
mod operator;
mod types;

pub use dft::{dft_spatial, dft_spectral, unitary_dft, SpatialDirection, SpectralDirection};
pub use geometry::{AcquisitionGeometry, DftSign};
pub use operator::{ForwardModel, FrameOperator, NormalCache, NormalMatrix};
pub use types::{
    BaseSpectraSet, Frame, SamplePoint, SamplingSchedule, SignalSet, SubstanceDistribution,
};
