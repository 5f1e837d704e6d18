//! Undersampling design: Sobol points with an exponential evolution-axis
//! transform and uniform k-space quantization.

mod schedule;
mod sobol;

pub use schedule::{
    build_schedule, default_psi, spatial_index, spectral_index_transform, GapSpec, SamplerConfig,
};
pub use sobol::{l2_star_discrepancy_sq, sobol_sequence, Sobol, MAX_DIMENSION};
