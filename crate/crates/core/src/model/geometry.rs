use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of the exponent used by every DFT in the signal model.
///
/// `Forward` is `exp(-2πi kn/N)`, `Inverse` is `exp(+2πi kn/N)`. Both are
/// unitary. Simulation and reconstruction must agree on the choice; the
/// estimation problem is equivalent under either.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DftSign {
    Forward,
    #[default]
    Inverse,
}

impl DftSign {
    pub fn exponent_sign(self) -> f64 {
        match self {
            DftSign::Forward => -1.0,
            DftSign::Inverse => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            DftSign::Forward => DftSign::Inverse,
            DftSign::Inverse => DftSign::Forward,
        }
    }
}

/// Cartesian acquisition grid: voxels, both spectral axes, and frame timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionGeometry {
    /// Voxel count along each spatial axis.
    pub spatial_dims: Vec<usize>,
    /// Indirect spectral axis length (point-by-point sampled).
    pub spectral_evolution_points: usize,
    /// Direct spectral axis length (fully sampled by each readout).
    pub readout_points: usize,
    #[serde(default)]
    pub dft_sign_convention: DftSign,
    pub frame_interval_s: f64,
}

impl AcquisitionGeometry {
    pub fn new(spatial_dims: Vec<usize>, n_c: usize, n_ro: usize) -> Result<Self> {
        let g = AcquisitionGeometry {
            spatial_dims,
            spectral_evolution_points: n_c,
            readout_points: n_ro,
            dft_sign_convention: DftSign::default(),
            frame_interval_s: 4.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spatial_dims.is_empty() {
            return Err(Error::Config(
                "spatial_dims must list at least one axis".into(),
            ));
        }
        if self.spatial_dims.contains(&0) {
            return Err(Error::Config(format!(
                "spatial_dims {:?} contains a zero",
                self.spatial_dims
            )));
        }
        if self.spectral_evolution_points == 0 || self.readout_points == 0 {
            return Err(Error::Config("spectral axis lengths must be >= 1".into()));
        }
        if !(self.frame_interval_s.is_finite() && self.frame_interval_s > 0.0) {
            return Err(Error::Config(format!(
                "frame_interval_s must be positive, got {}",
                self.frame_interval_s
            )));
        }
        Ok(())
    }

    /// Total voxel count N.
    pub fn n_voxels(&self) -> usize {
        self.spatial_dims.iter().product()
    }

    pub fn n_c(&self) -> usize {
        self.spectral_evolution_points
    }

    pub fn n_ro(&self) -> usize {
        self.readout_points
    }
}
