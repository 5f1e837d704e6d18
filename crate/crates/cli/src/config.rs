use std::path::Path;

use mrsi_cs::model::{AcquisitionGeometry, DftSign};
use mrsi_cs::phantom::PhantomConfig;
use mrsi_cs::sampling::SamplerConfig;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// One document drives the whole pipeline; each command reads the sections it needs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Needed when there is no `phantom` section to take it from.
    #[serde(default)]
    pub geometry: Option<AcquisitionGeometry>,
    #[serde(default)]
    pub phantom: Option<PhantomConfig>,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub solver: Option<SolverSection>,
    #[serde(default)]
    pub cv: Option<CvSection>,
    #[serde(default)]
    pub evaluate: Option<EvaluateSection>,
}

/// Solver settings with every field optional so that flags can fill the gaps.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub lambda_x: Option<f64>,
    pub lambda_w1: Option<f64>,
    pub lambda_w2: Option<f64>,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub mu: Option<f64>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub rel_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    /// Values used on every axis unless an axis is given explicitly.
    pub grid: Option<Vec<f64>>,
    pub lambda_x: Option<Vec<f64>>,
    pub lambda_w1: Option<Vec<f64>>,
    pub lambda_w2: Option<Vec<f64>>,
    /// Outer iterations per CV solve.
    pub outer_iters: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default)]
    pub snapshot_frames: Vec<usize>,
    pub upsample: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Failure::config(format!("{path}: {}", e.inner()))
        })
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Failure::config(format!("{} is not UTF-8", path.display())))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn geometry(&self) -> Result<AcquisitionGeometry, Failure> {
        self.geometry
            .clone()
            .or_else(|| self.phantom.as_ref().map(|p| p.geometry.clone()))
            .ok_or_else(|| {
                Failure::config("geometry: missing (give `geometry` or `phantom.geometry`)")
            })
    }

    pub fn phantom(&self) -> Result<&PhantomConfig, Failure> {
        self.phantom
            .as_ref()
            .ok_or_else(|| Failure::config("phantom: missing section"))
    }

    pub fn sampler(&self) -> Result<&SamplerConfig, Failure> {
        self.sampler
            .as_ref()
            .ok_or_else(|| Failure::config("sampler: missing section"))
    }
}

/// Geometry and labels of a dataset, written next to its tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub geometry: AcquisitionGeometry,
    pub labels: Vec<String>,
    pub frames: usize,
}

impl DatasetInfo {
    pub fn sign(&self) -> DftSign {
        self.geometry.dft_sign_convention
    }
}
