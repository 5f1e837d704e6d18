use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::dft::{dft_spectral, SpectralDirection};
use super::geometry::{AcquisitionGeometry, DftSign};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Substance base spectra Θ_B with their cached time-domain transform.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseSpectraSet {
    labels: Vec<String>,
    n_c: usize,
    n_ro: usize,
    sign: DftSign,
    /// `(J × n_c × n_ro)`, spectral domain.
    spectra: Vec<Complex64>,
    /// `(J × n_c × n_ro)`, evolution/readout time domain.
    fid: Vec<Complex64>,
}

impl BaseSpectraSet {
    pub fn new(
        labels: Vec<String>,
        n_c: usize,
        n_ro: usize,
        spectra: Vec<Complex64>,
        sign: DftSign,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::shape("base spectra need at least one substance"));
        }
        if n_c == 0 || n_ro == 0 {
            return Err(Error::shape("spectral axes must be non-empty"));
        }
        if spectra.len() != labels.len() * n_c * n_ro {
            return Err(Error::shape(format!(
                "{} substances × {n_c} × {n_ro} spectral grid needs {} values, got {}",
                labels.len(),
                labels.len() * n_c * n_ro,
                spectra.len()
            )));
        }
        if spectra
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::shape("base spectra contain non-finite values"));
        }
        let fid = dft_spectral(&spectra, n_c, n_ro, SpectralDirection::ToTime, sign)?;
        Ok(BaseSpectraSet {
            labels,
            n_c,
            n_ro,
            sign,
            spectra,
            fid,
        })
    }

    pub fn n_substances(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_ro(&self) -> usize {
        self.n_ro
    }

    pub fn sign(&self) -> DftSign {
        self.sign
    }

    pub fn spectra(&self) -> &[Complex64] {
        &self.spectra
    }

    pub fn fid(&self) -> &[Complex64] {
        &self.fid
    }

    pub fn spectrum(&self, j: usize) -> &[Complex64] {
        let len = self.n_c * self.n_ro;
        &self.spectra[j * len..(j + 1) * len]
    }

    /// Readout-axis FID of substance `j` at 0-based evolution index `d`.
    pub fn fid_row(&self, j: usize, d: usize) -> &[Complex64] {
        let start = (j * self.n_c + d) * self.n_ro;
        &self.fid[start..start + self.n_ro]
    }

    pub fn check_geometry(&self, geometry: &AcquisitionGeometry) -> Result<()> {
        if self.n_c != geometry.n_c() || self.n_ro != geometry.n_ro() {
            return Err(Error::shape(format!(
                "base spectra grid {}×{} does not match geometry {}×{}",
                self.n_c,
                self.n_ro,
                geometry.n_c(),
                geometry.n_ro()
            )));
        }
        if self.sign != geometry.dft_sign_convention {
            return Err(Error::shape(
                "base spectra and geometry use different DFT sign conventions",
            ));
        }
        Ok(())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::complex(
            vec![self.labels.len(), self.n_c, self.n_ro],
            self.spectra.clone(),
        )
        .expect("dims consistent by construction")
    }

    /// Rebuilds from a `(J × n_c × n_ro)` spectral-domain tensor.
    pub fn from_tensor(tensor: Tensor, labels: Option<Vec<String>>, sign: DftSign) -> Result<Self> {
        let (dims, spectra) = tensor.into_complex()?;
        let [j, n_c, n_ro] = dims[..] else {
            return Err(Error::shape(format!(
                "base spectra tensor must be 3-D, got {dims:?}"
            )));
        };
        let labels = match labels {
            Some(l) if l.len() == j => l,
            Some(l) => {
                return Err(Error::shape(format!(
                    "{} labels for {j} substances",
                    l.len()
                )));
            }
            None => (0..j).map(|i| format!("substance{i}")).collect(),
        };
        BaseSpectraSet::new(labels, n_c, n_ro, spectra, sign)
    }
}

/// Real amounts x(m, r, j), stored frame-major as `[m][r][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstanceDistribution {
    spatial_dims: Vec<usize>,
    n_frames: usize,
    n_substances: usize,
    values: Vec<f64>,
}

impl SubstanceDistribution {
    pub fn zeros(spatial_dims: Vec<usize>, n_frames: usize, n_substances: usize) -> Self {
        let n: usize = spatial_dims.iter().product();
        SubstanceDistribution {
            values: vec![0.0; n_frames * n * n_substances],
            spatial_dims,
            n_frames,
            n_substances,
        }
    }

    pub fn from_values(
        spatial_dims: Vec<usize>,
        n_frames: usize,
        n_substances: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n: usize = spatial_dims.iter().product();
        if values.len() != n_frames * n * n_substances {
            return Err(Error::shape(format!(
                "{n_frames} frames × {n} voxels × {n_substances} substances needs {} values, got {}",
                n_frames * n * n_substances,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::shape(
                "substance distribution contains non-finite values",
            ));
        }
        Ok(SubstanceDistribution {
            spatial_dims,
            n_frames,
            n_substances,
            values,
        })
    }

    pub fn spatial_dims(&self) -> &[usize] {
        &self.spatial_dims
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_voxels(&self) -> usize {
        self.spatial_dims.iter().product()
    }

    pub fn n_substances(&self) -> usize {
        self.n_substances
    }

    /// Unknowns per frame, N·J.
    pub fn frame_len(&self) -> usize {
        self.n_voxels() * self.n_substances
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn frame(&self, m: usize) -> &[f64] {
        let len = self.frame_len();
        &self.values[m * len..(m + 1) * len]
    }

    pub fn frame_mut(&mut self, m: usize) -> &mut [f64] {
        let len = self.frame_len();
        &mut self.values[m * len..(m + 1) * len]
    }

    pub fn get(&self, m: usize, r: usize, j: usize) -> f64 {
        self.values[(m * self.n_voxels() + r) * self.n_substances + j]
    }

    /// Time course of substance `j` at voxel `r`.
    pub fn profile(&self, r: usize, j: usize) -> Vec<f64> {
        (0..self.n_frames).map(|m| self.get(m, r, j)).collect()
    }

    pub fn check_geometry(
        &self,
        geometry: &AcquisitionGeometry,
        base: &BaseSpectraSet,
    ) -> Result<()> {
        if self.spatial_dims != geometry.spatial_dims {
            return Err(Error::shape(format!(
                "distribution grid {:?} does not match geometry {:?}",
                self.spatial_dims, geometry.spatial_dims
            )));
        }
        if self.n_substances != base.n_substances() {
            return Err(Error::shape(format!(
                "distribution has {} substances, base spectra {}",
                self.n_substances,
                base.n_substances()
            )));
        }
        Ok(())
    }

    /// Tensor dims are `[M, spatial…, J]`.
    pub fn to_tensor(&self) -> Tensor {
        let mut dims = vec![self.n_frames];
        dims.extend_from_slice(&self.spatial_dims);
        dims.push(self.n_substances);
        Tensor::real(dims, self.values.clone()).expect("dims consistent by construction")
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        let (dims, values) = tensor.into_real()?;
        if dims.len() < 3 {
            return Err(Error::shape(format!(
                "distribution tensor needs [M, spatial…, J] dims, got {dims:?}"
            )));
        }
        let spatial = dims[1..dims.len() - 1].to_vec();
        if spatial.contains(&0) || dims[dims.len() - 1] == 0 {
            return Err(Error::shape(format!(
                "empty axis in distribution dims {dims:?}"
            )));
        }
        SubstanceDistribution::from_values(spatial, dims[0], dims[dims.len() - 1], values)
    }
}

/// One sampled location: an evolution index and a k-space coordinate.
///
/// Indices are 1-based: `spectral ∈ [1, N_C]`, `k[a] ∈ [1, dims[a]]`.
/// `k = (1, …, 1)` is the k-space origin.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePoint {
    pub spectral: usize,
    pub k: Vec<usize>,
}

impl SamplePoint {
    pub fn new(spectral: usize, k: Vec<usize>) -> Self {
        SamplePoint { spectral, k }
    }

    pub fn validate(&self, geometry: &AcquisitionGeometry) -> Result<()> {
        if self.spectral == 0 || self.spectral > geometry.n_c() {
            return Err(Error::Schedule(format!(
                "spectral index {} outside [1, {}]",
                self.spectral,
                geometry.n_c()
            )));
        }
        if self.k.len() != geometry.spatial_dims.len() {
            return Err(Error::Schedule(format!(
                "k-space point has {} coordinates, grid has {} axes",
                self.k.len(),
                geometry.spatial_dims.len()
            )));
        }
        for (axis, (&k, &dim)) in self.k.iter().zip(&geometry.spatial_dims).enumerate() {
            if k == 0 || k > dim {
                return Err(Error::Schedule(format!(
                    "k index {k} on axis {axis} outside [1, {dim}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    Gap,
    Acquired(Vec<SamplePoint>),
}

impl Frame {
    pub fn points(&self) -> Option<&[SamplePoint]> {
        match self {
            Frame::Gap => None,
            Frame::Acquired(p) => Some(p),
        }
    }

    pub fn is_acquired(&self) -> bool {
        matches!(self, Frame::Acquired(_))
    }
}

/// Time-ordered acquisitions; frame indices are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingSchedule {
    pub frame_interval_s: f64,
    pub frames: Vec<Frame>,
}

impl SamplingSchedule {
    pub fn new(frame_interval_s: f64, frames: Vec<Frame>) -> Result<Self> {
        let s = SamplingSchedule {
            frame_interval_s,
            frames,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_interval_s.is_finite() && self.frame_interval_s > 0.0) {
            return Err(Error::Schedule("frame_interval_s must be positive".into()));
        }
        if let Some(m) = self
            .frames
            .iter()
            .position(|f| matches!(f, Frame::Acquired(p) if p.is_empty()))
        {
            return Err(Error::Schedule(format!(
                "acquired frame {m} has no sample points"
            )));
        }
        Ok(())
    }

    pub fn validate_against(&self, geometry: &AcquisitionGeometry) -> Result<()> {
        self.validate()?;
        for frame in &self.frames {
            if let Frame::Acquired(points) = frame {
                for p in points {
                    p.validate(geometry)?;
                }
            }
        }
        Ok(())
    }

    /// Total frame count M.
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// The acquired index set D, ascending.
    pub fn acquired(&self) -> Vec<usize> {
        self.frames
            .iter()
            .enumerate()
            .filter_map(|(m, f)| f.is_acquired().then_some(m))
            .collect()
    }

    pub fn n_acquired(&self) -> usize {
        self.frames.iter().filter(|f| f.is_acquired()).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: SamplingSchedule = serde_json::from_str(text)?;
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<SamplePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    points: Option<Vec<SamplePoint>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    gap: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleRecord {
    #[serde(rename = "M")]
    m: usize,
    frame_interval_s: f64,
    frames: Vec<FrameRecord>,
}

impl Serialize for SamplingSchedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(m, f)| match f {
                Frame::Gap => FrameRecord {
                    m,
                    point: None,
                    points: None,
                    gap: true,
                },
                Frame::Acquired(p) if p.len() == 1 => FrameRecord {
                    m,
                    point: Some(p[0].clone()),
                    points: None,
                    gap: false,
                },
                Frame::Acquired(p) => FrameRecord {
                    m,
                    point: None,
                    points: Some(p.clone()),
                    gap: false,
                },
            })
            .collect();
        ScheduleRecord {
            m: self.frames.len(),
            frame_interval_s: self.frame_interval_s,
            frames,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SamplingSchedule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = ScheduleRecord::deserialize(deserializer)?;
        if rec.frames.len() != rec.m {
            return Err(D::Error::custom(format!(
                "M = {} but {} frames listed",
                rec.m,
                rec.frames.len()
            )));
        }
        let mut frames = Vec::with_capacity(rec.m);
        for (i, f) in rec.frames.into_iter().enumerate() {
            if f.m != i {
                return Err(D::Error::custom(format!("frame entry {i} has m = {}", f.m)));
            }
            let frame = match (f.gap, f.point, f.points) {
                (true, None, None) => Frame::Gap,
                (false, Some(p), None) => Frame::Acquired(vec![p]),
                (false, None, Some(ps)) if !ps.is_empty() => Frame::Acquired(ps),
                _ => {
                    return Err(D::Error::custom(format!(
                        "frame {i} must be exactly one of gap, point, points"
                    )))
                }
            };
            frames.push(frame);
        }
        SamplingSchedule::new(rec.frame_interval_s, frames).map_err(D::Error::custom)
    }
}

/// Measured readouts y_m, indexed by frame; `None` on gap frames.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSet {
    frames: Vec<Option<Vec<Complex64>>>,
}

impl SignalSet {
    pub fn new(frames: Vec<Option<Vec<Complex64>>>) -> Self {
        SignalSet { frames }
    }

    pub fn frames(&self) -> &[Option<Vec<Complex64>>] {
        &self.frames
    }

    pub fn frame(&self, m: usize) -> Option<&[Complex64]> {
        self.frames.get(m).and_then(|f| f.as_deref())
    }

    pub fn validate_against(&self, schedule: &SamplingSchedule, n_ro: usize) -> Result<()> {
        if self.frames.len() != schedule.n_frames() {
            return Err(Error::shape(format!(
                "signal set covers {} frames, schedule has {}",
                self.frames.len(),
                schedule.n_frames()
            )));
        }
        for (m, (y, f)) in self.frames.iter().zip(&schedule.frames).enumerate() {
            match (y, f) {
                (None, Frame::Gap) => {}
                (Some(y), Frame::Acquired(p)) => {
                    if y.len() != p.len() * n_ro {
                        return Err(Error::shape(format!(
                            "frame {m}: {} samples for {} points × {n_ro} readout",
                            y.len(),
                            p.len()
                        )));
                    }
                    if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(Error::shape(format!("frame {m}: non-finite signal")));
                    }
                }
                (Some(_), Frame::Gap) => {
                    return Err(Error::shape(format!("frame {m} is a gap but carries data")))
                }
                (None, Frame::Acquired(_)) => {
                    return Err(Error::shape(format!(
                        "frame {m} is acquired but has no data"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Packs acquired frames into a `[|D|, points, n_ro]` tensor.
    pub fn to_tensor(&self, schedule: &SamplingSchedule, n_ro: usize) -> Result<Tensor> {
        self.validate_against(schedule, n_ro)?;
        let mut per_frame = None;
        let mut data = Vec::new();
        for (y, f) in self.frames.iter().zip(&schedule.frames) {
            if let (Some(y), Frame::Acquired(p)) = (y, f) {
                match per_frame {
                    None => per_frame = Some(p.len()),
                    Some(n) if n != p.len() => {
                        return Err(Error::shape(
                            "MRST signal files need the same point count in every frame",
                        ));
                    }
                    _ => {}
                }
                data.extend_from_slice(y);
            }
        }
        let d = schedule.n_acquired();
        Tensor::complex(vec![d, per_frame.unwrap_or(1), n_ro], data)
    }

    pub fn from_tensor(tensor: Tensor, schedule: &SamplingSchedule, n_ro: usize) -> Result<Self> {
        let (dims, data) = tensor.into_complex()?;
        let [d, points, ro] = dims[..] else {
            return Err(Error::shape(format!(
                "signal tensor must be 3-D, got {dims:?}"
            )));
        };
        if d != schedule.n_acquired() || ro != n_ro {
            return Err(Error::shape(format!(
                "signal tensor {dims:?} does not match schedule (|D| = {}) and readout length {n_ro}",
                schedule.n_acquired()
            )));
        }
        let mut chunks = data.chunks_exact(points * n_ro);
        let frames = schedule
            .frames
            .iter()
            .map(|f| {
                f.is_acquired()
                    .then(|| chunks.next().map(<[Complex64]>::to_vec))
                    .flatten()
            })
            .collect();
        let set = SignalSet { frames };
        set.validate_against(schedule, n_ro)?;
        Ok(set)
    }
}
