//! Synthetic instillation phantoms: ground truth, Lorentzian base spectra
//! and noisy undersampled acquisition.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AcquisitionGeometry, BaseSpectraSet, ForwardModel, SamplingSchedule, SignalSet,
    SubstanceDistribution,
};

/// Voxels occupied by a substance. Coordinates are 0-based spatial indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Region {
    Voxels(Vec<Vec<usize>>),
    Box { start: Vec<usize>, size: Vec<usize> },
}

impl Region {
    /// Flat row-major voxel indices, sorted and deduplicated.
    pub fn voxel_indices(&self, spatial_dims: &[usize]) -> Result<Vec<usize>> {
        let flatten = |coord: &[usize]| -> Result<usize> {
            if coord.len() != spatial_dims.len() {
                return Err(Error::Config(format!(
                    "voxel {coord:?} has {} coordinates, grid has {} axes",
                    coord.len(),
                    spatial_dims.len()
                )));
            }
            let mut flat = 0;
            for (&c, &d) in coord.iter().zip(spatial_dims) {
                if c >= d {
                    return Err(Error::Config(format!(
                        "voxel {coord:?} outside grid {spatial_dims:?}"
                    )));
                }
                flat = flat * d + c;
            }
            Ok(flat)
        };
        let mut out = match self {
            Region::Voxels(list) => list
                .iter()
                .map(|c| flatten(c))
                .collect::<Result<Vec<_>>>()?,
            Region::Box { start, size } => {
                if start.len() != spatial_dims.len() || size.len() != spatial_dims.len() {
                    return Err(Error::Config(
                        "box start/size rank differs from the grid".into(),
                    ));
                }
                let count: usize = size.iter().product();
                let mut out = Vec::with_capacity(count);
                let mut offset = vec![0usize; size.len()];
                for _ in 0..count {
                    let coord: Vec<usize> = start.iter().zip(&offset).map(|(s, o)| s + o).collect();
                    out.push(flatten(&coord)?);
                    for a in (0..size.len()).rev() {
                        offset[a] += 1;
                        if offset[a] < size[a] {
                            break;
                        }
                        offset[a] = 0;
                    }
                }
                out
            }
        };
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }
}

/// Amount of a substance over frames, applied uniformly across its region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    /// `min(rate · max(0, m − start_frame), cap)`
    Ramp {
        rate: f64,
        start_frame: usize,
        cap: f64,
    },
    Constant {
        level: f64,
    },
}

impl Profile {
    pub fn value(&self, m: usize) -> f64 {
        match *self {
            Profile::Ramp {
                rate,
                start_frame,
                cap,
            } => (rate * m.saturating_sub(start_frame) as f64).min(cap),
            Profile::Constant { level } => level,
        }
    }

    /// First frame at which a ramp reaches its cap.
    pub fn cap_frame(&self) -> Option<f64> {
        match *self {
            Profile::Ramp {
                rate,
                start_frame,
                cap,
            } if rate > 0.0 => Some(start_frame as f64 + cap / rate),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Profile::Ramp { rate, cap, .. } => {
                if !rate.is_finite() || !cap.is_finite() || cap < 0.0 {
                    return Err(Error::Config(format!(
                        "ramp needs finite rate and cap >= 0, got rate {rate}, cap {cap}"
                    )));
                }
            }
            Profile::Constant { level } => {
                if !level.is_finite() {
                    return Err(Error::Config("constant level must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// One absorption-mode 2D Lorentzian line on the (evolution, readout) grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    /// 0-based (evolution, readout) grid position; fractional values allowed.
    pub center: [f64; 2],
    /// Half width at half maximum, in grid points.
    pub width: f64,
    pub amplitude: f64,
}

impl Peak {
    pub fn value(&self, f_c: f64, f_ro: f64) -> f64 {
        let a = (f_c - self.center[0]) / self.width;
        let b = (f_ro - self.center[1]) / self.width;
        self.amplitude / ((1.0 + a * a) * (1.0 + b * b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstanceSpec {
    pub label: String,
    pub region: Region,
    pub profile: Profile,
    pub peaks: Vec<Peak>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub geometry: AcquisitionGeometry,
    /// Total frame count M of the ground truth.
    pub frames: usize,
    pub substances: Vec<SubstanceSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.frames == 0 {
            return Err(Error::Config("frames must be >= 1".into()));
        }
        if self.substances.is_empty() {
            return Err(Error::Config("at least one substance is required".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        for s in &self.substances {
            s.region.voxel_indices(&self.geometry.spatial_dims)?;
            s.profile.validate()?;
            if s.peaks.is_empty() {
                return Err(Error::Config(format!(
                    "substance {} has no spectral peaks",
                    s.label
                )));
            }
            for p in &s.peaks {
                if !(p.width.is_finite() && p.width > 0.0)
                    || !p.amplitude.is_finite()
                    || !p.center.iter().all(|c| c.is_finite())
                {
                    return Err(Error::Config(format!(
                        "substance {}: peak needs finite center/amplitude and width > 0",
                        s.label
                    )));
                }
            }
            let first = self.substances.iter().find(|o| o.label == s.label);
            if first.is_some_and(|o| o.peaks != s.peaks) {
                return Err(Error::Config(format!(
                    "entries labelled {} must share the same peaks",
                    s.label
                )));
            }
        }
        Ok(())
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.substances {
            if !out.contains(&s.label) {
                out.push(s.label.clone());
            }
        }
        out
    }

    /// Substance index of each entry; entries sharing a label are one substance.
    pub fn substance_indices(&self) -> Vec<usize> {
        let labels = self.labels();
        self.substances
            .iter()
            .map(|s| labels.iter().position(|l| *l == s.label).unwrap_or(0))
            .collect()
    }
}

/// Ground truth `x(m, r, j) = profile_j(m)` on region `j`, zero elsewhere.
///
/// Entries that share a label write into the same substance; where their
/// regions overlap the later entry wins.
pub fn make_phantom(config: &PhantomConfig) -> Result<SubstanceDistribution> {
    config.validate()?;
    let dims = config.geometry.spatial_dims.clone();
    let j_count = config.labels().len();
    let mut x = SubstanceDistribution::zeros(dims.clone(), config.frames, j_count);
    for (s, j) in config.substances.iter().zip(config.substance_indices()) {
        let voxels = s.region.voxel_indices(&dims)?;
        for m in 0..config.frames {
            let v = s.profile.value(m);
            let frame = x.frame_mut(m);
            for &r in &voxels {
                frame[r * j_count + j] = v;
            }
        }
    }
    Ok(x)
}

/// Sum-of-Lorentzians spectra with the time-domain cache filled in.
pub fn make_base_spectra(config: &PhantomConfig) -> Result<BaseSpectraSet> {
    config.validate()?;
    let n_c = config.geometry.n_c();
    let n_ro = config.geometry.n_ro();
    let labels = config.labels();
    let mut spectra = Vec::with_capacity(labels.len() * n_c * n_ro);
    for label in &labels {
        let Some(s) = config.substances.iter().find(|s| s.label == *label) else {
            continue;
        };
        for fc in 0..n_c {
            for fr in 0..n_ro {
                let v: f64 = s.peaks.iter().map(|p| p.value(fc as f64, fr as f64)).sum();
                spectra.push(Complex64::new(v, 0.0));
            }
        }
    }
    BaseSpectraSet::new(
        labels,
        n_c,
        n_ro,
        spectra,
        config.geometry.dft_sign_convention,
    )
}

/// `y_m = A_m x_m + ε`, with ε complex Gaussian of per-component variance σ².
///
/// Noise is drawn frame by frame in schedule order from a ChaCha8 stream
/// seeded with `rng_seed`.
pub fn acquire(
    truth: &SubstanceDistribution,
    model: &ForwardModel,
    schedule: &SamplingSchedule,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<SignalSet> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::param(format!(
            "noise_sigma must be >= 0, got {noise_sigma}"
        )));
    }
    truth.check_geometry(model.geometry(), model.base())?;
    schedule.validate_against(model.geometry())?;
    if truth.n_frames() != schedule.n_frames() {
        return Err(Error::shape(format!(
            "truth has {} frames, schedule {}",
            truth.n_frames(),
            schedule.n_frames()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::param(e.to_string()))?;
    let mut frames = Vec::with_capacity(schedule.n_frames());
    for (m, frame) in schedule.frames.iter().enumerate() {
        let Some(points) = frame.points() else {
            frames.push(None);
            continue;
        };
        let mut y = model.apply_forward(truth.frame(m), points)?;
        if noise_sigma > 0.0 {
            for z in &mut y {
                z.re += normal.sample(&mut rng);
                z.im += normal.sample(&mut rng);
            }
        }
        frames.push(Some(y));
    }
    Ok(SignalSet::new(frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dft_spectral, Frame, SamplePoint, SpectralDirection};
    use crate::sampling::{build_schedule, SamplerConfig};

    fn substance(label: &str, region: Region, profile: Profile, center: [f64; 2]) -> SubstanceSpec {
        SubstanceSpec {
            label: label.into(),
            region,
            profile,
            peaks: vec![Peak {
                center,
                width: 0.6,
                amplitude: 1.0,
            }],
        }
    }

    fn config(substances: Vec<SubstanceSpec>, frames: usize) -> PhantomConfig {
        PhantomConfig {
            geometry: AcquisitionGeometry::new(vec![4, 4], 8, 16).unwrap(),
            frames,
            substances,
            noise_sigma: 0.0,
            rng_seed: 1,
        }
    }

    #[test]
    fn constant_single_voxel() {
        let c = config(
            vec![substance(
                "fat",
                Region::Voxels(vec![vec![1, 2]]),
                Profile::Constant { level: 1.0 },
                [2.0, 3.0],
            )],
            5,
        );
        let x = make_phantom(&c).unwrap();
        for m in 0..5 {
            for r in 0..16 {
                assert_eq!(x.get(m, r, 0), if r == 6 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn shared_label_is_one_substance() {
        let mut c = config(
            vec![
                substance(
                    "glc",
                    Region::Voxels(vec![vec![0, 0]]),
                    Profile::Constant { level: 1.0 },
                    [2.0, 3.0],
                ),
                substance(
                    "glc",
                    Region::Voxels(vec![vec![3, 3]]),
                    Profile::Constant { level: 2.0 },
                    [2.0, 3.0],
                ),
            ],
            2,
        );
        assert_eq!(c.labels(), vec!["glc".to_string()]);
        let x = make_phantom(&c).unwrap();
        assert_eq!(x.n_substances(), 1);
        assert_eq!((x.get(1, 0, 0), x.get(1, 15, 0)), (1.0, 2.0));
        assert_eq!(make_base_spectra(&c).unwrap().n_substances(), 1);
        c.substances[1].peaks[0].width = 0.9;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ramp_piecewise_linear() {
        let p = Profile::Ramp {
            rate: 0.01,
            start_frame: 0,
            cap: 0.5,
        };
        assert!((p.value(50) - 0.5).abs() < 1e-15);
        assert!((p.value(10) - 0.1).abs() < 1e-15);
        assert_eq!(p.value(80), 0.5);
        let delayed = Profile::Ramp {
            rate: 0.1,
            start_frame: 5,
            cap: 1.0,
        };
        assert_eq!(delayed.value(3), 0.0);
        assert!((delayed.value(7) - 0.2).abs() < 1e-15);
        let mut prev = f64::NEG_INFINITY;
        for m in 0..200 {
            assert!(p.value(m) >= prev);
            prev = p.value(m);
        }
    }

    #[test]
    fn instillation_rate_ratio_sets_cap_frames() {
        // Same total volume at 22.9 and 5.9 µL/min: caps at 17.5 and 68.0 minutes.
        let frames_per_min = 15.0;
        let cap = 1.0;
        let fast = Profile::Ramp {
            rate: cap / (17.5 * frames_per_min),
            start_frame: 0,
            cap,
        };
        let slow = Profile::Ramp {
            rate: cap / (17.5 * frames_per_min) * (5.9 / 22.9),
            start_frame: 0,
            cap,
        };
        let ratio = slow.cap_frame().unwrap() / fast.cap_frame().unwrap();
        assert!(
            (ratio - 68.0 / 17.5).abs() / (68.0 / 17.5) < 0.01,
            "{ratio}"
        );
    }

    #[test]
    fn base_spectrum_peaks_at_center() {
        let c = config(
            vec![substance(
                "glc",
                Region::Voxels(vec![vec![0, 0]]),
                Profile::Constant { level: 1.0 },
                [4.0, 8.0],
            )],
            1,
        );
        let base = make_base_spectra(&c).unwrap();
        let s = base.spectrum(0);
        let argmax = (0..s.len())
            .max_by(|&a, &b| s[a].norm().total_cmp(&s[b].norm()))
            .unwrap();
        assert_eq!(argmax, 4 * 16 + 8);
        let back = dft_spectral(base.fid(), 8, 16, SpectralDirection::ToFreq, base.sign()).unwrap();
        for (a, b) in base.spectra().iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn disjoint_peaks_are_nearly_orthogonal() {
        let region = Region::Voxels(vec![vec![0, 0]]);
        let c = config(
            vec![
                substance(
                    "a",
                    region.clone(),
                    Profile::Constant { level: 1.0 },
                    [1.0, 3.0],
                ),
                substance("b", region, Profile::Constant { level: 1.0 }, [6.0, 12.0]),
            ],
            1,
        );
        let base = make_base_spectra(&c).unwrap();
        let (a, b) = (base.spectrum(0), base.spectrum(1));
        let dot: f64 = a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum();
        let na: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        assert!(dot / (na * nb) < 0.1, "{}", dot / (na * nb));
    }

    #[test]
    fn config_validation() {
        let mut c = config(
            vec![substance(
                "a",
                Region::Voxels(vec![vec![4, 0]]),
                Profile::Constant { level: 1.0 },
                [0.0, 0.0],
            )],
            2,
        );
        assert!(make_phantom(&c).is_err());
        c.substances[0].region = Region::Box {
            start: vec![0, 0],
            size: vec![2, 2],
        };
        assert_eq!(
            c.substances[0].region.voxel_indices(&[4, 4]).unwrap(),
            vec![0, 1, 4, 5]
        );
        c.substances[0].peaks[0].width = 0.0;
        assert!(make_base_spectra(&c).is_err());
        c.substances[0].peaks[0].width = 1.0;
        c.substances[0].profile = Profile::Ramp {
            rate: 0.1,
            start_frame: 0,
            cap: -1.0,
        };
        assert!(c.validate().is_err());
    }

    fn small_setup(frames: usize) -> (SubstanceDistribution, ForwardModel, SamplingSchedule) {
        let c = config(
            vec![substance(
                "glc",
                Region::Box {
                    start: vec![1, 1],
                    size: vec![2, 2],
                },
                Profile::Ramp {
                    rate: 0.05,
                    start_frame: 0,
                    cap: 1.0,
                },
                [3.0, 5.0],
            )],
            frames,
        );
        let truth = make_phantom(&c).unwrap();
        let model = ForwardModel::new(c.geometry.clone(), make_base_spectra(&c).unwrap()).unwrap();
        let schedule = build_schedule(&SamplerConfig::new(frames), &c.geometry).unwrap();
        (truth, model, schedule)
    }

    #[test]
    fn noiseless_acquisition_equals_forward() {
        let (truth, model, schedule) = small_setup(12);
        let y = acquire(&truth, &model, &schedule, 0.0, 9).unwrap();
        for (m, f) in schedule.frames.iter().enumerate() {
            let expected = model
                .apply_forward(truth.frame(m), f.points().unwrap())
                .unwrap();
            assert_eq!(y.frame(m).unwrap(), expected.as_slice());
        }
    }

    #[test]
    fn noise_moments() {
        let (truth, model, _) = small_setup(1);
        let zero = SubstanceDistribution::zeros(truth.spatial_dims().to_vec(), 625, 1);
        let schedule = SamplingSchedule::new(
            4.0,
            (0..625)
                .map(|_| Frame::Acquired(vec![SamplePoint::new(1, vec![1, 1])]))
                .collect(),
        )
        .unwrap();
        let y = acquire(&zero, &model, &schedule, 1.0, 2024).unwrap();
        let samples: Vec<Complex64> = y.frames().iter().flatten().flatten().copied().collect();
        assert_eq!(samples.len(), 10_000);
        let var = |f: &dyn Fn(&Complex64) -> f64| {
            let mean = samples.iter().map(f).sum::<f64>() / samples.len() as f64;
            samples.iter().map(|z| (f(z) - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64
        };
        assert!((var(&|z| z.re) - 1.0).abs() < 0.05);
        assert!((var(&|z| z.im) - 1.0).abs() < 0.05);
    }

    #[test]
    fn acquisition_is_seeded() {
        let (truth, model, schedule) = small_setup(10);
        let a = acquire(&truth, &model, &schedule, 0.3, 5).unwrap();
        assert_eq!(a, acquire(&truth, &model, &schedule, 0.3, 5).unwrap());
        assert_ne!(a, acquire(&truth, &model, &schedule, 0.3, 6).unwrap());
    }

    #[test]
    fn acquisition_shape_errors() {
        let (truth, model, _) = small_setup(10);
        let short = build_schedule(&SamplerConfig::new(9), model.geometry()).unwrap();
        assert!(acquire(&truth, &model, &short, 0.0, 0).is_err());
        let (_, _, schedule) = small_setup(10);
        assert!(acquire(&truth, &model, &schedule, -1.0, 0).is_err());
    }
}
