use serde::{Deserialize, Serialize};

use super::sobol::Sobol;
use crate::error::{Error, Result};
use crate::model::{AcquisitionGeometry, Frame, SamplePoint, SamplingSchedule};

/// A run of frames with no acquisition, e.g. between sessions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSpec {
    /// 0-based index of the first gap frame.
    pub start_frame: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of acquired readouts.
    pub n_points: usize,
    /// Evolution-axis decay; defaults to `exp(-4 / N_C)`.
    #[serde(default)]
    pub psi: Option<f64>,
    /// Undersampled axis sizes `[N_C, spatial…]`; checked against the geometry when given.
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
    /// Leading Sobol points to discard.
    #[serde(default)]
    pub skip: u64,
    #[serde(default)]
    pub gaps: Vec<GapSpec>,
}

impl SamplerConfig {
    pub fn new(n_points: usize) -> Self {
        SamplerConfig {
            n_points,
            psi: None,
            dims: None,
            skip: 0,
            gaps: Vec::new(),
        }
    }

    pub fn with_gaps(mut self, gaps: Vec<GapSpec>) -> Self {
        self.gaps = gaps;
        self
    }

    pub fn psi_for(&self, n_c: usize) -> f64 {
        self.psi.unwrap_or_else(|| default_psi(n_c))
    }

    /// Total frame count M including gaps.
    pub fn n_frames(&self) -> usize {
        self.n_points + self.gaps.iter().map(|g| g.length).sum::<usize>()
    }
}

pub fn default_psi(n_c: usize) -> f64 {
    (-4.0 / n_c as f64).exp()
}

/// Maps a uniform `eta ∈ [0, 1)` to an evolution index `d ∈ [1, n_c]` with
/// `P(d) ∝ psi^d`:
///
/// `d = ⌊log(1 − (1 − psi^n_c)·eta) / log psi⌋ + 1`
pub fn spectral_index_transform(eta: f64, n_c: usize, psi: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::param(format!("eta must lie in [0, 1), got {eta}")));
    }
    if !(psi > 0.0 && psi < 1.0) {
        return Err(Error::param(format!("psi must lie in (0, 1), got {psi}")));
    }
    if n_c == 0 {
        return Err(Error::param("n_c must be >= 1"));
    }
    let tail = psi.powi(n_c as i32);
    let level = (1.0 - (1.0 - tail) * eta).ln() / psi.ln();
    let d = level.floor() as usize + 1;
    Ok(d.clamp(1, n_c))
}

/// `⌊eta · dim⌋ + 1`, clamped into `[1, dim]`.
pub fn spatial_index(eta: f64, dim: usize) -> usize {
    ((eta * dim as f64).floor() as usize + 1).clamp(1, dim)
}

fn gap_mask(config: &SamplerConfig) -> Result<Vec<bool>> {
    let total = config.n_frames();
    let mut mask = vec![false; total];
    for g in &config.gaps {
        if g.length == 0 {
            return Err(Error::Config(format!(
                "gap at frame {} has zero length",
                g.start_frame
            )));
        }
        let end = g
            .start_frame
            .checked_add(g.length)
            .filter(|&e| e <= total)
            .ok_or_else(|| {
                Error::Config(format!(
                    "gap [{}, +{}) extends beyond M = {total}",
                    g.start_frame, g.length
                ))
            })?;
        for slot in &mut mask[g.start_frame..end] {
            if *slot {
                return Err(Error::Config(format!(
                    "gap at frame {} overlaps another gap",
                    g.start_frame
                )));
            }
            *slot = true;
        }
    }
    Ok(mask)
}

/// Assigns Sobol points, in sequence order, to consecutive non-gap frames.
///
/// Coordinate 0 drives the evolution index through
/// [`spectral_index_transform`]; the remaining coordinates are quantized
/// uniformly onto the k-space axes. Repeated points are kept.
pub fn build_schedule(
    config: &SamplerConfig,
    geometry: &AcquisitionGeometry,
) -> Result<SamplingSchedule> {
    geometry.validate()?;
    if config.n_points == 0 {
        return Err(Error::Config("n_points must be >= 1".into()));
    }
    if let Some(dims) = &config.dims {
        let mut expected = vec![geometry.n_c()];
        expected.extend_from_slice(&geometry.spatial_dims);
        if *dims != expected {
            return Err(Error::Config(format!(
                "sampler dims {dims:?} do not match geometry {expected:?}"
            )));
        }
    }
    let psi = config.psi_for(geometry.n_c());
    if !(psi > 0.0 && psi < 1.0) {
        return Err(Error::Config(format!("psi must lie in (0, 1), got {psi}")));
    }

    let mask = gap_mask(config)?;
    let sobol = Sobol::new(1 + geometry.spatial_dims.len())?;
    let mut index = config.skip;
    let mut frames = Vec::with_capacity(mask.len());
    for is_gap in mask {
        if is_gap {
            frames.push(Frame::Gap);
            continue;
        }
        let u = sobol.point(index)?;
        index += 1;
        let spectral = spectral_index_transform(u[0], geometry.n_c(), psi)?;
        let k = u[1..]
            .iter()
            .zip(&geometry.spatial_dims)
            .map(|(&eta, &dim)| spatial_index(eta, dim))
            .collect();
        frames.push(Frame::Acquired(vec![SamplePoint::new(spectral, k)]));
    }
    SamplingSchedule::new(geometry.frame_interval_s, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sobol_sequence;
    use proptest::prelude::*;

    #[test]
    fn transform_closed_form_values() {
        assert_eq!(
            spectral_index_transform(0.0, 32, default_psi(32)).unwrap(),
            1
        );
        // ψ = e^{-1/8}: log(1 - (1 - e^{-4})/2) / (-1/8) = 5.40…, so d = 6.
        assert_eq!(
            spectral_index_transform(0.5, 32, (-0.125f64).exp()).unwrap(),
            6
        );
        assert_eq!(
            spectral_index_transform(0.5, 32, default_psi(32)).unwrap(),
            6
        );
    }

    #[test]
    fn transform_rejects_bad_inputs() {
        assert!(spectral_index_transform(1.0, 8, 0.5).is_err());
        assert!(spectral_index_transform(-0.1, 8, 0.5).is_err());
        assert!(spectral_index_transform(f64::NAN, 8, 0.5).is_err());
        assert!(spectral_index_transform(0.5, 8, 1.0).is_err());
        assert!(spectral_index_transform(0.5, 8, 0.0).is_err());
    }

    #[test]
    fn transform_range_over_dense_grid() {
        let psi = default_psi(32);
        for i in 0..1_000_000u32 {
            let eta = i as f64 / 1_000_000.0;
            let d = spectral_index_transform(eta, 32, psi).unwrap();
            assert!((1..=32).contains(&d));
        }
        let top = spectral_index_transform(1.0 - f64::EPSILON, 32, psi).unwrap();
        assert_eq!(top, 32);
    }

    #[test]
    fn log_frequency_slope_matches_psi() {
        let n_c = 32;
        let psi = (-0.125f64).exp();
        let etas = sobol_sequence(100_000, 1, 0).unwrap();
        let mut counts = vec![0f64; n_c];
        for e in &etas {
            counts[spectral_index_transform(e[0], n_c, psi).unwrap() - 1] += 1.0;
        }
        // Least-squares slope of log count against d.
        let pts: Vec<(f64, f64)> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| ((i + 1) as f64, c.ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!(
            (slope - psi.ln()).abs() <= 0.05 * psi.ln().abs(),
            "slope {slope}"
        );
    }

    fn geometry() -> AcquisitionGeometry {
        AcquisitionGeometry::new(vec![8, 16], 32, 16).unwrap()
    }

    #[test]
    fn schedule_without_gaps() {
        let s = build_schedule(&SamplerConfig::new(4), &geometry()).unwrap();
        assert_eq!(s.n_frames(), 4);
        assert_eq!(s.n_acquired(), 4);
    }

    #[test]
    fn schedule_with_session_gaps() {
        let gaps = (1..=5)
            .map(|i| GapSpec {
                start_frame: i * 200 + (i - 1) * 92,
                length: 92,
            })
            .collect();
        let config = SamplerConfig::new(1024).with_gaps(gaps);
        let s = build_schedule(&config, &geometry()).unwrap();
        assert_eq!(s.n_frames(), 1484);
        assert_eq!(s.n_acquired(), 1024);
        assert!(!s.frames[200].is_acquired());
        assert!(s.frames[199].is_acquired());
        assert!(s.validate_against(&geometry()).is_ok());
    }

    #[test]
    fn schedule_is_byte_deterministic() {
        let config = SamplerConfig::new(256).with_gaps(vec![GapSpec {
            start_frame: 10,
            length: 5,
        }]);
        let a = build_schedule(&config, &geometry())
            .unwrap()
            .to_json()
            .unwrap();
        let b = build_schedule(&config, &geometry())
            .unwrap()
            .to_json()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schedule_config_errors() {
        let g = geometry();
        let beyond = SamplerConfig::new(4).with_gaps(vec![GapSpec {
            start_frame: 5,
            length: 2,
        }]);
        assert!(build_schedule(&beyond, &g).is_err());
        let overlap = SamplerConfig::new(4).with_gaps(vec![
            GapSpec {
                start_frame: 1,
                length: 2,
            },
            GapSpec {
                start_frame: 2,
                length: 2,
            },
        ]);
        assert!(build_schedule(&overlap, &g).is_err());
        let mut dims = SamplerConfig::new(4);
        dims.dims = Some(vec![32, 8, 8]);
        assert!(build_schedule(&dims, &g).is_err());
        assert!(build_schedule(&SamplerConfig::new(0), &g).is_err());
    }

    #[test]
    fn spatial_marginals_pass_chi_square() {
        let g = AcquisitionGeometry::new(vec![8, 16], 32, 4).unwrap();
        let s = build_schedule(&SamplerConfig::new(100_000), &g).unwrap();
        for (axis, &dim) in g.spatial_dims.iter().enumerate() {
            let mut counts = vec![0f64; dim];
            for f in &s.frames {
                counts[f.points().unwrap()[0].k[axis] - 1] += 1.0;
            }
            let expected = 100_000.0 / dim as f64;
            let chi2: f64 = counts
                .iter()
                .map(|c| (c - expected).powi(2) / expected)
                .sum();
            // 0.1% upper critical values: df = 7 → 24.32, df = 15 → 37.70.
            let critical = if dim == 8 { 24.32 } else { 37.70 };
            assert!(chi2 < critical, "axis {axis}: chi2 {chi2}");
        }
    }

    proptest! {
        #[test]
        fn transform_stays_in_range(eta in 0.0f64..1.0, n_c in 1usize..256, psi in 0.01f64..0.999) {
            let d = spectral_index_transform(eta, n_c, psi).unwrap();
            prop_assert!(d >= 1 && d <= n_c);
        }

        #[test]
        fn transform_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let psi = default_psi(32);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(spectral_index_transform(lo, 32, psi).unwrap() <= spectral_index_transform(hi, 32, psi).unwrap());
        }
    }
}
