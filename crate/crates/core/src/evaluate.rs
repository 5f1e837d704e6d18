//! Comparison of a reconstruction against ground truth: error norms,
//! hottest-pixel temporal profiles and max-normalized snapshots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SubstanceDistribution;

/// Stated in every metrics file so readers know how `nrmse` was normalized.
pub const NRMSE_CONVENTION: &str =
    "nrmse_j = ||recon_j - truth_j||_2 / ||truth_j||_2 over all frames and voxels of substance j";

fn check_same_shape(a: &SubstanceDistribution, b: &SubstanceDistribution) -> Result<()> {
    if a.spatial_dims() != b.spatial_dims()
        || a.n_frames() != b.n_frames()
        || a.n_substances() != b.n_substances()
    {
        return Err(Error::shape(format!(
            "reconstruction {:?} x {} frames x {} substances vs truth {:?} x {} x {}",
            a.spatial_dims(),
            a.n_frames(),
            a.n_substances(),
            b.spatial_dims(),
            b.n_frames(),
            b.n_substances()
        )));
    }
    Ok(())
}

/// Per-substance normalized RMSE. A zero truth gives 0 for a zero
/// reconstruction and infinity otherwise.
pub fn nrmse(recon: &SubstanceDistribution, truth: &SubstanceDistribution) -> Result<Vec<f64>> {
    check_same_shape(recon, truth)?;
    let j_count = truth.n_substances();
    let mut err = vec![0.0; j_count];
    let mut norm = vec![0.0; j_count];
    for (i, (r, t)) in recon.values().iter().zip(truth.values()).enumerate() {
        let j = i % j_count;
        err[j] += (r - t) * (r - t);
        norm[j] += t * t;
    }
    Ok(err
        .iter()
        .zip(&norm)
        .map(|(&e, &n)| match (e, n) {
            (e, _) if e == 0.0 => 0.0,
            (_, n) if n == 0.0 => f64::INFINITY,
            (e, n) => (e / n).sqrt(),
        })
        .collect())
}

/// Voxel with the largest time-maximum of substance `j`; ties go to the lowest index.
pub fn hottest_voxel(x: &SubstanceDistribution, j: usize) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for r in 0..x.n_voxels() {
        let peak = (0..x.n_frames())
            .map(|m| x.get(m, r, j))
            .fold(f64::NEG_INFINITY, f64::max);
        if peak > best.1 {
            best = (r, peak);
        }
    }
    best.0
}

/// Row-major multi-index of a flat voxel index.
pub fn voxel_coords(mut r: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (c, &d) in out.iter_mut().zip(dims).rev() {
        *c = r % d;
        r /= d;
    }
    out
}

/// Pearson correlation; `NaN` when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if n == 0 || constant(&a[..n]) || constant(&b[..n]) {
        return f64::NAN;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Population standard deviation over `|mean|`.
pub fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// First frame at which `profile` reaches `fraction` of its maximum.
pub fn plateau_onset(profile: &[f64], fraction: f64) -> Option<usize> {
    let max = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return None;
    }
    profile.iter().position(|&v| v >= fraction * max)
}

/// Fraction of the maximum that defines plateau onset.
pub const PLATEAU_FRACTION: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstanceMetrics {
    pub label: String,
    pub nrmse: f64,
    /// Hottest voxel of the reconstruction, flat and as coordinates.
    pub hottest_voxel: usize,
    pub hottest_coords: Vec<usize>,
    /// Correlation of reconstruction and truth at the reconstruction's hottest voxel.
    pub pearson: f64,
    pub recon_cv: f64,
    pub recon_plateau_onset: Option<usize>,
    pub truth_plateau_onset: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nrmse_convention: String,
    pub plateau_fraction: f64,
    pub substances: Vec<SubstanceMetrics>,
}

pub fn evaluate(
    recon: &SubstanceDistribution,
    truth: &SubstanceDistribution,
    labels: &[String],
) -> Result<Metrics> {
    check_same_shape(recon, truth)?;
    if labels.len() != truth.n_substances() {
        return Err(Error::shape(format!(
            "{} labels for {} substances",
            labels.len(),
            truth.n_substances()
        )));
    }
    let errors = nrmse(recon, truth)?;
    let substances = labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let r = hottest_voxel(recon, j);
            let rp = recon.profile(r, j);
            let tp = truth.profile(r, j);
            SubstanceMetrics {
                label: label.clone(),
                nrmse: errors[j],
                hottest_voxel: r,
                hottest_coords: voxel_coords(r, recon.spatial_dims()),
                pearson: pearson(&rp, &tp),
                recon_cv: coefficient_of_variation(&rp),
                recon_plateau_onset: plateau_onset(&rp, PLATEAU_FRACTION),
                truth_plateau_onset: plateau_onset(&tp, PLATEAU_FRACTION),
            }
        })
        .collect();
    Ok(Metrics {
        nrmse_convention: NRMSE_CONVENTION.into(),
        plateau_fraction: PLATEAU_FRACTION,
        substances,
    })
}

/// Long-format CSV `substance,voxel,frame,time_s,reconstruction,truth` at
/// each substance's hottest reconstructed voxel.
pub fn profiles_csv(
    recon: &SubstanceDistribution,
    truth: &SubstanceDistribution,
    labels: &[String],
    frame_interval_s: f64,
) -> Result<String> {
    check_same_shape(recon, truth)?;
    let mut out = String::from("substance,voxel,frame,time_s,reconstruction,truth\n");
    for (j, label) in labels.iter().enumerate().take(recon.n_substances()) {
        let r = hottest_voxel(recon, j);
        for m in 0..recon.n_frames() {
            out.push_str(&format!(
                "{label},{r},{m},{},{:e},{:e}\n",
                m as f64 * frame_interval_s,
                recon.get(m, r, j),
                truth.get(m, r, j)
            ));
        }
    }
    Ok(out)
}

/// Binary 8-bit PGM of substance `j` at frame `m`, scaled so that `scale`
/// maps to 255 (negative values clip to 0), each voxel drawn as an
/// `upsample × upsample` block. Grids of rank 1 are drawn as one row.
pub fn snapshot_pgm(
    x: &SubstanceDistribution,
    j: usize,
    m: usize,
    scale: f64,
    upsample: usize,
) -> Result<Vec<u8>> {
    let dims = x.spatial_dims();
    let (height, width) = match dims {
        [w] => (1, *w),
        [h, w] => (*h, *w),
        _ => {
            return Err(Error::shape(format!(
                "snapshots need a 1D or 2D grid, got {dims:?}"
            )))
        }
    };
    if j >= x.n_substances() || m >= x.n_frames() {
        return Err(Error::shape(format!(
            "snapshot of substance {j}, frame {m} is out of range"
        )));
    }
    if upsample == 0 {
        return Err(Error::param("upsample factor must be >= 1"));
    }
    let (h, w) = (height * upsample, width * upsample);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w);
    for y in 0..h {
        for xx in 0..w {
            let r = (y / upsample) * width + xx / upsample;
            let v = if scale > 0.0 {
                x.get(m, r, j) / scale
            } else {
                0.0
            };
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Largest value of substance `j` over all frames and voxels: the
/// max-normalization used for snapshots.
pub fn substance_max(x: &SubstanceDistribution, j: usize) -> f64 {
    let j_count = x.n_substances();
    x.values()
        .iter()
        .skip(j)
        .step_by(j_count)
        .copied()
        .fold(0.0, f64::max)
}
