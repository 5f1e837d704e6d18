//! Unitary multi-dimensional DFTs over the trailing axes of a row-major buffer.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::geometry::DftSign;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralDirection {
    /// Spectrum to free-induction decay, using the configured sign.
    ToTime,
    /// The exact inverse of `ToTime`.
    ToFreq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialDirection {
    /// Image to k-space, using the configured sign.
    ToKSpace,
    /// The exact inverse of `ToKSpace`.
    ToImage,
}

fn fft_direction(sign: DftSign) -> FftDirection {
    match sign {
        DftSign::Forward => FftDirection::Forward,
        DftSign::Inverse => FftDirection::Inverse,
    }
}

/// Transforms `data` in place along the trailing axes given by `axes`.
///
/// Any leading elements are treated as independent batches of
/// `axes.iter().product()` elements each.
pub fn unitary_dft(data: &mut [Complex64], axes: &[usize], sign: DftSign) -> Result<()> {
    if axes.is_empty() || axes.contains(&0) {
        return Err(Error::shape(format!("invalid transform axes {axes:?}")));
    }
    let block: usize = axes.iter().product();
    if data.len() % block != 0 {
        return Err(Error::shape(format!(
            "buffer of {} elements is not a whole number of {axes:?} blocks",
            data.len()
        )));
    }

    let mut planner = FftPlanner::<f64>::new();
    let direction = fft_direction(sign);
    let mut line = Vec::new();
    for (axis, &n) in axes.iter().enumerate() {
        if n == 1 {
            continue;
        }
        let fft = planner.plan_fft(n, direction);
        let stride: usize = axes[axis + 1..].iter().product();
        let scale = 1.0 / (n as f64).sqrt();
        line.resize(n, Complex64::new(0.0, 0.0));

        for chunk in data.chunks_exact_mut(n * stride) {
            for offset in 0..stride {
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = chunk[offset + k * stride];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    chunk[offset + k * stride] = v * scale;
                }
            }
        }
    }
    Ok(())
}

/// DFT along the two spectral axes (evolution × readout) of a
/// `(… × n_c × n_ro)` tensor.
pub fn dft_spectral(
    data: &[Complex64],
    n_c: usize,
    n_ro: usize,
    direction: SpectralDirection,
    sign: DftSign,
) -> Result<Vec<Complex64>> {
    let sign = match direction {
        SpectralDirection::ToTime => sign,
        SpectralDirection::ToFreq => sign.flipped(),
    };
    let mut out = data.to_vec();
    unitary_dft(&mut out, &[n_c, n_ro], sign)?;
    Ok(out)
}

/// DFT along the spatial axes of a `(… × spatial_dims)` field.
pub fn dft_spatial(
    data: &[Complex64],
    spatial_dims: &[usize],
    direction: SpatialDirection,
    sign: DftSign,
) -> Result<Vec<Complex64>> {
    let sign = match direction {
        SpatialDirection::ToKSpace => sign,
        SpatialDirection::ToImage => sign.flipped(),
    };
    let mut out = data.to_vec();
    unitary_dft(&mut out, spatial_dims, sign)?;
    Ok(out)
}
