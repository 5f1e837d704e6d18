use crate::error::{Error, Result};

/// Lower-bidiagonal Cholesky factor `L` of `I + γWᵀW`, where `W` is the
/// `(M−1) × M` forward-difference operator.
///
/// `I + γWᵀW` is tridiagonal with diagonal `(1+γ, 1+2γ, …, 1+2γ, 1+γ)` and
/// off-diagonal `−γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandCholesky {
    gamma: f64,
    /// `L[m][m]`
    diag: Vec<f64>,
    /// `L[m][m−1]` for `m = 1..M`
    subdiag: Vec<f64>,
}

impl BandCholesky {
    pub fn new(frames: usize, gamma: f64) -> Result<Self> {
        if frames == 0 {
            return Err(Error::param("band Cholesky needs at least one frame"));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::param(format!("gamma must be > 0, got {gamma}")));
        }
        let mut diag = Vec::with_capacity(frames);
        let mut subdiag = Vec::with_capacity(frames.saturating_sub(1));
        for m in 0..frames {
            let t_mm = if frames == 1 {
                1.0
            } else if m == 0 || m == frames - 1 {
                1.0 + gamma
            } else {
                1.0 + 2.0 * gamma
            };
            if m == 0 {
                diag.push(t_mm.sqrt());
            } else {
                let l = -gamma / diag[m - 1];
                subdiag.push(l);
                diag.push((t_mm - l * l).sqrt());
            }
        }
        Ok(BandCholesky {
            gamma,
            diag,
            subdiag,
        })
    }

    pub fn frames(&self) -> usize {
        self.diag.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn subdiag(&self) -> &[f64] {
        &self.subdiag
    }

    /// Projects `(ω, q)` onto `{(z, s) : s = Wz}` in the `ρ1, ρ2`-weighted norm.
    ///
    /// `omega` is `M × cols` and `q` is `(M−1) × cols`, both frame-major.
    /// Returns `z = (LLᵀ)⁻¹(ω + γWᵀq)` and `s = Wz`, each column solved
    /// independently by forward and back substitution.
    pub fn project(&self, omega: &[f64], q: &[f64], cols: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut z = vec![0.0; omega.len()];
        let mut s = vec![0.0; q.len()];
        self.project_into(omega, q, cols, &mut z, &mut s)?;
        Ok((z, s))
    }

    pub fn project_into(
        &self,
        omega: &[f64],
        q: &[f64],
        cols: usize,
        z: &mut [f64],
        s: &mut [f64],
    ) -> Result<()> {
        let frames = self.frames();
        let diff_frames = frames - 1;
        if omega.len() != frames * cols
            || z.len() != frames * cols
            || q.len() != diff_frames * cols
            || s.len() != diff_frames * cols
        {
            return Err(Error::shape(format!(
                "projection over {frames} frames × {cols} columns got omega {}, q {}, z {}, s {}",
                omega.len(),
                q.len(),
                z.len(),
                s.len()
            )));
        }
        let gamma = self.gamma;
        let row = |m: usize| m * cols..(m + 1) * cols;

        // b = ω + γWᵀq, then forward substitution L g = b, stored in z.
        for m in 0..frames {
            let inv = 1.0 / self.diag[m];
            for c in 0..cols {
                let mut b = omega[m * cols + c];
                if m < diff_frames {
                    b -= gamma * q[m * cols + c];
                }
                if m > 0 {
                    b += gamma * q[(m - 1) * cols + c];
                    b -= self.subdiag[m - 1] * z[(m - 1) * cols + c];
                }
                z[m * cols + c] = b * inv;
            }
        }
        // Back substitution Lᵀ z = g.
        for m in (0..frames).rev() {
            let inv = 1.0 / self.diag[m];
            for c in 0..cols {
                let mut g = z[m * cols + c];
                if m + 1 < frames {
                    g -= self.subdiag[m] * z[(m + 1) * cols + c];
                }
                z[m * cols + c] = g * inv;
            }
        }
        for m in 0..diff_frames {
            let (next, cur) = (row(m + 1), row(m));
            for ((s, a), b) in s[cur.clone()].iter_mut().zip(&z[next]).zip(&z[cur]) {
                *s = a - b;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tridiagonal(frames: usize, gamma: f64) -> DMatrix<f64> {
        let mut w = DMatrix::<f64>::zeros(frames - 1, frames);
        for m in 0..frames - 1 {
            w[(m, m)] = -1.0;
            w[(m, m + 1)] = 1.0;
        }
        DMatrix::identity(frames, frames) + w.transpose() * w * gamma
    }

    #[test]
    fn three_frame_factor() {
        let c = BandCholesky::new(3, 1.0).unwrap();
        let expected_diag = [1.4142135623730951, 1.5811388300841898, 1.2649110640673518];
        let expected_sub = [-0.7071067811865475, -0.6324555320336759];
        for (a, b) in c.diag().iter().zip(expected_diag) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in c.subdiag().iter().zip(expected_sub) {
            assert!((a - b).abs() < 1e-12);
        }
        let dense = nalgebra::Cholesky::new(tridiagonal(3, 1.0)).unwrap().l();
        for m in 0..3 {
            assert!((dense[(m, m)] - c.diag()[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_gamma_gives_identity() {
        let c = BandCholesky::new(5, 1e-300).unwrap();
        assert!(c.diag().iter().all(|&d| (d - 1.0).abs() < 1e-15));
        assert!(c.subdiag().iter().all(|&l| l.abs() < 1e-15));
        assert!(BandCholesky::new(5, 0.0).is_err());
        assert!(BandCholesky::new(5, -1.0).is_err());
    }

    #[test]
    fn reassembles_tridiagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for frames in 2..=64 {
            let gamma = rng.random_range(1e-3..1e3);
            let c = BandCholesky::new(frames, gamma).unwrap();
            let mut l = DMatrix::<f64>::zeros(frames, frames);
            for m in 0..frames {
                l[(m, m)] = c.diag()[m];
                if m > 0 {
                    l[(m, m - 1)] = c.subdiag()[m - 1];
                }
            }
            let diff = &l * l.transpose() - tridiagonal(frames, gamma);
            let scale = 1.0 + 4.0 * gamma;
            assert!(
                diff.amax() <= 1e-12 * scale,
                "M = {frames}: {}",
                diff.amax()
            );
        }
    }

    #[test]
    fn feasible_point_is_fixed() {
        let c = BandCholesky::new(2, 1.0).unwrap();
        let (z, s) = c.project(&[1.0, 1.0], &[0.0], 1).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15 && (z[1] - 1.0).abs() < 1e-15);
        assert!(s[0].abs() < 1e-15);
    }

    #[test]
    fn matches_dense_weighted_projection() {
        // Minimize ‖z − ω‖² + γ‖Wz − q‖²: normal equations (I + γWᵀW) z = ω + γWᵀq.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (frames, cols, gamma) = (8, 3, 100.0);
        let omega: Vec<f64> = (0..frames * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let q: Vec<f64> = (0..(frames - 1) * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let c = BandCholesky::new(frames, gamma).unwrap();
        let (z, s) = c.project(&omega, &q, cols).unwrap();

        let mut w = DMatrix::<f64>::zeros(frames - 1, frames);
        for m in 0..frames - 1 {
            w[(m, m)] = -1.0;
            w[(m, m + 1)] = 1.0;
        }
        let lhs = DMatrix::identity(frames, frames) + w.transpose() * &w * gamma;
        for col in 0..cols {
            let om = DMatrix::from_fn(frames, 1, |m, _| omega[m * cols + col]);
            let qq = DMatrix::from_fn(frames - 1, 1, |m, _| q[m * cols + col]);
            let zz = lhs
                .clone()
                .lu()
                .solve(&(om + w.transpose() * qq * gamma))
                .unwrap();
            for m in 0..frames {
                assert!((zz[(m, 0)] - z[m * cols + col]).abs() < 1e-10);
            }
        }
        for m in 0..frames - 1 {
            for col in 0..cols {
                assert_eq!(
                    s[m * cols + col],
                    z[(m + 1) * cols + col] - z[m * cols + col]
                );
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let c = BandCholesky::new(4, 1.0).unwrap();
        assert!(c.project(&[0.0; 8], &[0.0; 5], 2).is_err());
    }
}
