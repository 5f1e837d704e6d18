//! The separable per-frame forward operator `A_m = U_m F Θ_B`.
//!
//! For a sample point `(d, k)` the measured readout is
//! `Σ_j X̂_j(k) · fid_j(d, ·)`, where `X̂_j(k)` is a single coefficient of the
//! unitary spatial DFT of substance `j`. Only that coefficient is ever
//! evaluated; the full spectral-spatial transform is never formed.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, RwLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use super::geometry::AcquisitionGeometry;
use super::types::{BaseSpectraSet, SamplePoint};
use crate::error::{Error, Result};

/// Geometry plus base spectra: everything needed to build `A_m` for any frame.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    geometry: AcquisitionGeometry,
    base: BaseSpectraSet,
}

impl ForwardModel {
    pub fn new(geometry: AcquisitionGeometry, base: BaseSpectraSet) -> Result<Self> {
        geometry.validate()?;
        base.check_geometry(&geometry)?;
        Ok(ForwardModel { geometry, base })
    }

    pub fn geometry(&self) -> &AcquisitionGeometry {
        &self.geometry
    }

    pub fn base(&self) -> &BaseSpectraSet {
        &self.base
    }

    /// Unknowns per frame, N·J.
    pub fn frame_len(&self) -> usize {
        self.geometry.n_voxels() * self.base.n_substances()
    }

    pub fn frame_operator(&self, points: &[SamplePoint]) -> Result<FrameOperator> {
        FrameOperator::new(self, points)
    }

    pub fn apply_forward(&self, x_m: &[f64], points: &[SamplePoint]) -> Result<Vec<Complex64>> {
        self.frame_operator(points)?.forward(x_m)
    }

    pub fn apply_adjoint(
        &self,
        residual: &[Complex64],
        points: &[SamplePoint],
    ) -> Result<Vec<f64>> {
        self.frame_operator(points)?.adjoint(residual)
    }

    pub fn normal_matrix(&self, points: &[SamplePoint], shift: f64) -> Result<NormalMatrix> {
        self.frame_operator(points)?.normal_matrix(shift)
    }
}

/// Unitary spatial Fourier basis vector for 1-based k-space index `k`.
fn spatial_phases(geometry: &AcquisitionGeometry, k: &[usize]) -> Vec<Complex64> {
    let dims = &geometry.spatial_dims;
    let n = geometry.n_voxels();
    let scale = 1.0 / (n as f64).sqrt();
    let sign = geometry.dft_sign_convention.exponent_sign();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..n {
        // Exact rational phase Σ_a k_a r_a / n_a reduced mod 1.
        let turns: f64 = idx
            .iter()
            .zip(k)
            .zip(dims)
            .map(|((&r, &k), &dim)| (((k - 1) * r) % dim) as f64 / dim as f64)
            .sum();
        out.push(Complex64::from_polar(scale, sign * TAU * turns));
        for a in (0..dims.len()).rev() {
            idx[a] += 1;
            if idx[a] < dims[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// `A_m` for one frame's list of sample points.
#[derive(Clone, Debug)]
pub struct FrameOperator {
    n_voxels: usize,
    n_substances: usize,
    n_ro: usize,
    /// Per point: spatial phases (N) and fid rows (J × n_ro).
    terms: Vec<(Vec<Complex64>, Vec<Complex64>)>,
}

impl FrameOperator {
    pub fn new(model: &ForwardModel, points: &[SamplePoint]) -> Result<Self> {
        let geometry = &model.geometry;
        let base = &model.base;
        let mut terms = Vec::with_capacity(points.len());
        for p in points {
            p.validate(geometry)?;
            let phases = spatial_phases(geometry, &p.k);
            let rows = (0..base.n_substances())
                .flat_map(|j| base.fid_row(j, p.spectral - 1).iter().copied())
                .collect();
            terms.push((phases, rows));
        }
        Ok(FrameOperator {
            n_voxels: geometry.n_voxels(),
            n_substances: base.n_substances(),
            n_ro: base.n_ro(),
            terms,
        })
    }

    pub fn input_len(&self) -> usize {
        self.n_voxels * self.n_substances
    }

    pub fn output_len(&self) -> usize {
        self.terms.len() * self.n_ro
    }

    /// Spatial Fourier coefficient of each substance at this point's k.
    fn project(&self, phases: &[Complex64], x: &[f64]) -> Vec<Complex64> {
        let j_count = self.n_substances;
        let mut v = vec![Complex64::new(0.0, 0.0); j_count];
        for (r, phase) in phases.iter().enumerate() {
            let row = &x[r * j_count..(r + 1) * j_count];
            for (vj, &xj) in v.iter_mut().zip(row) {
                *vj += phase * xj;
            }
        }
        v
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        if x.len() != self.input_len() {
            return Err(Error::shape(format!(
                "x_m has {} entries, operator expects {}",
                x.len(),
                self.input_len()
            )));
        }
        let mut out = Vec::with_capacity(self.output_len());
        for (phases, rows) in &self.terms {
            let v = self.project(phases, x);
            for t in 0..self.n_ro {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, vj) in v.iter().enumerate() {
                    acc += vj * rows[j * self.n_ro + t];
                }
                out.push(acc);
            }
        }
        Ok(out)
    }

    /// `Re(A_mᴴ r)` accumulated into `out`.
    pub fn adjoint_add(&self, residual: &[Complex64], out: &mut [f64]) -> Result<()> {
        if residual.len() != self.output_len() || out.len() != self.input_len() {
            return Err(Error::shape(format!(
                "adjoint maps {} samples to {} unknowns, got {} and {}",
                self.output_len(),
                self.input_len(),
                residual.len(),
                out.len()
            )));
        }
        let j_count = self.n_substances;
        for ((phases, rows), r) in self.terms.iter().zip(residual.chunks_exact(self.n_ro)) {
            let c: Vec<Complex64> = (0..j_count)
                .map(|j| {
                    rows[j * self.n_ro..(j + 1) * self.n_ro]
                        .iter()
                        .zip(r)
                        .map(|(b, y)| b.conj() * y)
                        .sum()
                })
                .collect();
            for (voxel, phase) in phases.iter().enumerate() {
                let pc = phase.conj();
                for (j, cj) in c.iter().enumerate() {
                    out[voxel * j_count + j] += (pc * cj).re;
                }
            }
        }
        Ok(())
    }

    pub fn adjoint(&self, residual: &[Complex64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.input_len()];
        self.adjoint_add(residual, &mut out)?;
        Ok(out)
    }

    /// Low-rank factor `Q` with `QᵀQ = Re(A_mᴴ A_m)`.
    ///
    /// Per point, `A x = B v` with `v_j = φᵀ x_j` and `B` the fid rows, so
    /// `‖A x‖² = [Re v; Im v]ᵀ H [Re v; Im v]` with `H` the real form of
    /// `G = BᴴB`. Factoring `H = V Λ Vᵀ` gives `Q = Λ^{1/2} Vᵀ P`.
    fn gram_factor(&self) -> DMatrix<f64> {
        let j_count = self.n_substances;
        let n = self.input_len();
        let mut q = DMatrix::<f64>::zeros(2 * j_count * self.terms.len(), n);

        for (p, (phases, rows)) in self.terms.iter().enumerate() {
            let g = DMatrix::<Complex64>::from_fn(j_count, j_count, |a, b| {
                let ra = &rows[a * self.n_ro..(a + 1) * self.n_ro];
                let rb = &rows[b * self.n_ro..(b + 1) * self.n_ro];
                ra.iter().zip(rb).map(|(x, y)| x.conj() * y).sum()
            });
            let h = DMatrix::<f64>::from_fn(2 * j_count, 2 * j_count, |a, b| {
                let (ai, aj) = (a / j_count, a % j_count);
                let (bi, bj) = (b / j_count, b % j_count);
                let z = g[(aj, bj)];
                match (ai, bi) {
                    (0, 0) | (1, 1) => z.re,
                    (0, 1) => -z.im,
                    _ => z.im,
                }
            });
            let eig = SymmetricEigen::new(h);

            // P maps x to [Re v; Im v]: row (part, j) holds Re φ or Im φ on substance j.
            let mut proj = DMatrix::<f64>::zeros(2 * j_count, n);
            for (r, phase) in phases.iter().enumerate() {
                for j in 0..j_count {
                    proj[(j, r * j_count + j)] = phase.re;
                    proj[(j_count + j, r * j_count + j)] = phase.im;
                }
            }
            let mut weighted = eig.eigenvectors.transpose();
            for (row, &lambda) in eig.eigenvalues.iter().enumerate() {
                let s = lambda.max(0.0).sqrt();
                weighted.row_mut(row).scale_mut(s);
            }
            let block = weighted * proj;
            q.view_mut((2 * j_count * p, 0), (2 * j_count, n))
                .copy_from(&block);
        }
        q
    }

    pub fn normal_matrix(&self, shift: f64) -> Result<NormalMatrix> {
        NormalMatrix::from_factor(self.gram_factor(), shift)
    }
}

/// Solve-capable form of `Re(A_mᴴA_m) + shift·I`.
///
/// Stored as `shift·I + QᵀQ` with `Q` of rank at most `2J` per sample point;
/// solves go through the Woodbury identity
/// `(sI + QᵀQ)⁻¹ = (I − Qᵀ(sI + QQᵀ)⁻¹Q) / s`.
#[derive(Clone, Debug)]
pub struct NormalMatrix {
    q: DMatrix<f64>,
    shift: f64,
    inner: Cholesky<f64, Dyn>,
}

impl NormalMatrix {
    pub fn from_factor(q: DMatrix<f64>, shift: f64) -> Result<Self> {
        if !(shift.is_finite() && shift > 0.0) {
            return Err(Error::param(format!(
                "normal-matrix shift must be > 0, got {shift}"
            )));
        }
        let mut small = &q * q.transpose();
        for i in 0..small.nrows() {
            small[(i, i)] += shift;
        }
        let inner = Cholesky::new(small)
            .ok_or_else(|| Error::param("normal-matrix inner system not positive definite"))?;
        Ok(NormalMatrix { q, shift, inner })
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        let y = &x * self.shift + self.q.tr_mul(&(&self.q * &x));
        y.as_slice().to_vec()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::shape(format!(
                "rhs has {} entries, system is {}",
                rhs.len(),
                self.dim()
            )));
        }
        let b = DVector::from_column_slice(rhs);
        let t = self.inner.solve(&(&self.q * &b));
        let x = (b - self.q.tr_mul(&t)) / self.shift;
        Ok(x.as_slice().to_vec())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = self.q.tr_mul(&self.q);
        for i in 0..m.nrows() {
            m[(i, i)] += self.shift;
        }
        m
    }
}

/// Normal matrices keyed by a frame's sample points; they depend on nothing else.
pub struct NormalCache {
    shift: f64,
    entries: RwLock<HashMap<Vec<SamplePoint>, Arc<NormalMatrix>>>,
}

impl NormalCache {
    pub fn new(shift: f64) -> Result<Self> {
        if !(shift.is_finite() && shift > 0.0) {
            return Err(Error::param(format!(
                "normal-matrix shift must be > 0, got {shift}"
            )));
        }
        Ok(NormalCache {
            shift,
            entries: RwLock::new(HashMap::new()),
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn get_or_build(
        &self,
        model: &ForwardModel,
        points: &[SamplePoint],
    ) -> Result<Arc<NormalMatrix>> {
        if let Some(hit) = self
            .entries
            .read()
            .expect("cache lock poisoned")
            .get(points)
        {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(model.normal_matrix(points, self.shift)?);
        let mut w = self.entries.write().expect("cache lock poisoned");
        Ok(Arc::clone(w.entry(points.to_vec()).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
