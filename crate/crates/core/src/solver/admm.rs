//! Nested ADMM for the fused-lasso / elastic-net regularized reconstruction.
//!
//! The outer loop splits `x = z` and `h = s` with `(z, s)` constrained to
//! `s = Wz`. Each outer iteration runs
//!
//! 1. a per-frame x-update, itself a short inner ADMM splitting `x = α` to
//!    handle the `ℓ1` penalty,
//! 2. the elastic-net prox for `h`,
//! 3. the banded-Cholesky projection for `(z, s)`,
//! 4. scaled dual ascent on `u` and `ν`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::band::BandCholesky;
use super::problem::{Problem, Regularization};
use super::prox::{soft_threshold, update_h};
use crate::error::{Error, Result};
use crate::model::{NormalCache, NormalMatrix, SubstanceDistribution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda_x: f64,
    pub lambda_w1: f64,
    pub lambda_w2: f64,
    #[serde(default = "default_rho1")]
    pub rho1: f64,
    #[serde(default = "default_rho2")]
    pub rho2: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_outer")]
    pub outer_iters: usize,
    #[serde(default = "default_inner")]
    pub inner_iters: usize,
    #[serde(default = "default_true")]
    pub record_residuals: bool,
    /// Stop once `‖x − z‖₂ / ‖x‖₂` falls below this; off when `None`.
    #[serde(default)]
    pub rel_tol: Option<f64>,
}

fn default_rho1() -> f64 {
    1e-3
}
fn default_rho2() -> f64 {
    1e-1
}
fn default_mu() -> f64 {
    1e-3
}
fn default_outer() -> usize {
    1000
}
fn default_inner() -> usize {
    2
}
fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda_x: 0.0,
            lambda_w1: 0.0,
            lambda_w2: 0.0,
            rho1: default_rho1(),
            rho2: default_rho2(),
            mu: default_mu(),
            outer_iters: default_outer(),
            inner_iters: default_inner(),
            record_residuals: true,
            rel_tol: None,
        }
    }
}

impl SolverConfig {
    pub fn with_regularization(reg: Regularization) -> Self {
        SolverConfig {
            lambda_x: reg.lambda_x,
            lambda_w1: reg.lambda_w1,
            lambda_w2: reg.lambda_w2,
            ..Default::default()
        }
    }

    pub fn regularization(&self) -> Regularization {
        Regularization::new(self.lambda_x, self.lambda_w1, self.lambda_w2)
    }

    pub fn set_regularization(&mut self, reg: Regularization) {
        self.lambda_x = reg.lambda_x;
        self.lambda_w1 = reg.lambda_w1;
        self.lambda_w2 = reg.lambda_w2;
    }

    /// `γ = ρ2 / ρ1`
    pub fn gamma(&self) -> f64 {
        self.rho2 / self.rho1
    }

    pub fn validate(&self) -> Result<()> {
        self.regularization().validate()?;
        for (name, v) in [("rho1", self.rho1), ("rho2", self.rho2), ("mu", self.mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::param("iteration counts must be >= 1"));
        }
        if let Some(tol) = self.rel_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(Error::param(format!("rel_tol must be > 0, got {tol}")));
            }
        }
        Ok(())
    }
}

/// All primal, dual and auxiliary variables, frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub nu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub iteration: usize,
}

impl SolverState {
    /// `x_m = z_m = Re(A_mᴴ y_m)` on acquired frames, everything else zero.
    pub fn initial(problem: &Problem, back_projections: &[Option<Vec<f64>>]) -> Self {
        let n = problem.frame_len();
        let frames = problem.n_frames();
        let mut x = vec![0.0; frames * n];
        for (m, aty) in back_projections.iter().enumerate() {
            if let Some(aty) = aty {
                x[m * n..(m + 1) * n].copy_from_slice(aty);
            }
        }
        let diffs = frames.saturating_sub(1) * n;
        SolverState {
            z: x.clone(),
            x,
            u: vec![0.0; frames * n],
            h: vec![0.0; diffs],
            s: vec![0.0; diffs],
            nu: vec![0.0; diffs],
            alpha: vec![0.0; frames * n],
            beta: vec![0.0; frames * n],
            iteration: 0,
        }
    }
}

/// Per-iteration convergence diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub iteration: usize,
    /// `‖x^k − z^k‖₂`
    pub primal: f64,
    /// `‖z^k − z^{k−1}‖₂`
    pub z_change: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResidualLog {
    pub records: Vec<ResidualRecord>,
    /// Entry count the norms are taken over, for RMS conversion.
    pub n_entries: usize,
}

impl ResidualLog {
    /// CSV with header `iteration,rms_x_minus_z,rms_z_delta`.
    pub fn to_csv(&self) -> String {
        let scale = 1.0 / (self.n_entries.max(1) as f64).sqrt();
        let mut out = String::from("iteration,rms_x_minus_z,rms_z_delta\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:e},{:e}\n",
                r.iteration,
                r.primal * scale,
                r.z_change * scale
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: SubstanceDistribution,
    pub residuals: ResidualLog,
    pub state: SolverState,
}

/// Data one frame's x-update needs beyond the shared state.
#[derive(Clone, Copy, Debug)]
pub enum FrameData<'a> {
    /// No readout: only the coupling and inner-split terms remain.
    Gap,
    Acquired {
        back_projection: &'a [f64],
        normal: &'a NormalMatrix,
    },
}

/// Runs the inner ADMM for one frame and leaves the result in `x`.
///
/// Acquired frames solve `{Re(AᴴA) + (ρ1+μ)I} x = Re(Aᴴy) + ρ1(z−u) + μ(α−β)`
/// and soft-threshold `α`; gap frames carry no `ℓ1` term, so `α = x + β`.
#[allow(clippy::too_many_arguments)]
pub fn update_x_frame(
    data: FrameData<'_>,
    z: &[f64],
    u: &[f64],
    x: &mut [f64],
    alpha: &mut [f64],
    beta: &mut [f64],
    config: &SolverConfig,
    rhs: &mut Vec<f64>,
) -> Result<()> {
    let (rho1, mu) = (config.rho1, config.mu);
    let threshold = config.lambda_x / mu;
    for _ in 0..config.inner_iters {
        match data {
            FrameData::Acquired {
                back_projection,
                normal,
            } => {
                rhs.clear();
                rhs.extend(
                    back_projection
                        .iter()
                        .zip(z.iter().zip(u))
                        .zip(alpha.iter().zip(beta.iter()))
                        .map(|((aty, (z, u)), (a, b))| aty + rho1 * (z - u) + mu * (a - b)),
                );
                let solved = normal.solve(rhs)?;
                x.copy_from_slice(&solved);
                for ((x, a), b) in x.iter().zip(alpha.iter_mut()).zip(beta.iter_mut()) {
                    *a = soft_threshold(x + *b, threshold);
                    *b += x - *a;
                }
            }
            FrameData::Gap => {
                let inv = 1.0 / (rho1 + mu);
                for ((((x, z), u), a), b) in x
                    .iter_mut()
                    .zip(z)
                    .zip(u)
                    .zip(alpha.iter_mut())
                    .zip(beta.iter_mut())
                {
                    *x = (rho1 * (z - u) + mu * (*a - *b)) * inv;
                    *a = *x + *b;
                    *b += *x - *a;
                }
            }
        }
    }
    Ok(())
}

fn has_non_finite(v: &[f64]) -> bool {
    v.iter().any(|x| !x.is_finite())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Prepared solver: back projections and normal-matrix factorizations are
/// computed once and reused across iterations and repeated sample points.
pub struct AdmmSolver<'a> {
    problem: &'a Problem,
    config: SolverConfig,
    back_projections: Vec<Option<Vec<f64>>>,
    normals: Vec<Option<Arc<NormalMatrix>>>,
    band: BandCholesky,
}

impl<'a> AdmmSolver<'a> {
    pub fn new(problem: &'a Problem, config: SolverConfig) -> Result<Self> {
        Self::with_cache(problem, config, None)
    }

    /// Reuses `cache` when its shift equals `ρ1 + μ`.
    pub fn with_cache(
        problem: &'a Problem,
        config: SolverConfig,
        cache: Option<&NormalCache>,
    ) -> Result<Self> {
        config.validate()?;
        let shift = config.rho1 + config.mu;
        let local;
        let cache = match cache {
            Some(c) if c.shift() == shift => c,
            _ => {
                local = NormalCache::new(shift)?;
                &local
            }
        };
        let normals = problem
            .schedule()
            .frames
            .iter()
            .map(|f| {
                f.points()
                    .map(|p| cache.get_or_build(problem.model(), p))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let back_projections = problem.back_projections()?;
        let band = BandCholesky::new(problem.n_frames(), config.gamma())?;
        Ok(AdmmSolver {
            problem,
            config,
            back_projections,
            normals,
            band,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn initial_state(&self) -> SolverState {
        SolverState::initial(self.problem, &self.back_projections)
    }

    /// Step 1 over all frames; frames are independent.
    fn step_x(&self, state: &mut SolverState) -> Result<()> {
        let n = self.problem.frame_len();
        let config = &self.config;
        let SolverState {
            x,
            z,
            u,
            alpha,
            beta,
            ..
        } = state;
        x.par_chunks_mut(n)
            .zip(alpha.par_chunks_mut(n))
            .zip(beta.par_chunks_mut(n))
            .zip(z.par_chunks(n).zip(u.par_chunks(n)))
            .enumerate()
            .try_for_each_init(Vec::new, |rhs, (m, (((x, alpha), beta), (z, u)))| {
                let data = match (&self.back_projections[m], &self.normals[m]) {
                    (Some(aty), Some(normal)) => FrameData::Acquired {
                        back_projection: aty,
                        normal,
                    },
                    (None, None) => FrameData::Gap,
                    _ => {
                        return Err(Error::shape(format!(
                            "frame {m}: missing normal-matrix factorization"
                        )))
                    }
                };
                update_x_frame(data, z, u, x, alpha, beta, config, rhs)
            })
    }

    /// One outer iteration (Steps 1–4). Returns `(‖x − z‖, ‖z − z_prev‖)`.
    pub fn iterate(&self, state: &mut SolverState, z_prev: &mut Vec<f64>) -> Result<(f64, f64)> {
        let n = self.problem.frame_len();
        let c = &self.config;
        state.iteration += 1;
        let k = state.iteration;

        self.step_x(state)?;
        if has_non_finite(&state.x) {
            return Err(Error::Divergence {
                iteration: k,
                variable: "x",
            });
        }

        update_h(
            &state.s,
            &state.nu,
            &mut state.h,
            c.lambda_w1,
            c.lambda_w2,
            c.rho2,
        );

        let omega: Vec<f64> = state.x.iter().zip(&state.u).map(|(x, u)| x + u).collect();
        let q: Vec<f64> = state
            .h
            .iter()
            .zip(&state.nu)
            .map(|(h, nu)| h + nu)
            .collect();
        z_prev.clone_from(&state.z);
        self.band
            .project_into(&omega, &q, n, &mut state.z, &mut state.s)?;
        if has_non_finite(&state.z) {
            return Err(Error::Divergence {
                iteration: k,
                variable: "z",
            });
        }

        for ((u, x), z) in state.u.iter_mut().zip(&state.x).zip(&state.z) {
            *u += x - z;
        }
        for ((nu, h), s) in state.nu.iter_mut().zip(&state.h).zip(&state.s) {
            *nu += h - s;
        }
        if has_non_finite(&state.u) || has_non_finite(&state.nu) {
            return Err(Error::Divergence {
                iteration: k,
                variable: "dual",
            });
        }
        Ok((dist(&state.x, &state.z), dist(&state.z, z_prev)))
    }

    /// Runs from `state` for `outer_iters` iterations or until `rel_tol` is met.
    pub fn run_from(&self, mut state: SolverState) -> Result<Solution> {
        let mut log = ResidualLog {
            records: Vec::new(),
            n_entries: state.x.len(),
        };
        let mut z_prev = Vec::with_capacity(state.z.len());
        for _ in 0..self.config.outer_iters {
            let (primal, z_change) = self.iterate(&mut state, &mut z_prev)?;
            if self.config.record_residuals {
                log.records.push(ResidualRecord {
                    iteration: state.iteration,
                    primal,
                    z_change,
                });
            }
            if let Some(tol) = self.config.rel_tol {
                let norm = state.x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if primal <= tol * norm.max(f64::MIN_POSITIVE) {
                    break;
                }
            }
        }
        let x = self.problem.distribution(state.x.clone())?;
        Ok(Solution {
            x,
            residuals: log,
            state,
        })
    }

    pub fn run(&self) -> Result<Solution> {
        self.run_from(self.initial_state())
    }
}

/// Solves the reconstruction problem with the nested ADMM.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<Solution> {
    AdmmSolver::new(problem, config.clone())?.run()
}
