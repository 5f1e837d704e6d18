//! Reference solver for small instances.
//!
//! Condat–Vũ primal–dual splitting: the data misfit and `½λW2‖Wx‖²` are taken
//! by gradient steps, `λx‖x‖₁` by its prox on acquired frames, and
//! `λW1‖Wx‖₁` through a projected dual variable. No variable splitting of
//! `x` is involved, so it shares nothing with the ADMM path except the
//! forward operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SubstanceDistribution;
use crate::solver::{soft_threshold, Problem, Regularization};

/// Largest problem the oracle accepts, in unknowns.
pub const MAX_UNKNOWNS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub max_iters: usize,
    /// Primal step; derived from the Lipschitz bound when `None`.
    pub tau: Option<f64>,
    /// Dual step; derived when `None`.
    pub sigma: Option<f64>,
    /// Stop when the objective changes by less than this, relatively, over
    /// [`OracleConfig::window`] iterations.
    pub tol: f64,
    pub window: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_iters: 500_000,
            tau: None,
            sigma: None,
            tol: 1e-11,
            window: 50,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.window == 0 {
            return Err(Error::param("oracle iteration counts must be >= 1"));
        }
        for (name, v) in [
            ("tau", self.tau),
            ("sigma", self.sigma),
            ("tol", Some(self.tol)),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::param(format!("oracle {name} must be > 0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub x: SubstanceDistribution,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `y ← Wx` with `(Wx)_m = x_{m+1} − x_m`.
fn diff(x: &[f64], n: usize, out: &mut [f64]) {
    for (o, (a, b)) in out.iter_mut().zip(x[n..].iter().zip(x)) {
        *o = a - b;
    }
}

/// `out += Wᵀd`
fn diff_adjoint_add(d: &[f64], n: usize, out: &mut [f64]) {
    for (i, v) in d.iter().enumerate() {
        out[i] -= v;
        out[i + n] += v;
    }
}

/// Largest eigenvalue of `Re(A_mᴴA_m)` over all frames, by power iteration.
fn data_lipschitz(problem: &Problem) -> Result<f64> {
    let n = problem.frame_len();
    let mut best: f64 = 0.0;
    for m in 0..problem.n_frames() {
        let Some(op) = problem.operator(m) else {
            continue;
        };
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.37 * ((i * 7919) % 13) as f64)
            .collect();
        let mut lambda = 0.0;
        for _ in 0..200 {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let w = op.adjoint(&op.forward(&v)?)?;
            lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            v = w;
        }
        best = best.max(lambda);
    }
    Ok(best)
}

/// Minimizes the reconstruction objective with a primal–dual method.
pub fn oracle_solve(
    problem: &Problem,
    reg: &Regularization,
    config: &OracleConfig,
) -> Result<OracleSolution> {
    reg.validate()?;
    config.validate()?;
    let total = problem.n_unknowns();
    if total > MAX_UNKNOWNS {
        return Err(Error::TooLarge(format!(
            "oracle is limited to {MAX_UNKNOWNS} unknowns, problem has {total}"
        )));
    }
    let n = problem.frame_len();
    let frames = problem.n_frames();
    let n_diff = frames.saturating_sub(1) * n;

    // ‖W‖² ≤ 4; the smooth part has Lipschitz constant ‖A‖² + 4λW2.
    let lf = 1.01 * data_lipschitz(problem)? + 4.0 * reg.lambda_w2;
    let sigma = config.sigma.unwrap_or_else(|| (lf / 4.0).max(1e-12));
    let tau = config.tau.unwrap_or(0.99 / (lf / 2.0 + 4.0 * sigma));
    if 1.0 / tau - 4.0 * sigma < lf / 2.0 {
        return Err(Error::param(format!(
            "oracle steps tau = {tau}, sigma = {sigma} violate the convergence condition"
        )));
    }

    let acquired: Vec<bool> = (0..frames).map(|m| problem.is_acquired(m)).collect();
    let mut x = vec![0.0; total];
    let mut x_new = vec![0.0; total];
    let mut dual = vec![0.0; n_diff];
    let mut grad = vec![0.0; total];
    let mut dx = vec![0.0; n_diff];
    let mut extrap = vec![0.0; total];

    let mut reference = problem.objective(&x, reg)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        problem.data_gradient(&x, &mut grad)?;
        if frames > 1 {
            diff(&x, n, &mut dx);
            for v in dx.iter_mut() {
                *v *= reg.lambda_w2;
            }
            diff_adjoint_add(&dx, n, &mut grad);
            diff_adjoint_add(&dual, n, &mut grad);
        }
        for m in 0..frames {
            let range = m * n..(m + 1) * n;
            let threshold = if acquired[m] { tau * reg.lambda_x } else { 0.0 };
            for i in range {
                x_new[i] = soft_threshold(x[i] - tau * grad[i], threshold);
            }
        }
        if frames > 1 {
            for ((e, a), b) in extrap.iter_mut().zip(&x_new).zip(&x) {
                *e = 2.0 * a - b;
            }
            diff(&extrap, n, &mut dx);
            for (y, d) in dual.iter_mut().zip(&dx) {
                *y = (*y + sigma * d).clamp(-reg.lambda_w1, reg.lambda_w1);
            }
        }
        std::mem::swap(&mut x, &mut x_new);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: iterations,
                variable: "oracle x",
            });
        }

        if iterations % config.window == 0 {
            let current = problem.objective(&x, reg)?;
            let change = (reference - current).abs();
            reference = current;
            if change <= config.tol * current.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }
    let objective = problem.objective(&x, reg)?;
    Ok(OracleSolution {
        x: problem.distribution(x)?,
        objective,
        iterations,
        converged,
    })
}

/// Tolerances for deciding which entries sit at a kink of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktOptions {
    /// `|x_i| ≤ zero_tol` counts as zero.
    pub zero_tol: f64,
    /// `|x_{m+1,i} − x_{m,i}| ≤ diff_tol` counts as no change.
    pub diff_tol: f64,
    pub max_sweeps: usize,
}

impl Default for KktOptions {
    fn default() -> Self {
        KktOptions {
            zero_tol: 0.0,
            diff_tol: 0.0,
            max_sweeps: 20_000,
        }
    }
}

/// `‖Re(Aᴴy)‖₂` over all acquired frames: the gradient scale of the data term at zero.
pub fn kkt_scale(problem: &Problem) -> Result<f64> {
    Ok(problem
        .back_projections()?
        .iter()
        .flatten()
        .flat_map(|v| v.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt())
}

/// Norm of the minimal-norm element of the objective's subdifferential at `x`.
///
/// Zero exactly at a minimizer. Entries and differences within the
/// tolerances of `options` are treated as lying on the kink, where their
/// subgradient coefficient is free in `[−1, 1]`; the resulting box-constrained
/// least-squares problem is solved per unknown by coordinate descent.
pub fn kkt_residual(
    x: &[f64],
    problem: &Problem,
    reg: &Regularization,
    options: &KktOptions,
) -> Result<f64> {
    reg.validate()?;
    let n = problem.frame_len();
    let frames = problem.n_frames();
    let mut grad = vec![0.0; x.len()];
    problem.data_gradient(x, &mut grad)?;
    if frames > 1 {
        let mut dx = vec![0.0; (frames - 1) * n];
        diff(x, n, &mut dx);
        dx.iter_mut().for_each(|v| *v *= reg.lambda_w2);
        diff_adjoint_add(&dx, n, &mut grad);
    }
    let acquired: Vec<bool> = (0..frames).map(|m| problem.is_acquired(m)).collect();

    let mut total = 0.0;
    let mut r = vec![0.0; frames];
    // Free coefficients: (is_diff, frame index)
    let mut free: Vec<(bool, usize)> = Vec::new();
    let mut coef_u = vec![0.0; frames];
    let mut coef_v = vec![0.0; frames.saturating_sub(1)];
    for i in 0..n {
        free.clear();
        for m in 0..frames {
            r[m] = grad[m * n + i];
            coef_u[m] = 0.0;
            if acquired[m] && reg.lambda_x > 0.0 {
                let v = x[m * n + i];
                if v.abs() <= options.zero_tol {
                    free.push((false, m));
                } else {
                    coef_u[m] = v.signum();
                    r[m] += reg.lambda_x * v.signum();
                }
            }
        }
        for m in 0..frames.saturating_sub(1) {
            coef_v[m] = 0.0;
            if reg.lambda_w1 > 0.0 {
                let d = x[(m + 1) * n + i] - x[m * n + i];
                if d.abs() <= options.diff_tol {
                    free.push((true, m));
                } else {
                    coef_v[m] = d.signum();
                    r[m] -= reg.lambda_w1 * d.signum();
                    r[m + 1] += reg.lambda_w1 * d.signum();
                }
            }
        }
        // Coordinate descent on ‖r‖² over the free coefficients.
        for _ in 0..options.max_sweeps {
            let mut moved: f64 = 0.0;
            for &(is_diff, m) in &free {
                if is_diff {
                    // Contribution λW1·v·(−e_m + e_{m+1}).
                    let l = reg.lambda_w1;
                    let old = coef_v[m];
                    let dir = r[m + 1] - r[m];
                    let new = (old - dir / (2.0 * l)).clamp(-1.0, 1.0);
                    let step = l * (new - old);
                    r[m] -= step;
                    r[m + 1] += step;
                    coef_v[m] = new;
                    moved = moved.max(step.abs());
                } else {
                    let l = reg.lambda_x;
                    let old = coef_u[m];
                    let new = (old - r[m] / l).clamp(-1.0, 1.0);
                    let step = l * (new - old);
                    r[m] += step;
                    coef_u[m] = new;
                    moved = moved.max(step.abs());
                }
            }
            if moved <= 1e-15 {
                break;
            }
        }
        total += r.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total.sqrt())
}
