use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ForwardModel, FrameOperator, SamplingSchedule, SignalSet, SubstanceDistribution,
};

/// The three regularization weights of the reconstruction objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub lambda_x: f64,
    pub lambda_w1: f64,
    pub lambda_w2: f64,
}

impl Regularization {
    pub fn new(lambda_x: f64, lambda_w1: f64, lambda_w2: f64) -> Self {
        Regularization {
            lambda_x,
            lambda_w1,
            lambda_w2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_x", self.lambda_x),
            ("lambda_w1", self.lambda_w1),
            ("lambda_w2", self.lambda_w2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A reconstruction instance: forward model, schedule, and measured signals,
/// with one operator prepared per acquired frame.
#[derive(Clone, Debug)]
pub struct Problem {
    model: ForwardModel,
    schedule: SamplingSchedule,
    signals: SignalSet,
    operators: Vec<Option<FrameOperator>>,
}

impl Problem {
    pub fn new(
        model: ForwardModel,
        schedule: SamplingSchedule,
        signals: SignalSet,
    ) -> Result<Self> {
        schedule.validate_against(model.geometry())?;
        signals.validate_against(&schedule, model.geometry().n_ro())?;
        let operators = schedule
            .frames
            .iter()
            .map(|f| f.points().map(|p| model.frame_operator(p)).transpose())
            .collect::<Result<Vec<_>>>()?;
        Ok(Problem {
            model,
            schedule,
            signals,
            operators,
        })
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn schedule(&self) -> &SamplingSchedule {
        &self.schedule
    }

    pub fn signals(&self) -> &SignalSet {
        &self.signals
    }

    pub fn n_frames(&self) -> usize {
        self.schedule.n_frames()
    }

    /// Unknowns per frame, N·J.
    pub fn frame_len(&self) -> usize {
        self.model.frame_len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_frames() * self.frame_len()
    }

    pub fn operator(&self, m: usize) -> Option<&FrameOperator> {
        self.operators[m].as_ref()
    }

    pub fn is_acquired(&self, m: usize) -> bool {
        self.operators[m].is_some()
    }

    /// `Re(A_mᴴ y_m)` for each frame, `None` on gaps.
    pub fn back_projections(&self) -> Result<Vec<Option<Vec<f64>>>> {
        (0..self.n_frames())
            .map(|m| match (self.operator(m), self.signals.frame(m)) {
                (Some(op), Some(y)) => op.adjoint(y).map(Some),
                _ => Ok(None),
            })
            .collect()
    }

    pub fn empty_distribution(&self) -> SubstanceDistribution {
        SubstanceDistribution::zeros(
            self.model.geometry().spatial_dims.clone(),
            self.n_frames(),
            self.model.base().n_substances(),
        )
    }

    pub fn distribution(&self, values: Vec<f64>) -> Result<SubstanceDistribution> {
        SubstanceDistribution::from_values(
            self.model.geometry().spatial_dims.clone(),
            self.n_frames(),
            self.model.base().n_substances(),
            values,
        )
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_unknowns() {
            return Err(Error::shape(format!(
                "x has {} entries, problem has {}",
                x.len(),
                self.n_unknowns()
            )));
        }
        Ok(())
    }

    /// `Σ_{m∈D} ½‖y_m − A_m x_m‖²`
    pub fn data_misfit(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        let n = self.frame_len();
        let mut total = 0.0;
        for m in 0..self.n_frames() {
            if let (Some(op), Some(y)) = (self.operator(m), self.signals.frame(m)) {
                let pred = op.forward(&x[m * n..(m + 1) * n])?;
                total += 0.5
                    * pred
                        .iter()
                        .zip(y)
                        .map(|(p, y)| (y - p).norm_sqr())
                        .sum::<f64>();
            }
        }
        Ok(total)
    }

    /// Gradient of the data misfit, `Re(A_mᴴ(A_m x_m − y_m))` per acquired frame.
    pub fn data_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<()> {
        self.check_len(x)?;
        let n = self.frame_len();
        grad.fill(0.0);
        for m in 0..self.n_frames() {
            if let (Some(op), Some(y)) = (self.operator(m), self.signals.frame(m)) {
                let pred = op.forward(&x[m * n..(m + 1) * n])?;
                let r: Vec<Complex64> = pred.iter().zip(y).map(|(p, y)| p - y).collect();
                op.adjoint_add(&r, &mut grad[m * n..(m + 1) * n])?;
            }
        }
        Ok(())
    }

    /// The full objective:
    ///
    /// `Σ_{m∈D} [½‖y_m − A_m x_m‖² + λx‖x_m‖₁]
    ///  + Σ_{m<M} [λW1‖x_{m+1} − x_m‖₁ + ½λW2‖x_{m+1} − x_m‖²]`
    pub fn objective(&self, x: &[f64], reg: &Regularization) -> Result<f64> {
        let n = self.frame_len();
        let mut total = self.data_misfit(x)?;
        for m in 0..self.n_frames() {
            if self.is_acquired(m) {
                total += reg.lambda_x * x[m * n..(m + 1) * n].iter().map(|v| v.abs()).sum::<f64>();
            }
        }
        for m in 0..self.n_frames().saturating_sub(1) {
            for i in 0..n {
                let d = x[(m + 1) * n + i] - x[m * n + i];
                total += reg.lambda_w1 * d.abs() + 0.5 * reg.lambda_w2 * d * d;
            }
        }
        Ok(total)
    }

    /// Predicted signals `A_m x_m` for every acquired frame.
    pub fn predict(&self, x: &[f64]) -> Result<SignalSet> {
        self.check_len(x)?;
        let n = self.frame_len();
        let frames = (0..self.n_frames())
            .map(|m| {
                self.operator(m)
                    .map(|op| op.forward(&x[m * n..(m + 1) * n]))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SignalSet::new(frames))
    }
}

/// Objective value of `x` for the given problem and weights.
pub fn objective_value(
    x: &SubstanceDistribution,
    problem: &Problem,
    reg: &Regularization,
) -> Result<f64> {
    problem.objective(x.values(), reg)
}
