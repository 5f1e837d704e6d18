//! Two-fold cross-validation over a log-spaced `(λx, λW1, λW2)` grid.
//!
//! Acquired readouts are split by the parity of their acquisition order.
//! Each fold keeps every frame; the other fold's readouts become gaps, so
//! the temporal coupling sees the same time axis in both.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardModel, Frame, NormalCache, SamplingSchedule, SignalSet};
use crate::solver::{AdmmSolver, Problem, Regularization, SolverConfig};

/// `{10⁻⁴, 10⁻³, …, 10⁷}`
pub fn paper_grid() -> Vec<f64> {
    (-4..=7).map(|e| 10f64.powi(e)).collect()
}

/// Every other decade of the full grid from `10⁻³`: `{10⁻³, 10⁻¹, 10¹, 10³, 10⁵}`.
pub fn coarse_grid() -> Vec<f64> {
    (-3..=5).step_by(2).map(|e| 10f64.powi(e)).collect()
}

/// Outer-iteration budget per CV solve.
pub const CV_OUTER_ITERS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub lambda_x: Vec<f64>,
    pub lambda_w1: Vec<f64>,
    pub lambda_w2: Vec<f64>,
    /// Solver settings for everything except the λs.
    pub base: SolverConfig,
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan::from_axis(paper_grid())
    }
}

impl CvPlan {
    /// The same value list on all three axes, with the reduced CV budget.
    pub fn from_axis(values: Vec<f64>) -> Self {
        let base = SolverConfig {
            outer_iters: CV_OUTER_ITERS,
            record_residuals: false,
            ..Default::default()
        };
        CvPlan {
            lambda_x: values.clone(),
            lambda_w1: values.clone(),
            lambda_w2: values,
            base,
        }
    }

    pub fn coarse() -> Self {
        CvPlan::from_axis(coarse_grid())
    }

    pub fn folds(&self) -> usize {
        2
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("lambda_x", &self.lambda_x),
            ("lambda_w1", &self.lambda_w1),
            ("lambda_w2", &self.lambda_w2),
        ] {
            if axis.is_empty() {
                return Err(Error::Config(format!("CV grid for {name} is empty")));
            }
            if let Some(v) = axis.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::Config(format!(
                    "CV grid for {name} has non-positive value {v}"
                )));
            }
        }
        self.base.validate()
    }

    /// All combinations, `λx` outermost.
    pub fn combinations(&self) -> Vec<Regularization> {
        let mut out = Vec::with_capacity(self.len());
        for &x in &self.lambda_x {
            for &w1 in &self.lambda_w1 {
                for &w2 in &self.lambda_w2 {
                    out.push(Regularization::new(x, w1, w2));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.lambda_x.len() * self.lambda_w1.len() * self.lambda_w2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One side of the split: the full time axis with the other side's readouts removed.
#[derive(Clone, Debug, PartialEq)]
pub struct Fold {
    pub schedule: SamplingSchedule,
    pub signals: SignalSet,
}

/// Splits acquired frames into odd (1st, 3rd, …) and even (2nd, 4th, …)
/// readouts in acquisition order.
pub fn split_readouts(schedule: &SamplingSchedule, signals: &SignalSet) -> Result<(Fold, Fold)> {
    schedule.validate()?;
    if signals.frames().len() != schedule.n_frames() {
        return Err(Error::shape(format!(
            "signals cover {} frames, schedule has {}",
            signals.frames().len(),
            schedule.n_frames()
        )));
    }
    let acquired = schedule.acquired();
    if acquired.len() < 2 {
        return Err(Error::Schedule(format!(
            "cross-validation needs at least 2 acquired frames, got {}",
            acquired.len()
        )));
    }
    let make = |parity: usize| -> Result<Fold> {
        let mut frames = vec![Frame::Gap; schedule.n_frames()];
        let mut data = vec![None; schedule.n_frames()];
        for &m in acquired.iter().skip(parity).step_by(2) {
            frames[m] = schedule.frames[m].clone();
            data[m] = Some(
                signals
                    .frame(m)
                    .ok_or_else(|| Error::shape(format!("acquired frame {m} has no signal")))?
                    .to_vec(),
            );
        }
        Ok(Fold {
            schedule: SamplingSchedule::new(schedule.frame_interval_s, frames)?,
            signals: SignalSet::new(data),
        })
    };
    Ok((make(0)?, make(1)?))
}

/// Both folds prepared as problems, with normal-matrix caches shared by
/// every grid point.
pub struct CvFolds {
    problems: [Problem; 2],
    caches: [NormalCache; 2],
}

impl CvFolds {
    /// `shift` must be the `ρ1 + μ` the solves will use for the caches to be hit.
    pub fn new(
        model: &ForwardModel,
        schedule: &SamplingSchedule,
        signals: &SignalSet,
        shift: f64,
    ) -> Result<Self> {
        let (a, b) = split_readouts(schedule, signals)?;
        let problems = [
            Problem::new(model.clone(), a.schedule, a.signals)?,
            Problem::new(model.clone(), b.schedule, b.signals)?,
        ];
        Ok(CvFolds {
            problems,
            caches: [NormalCache::new(shift)?, NormalCache::new(shift)?],
        })
    }

    pub fn problem(&self, fold: usize) -> &Problem {
        &self.problems[fold]
    }
}

/// Fits on `train` and returns the sum of squared errors and the number of
/// real values compared on `test`'s acquired frames.
fn held_out_error(
    train: &Problem,
    test: &Problem,
    config: &SolverConfig,
    cache: &NormalCache,
) -> Result<(f64, usize)> {
    let solution = AdmmSolver::with_cache(train, config.clone(), Some(cache))?.run()?;
    let n = train.frame_len();
    let x = solution.x.values();
    let mut sse = 0.0;
    let mut count = 0;
    for m in 0..test.n_frames() {
        if let (Some(op), Some(y)) = (test.operator(m), test.signals().frame(m)) {
            let pred = op.forward(&x[m * n..(m + 1) * n])?;
            sse += pred
                .iter()
                .zip(y)
                .map(|(p, y)| (p - y).norm_sqr())
                .sum::<f64>();
            count += 2 * y.len();
        }
    }
    Ok((sse, count))
}

/// Held-out RMSE over real and imaginary parts, averaged over both
/// train/test orientations.
pub fn cv_rmse(reg: &Regularization, folds: &CvFolds, base: &SolverConfig) -> Result<f64> {
    let mut config = base.clone();
    config.set_regularization(*reg);
    let mut total = 0.0;
    for train in 0..2 {
        let test = 1 - train;
        let (sse, count) = held_out_error(
            &folds.problems[train],
            &folds.problems[test],
            &config,
            &folds.caches[train],
        )?;
        total += (sse / count.max(1) as f64).sqrt();
    }
    Ok(total / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub lambda_x: f64,
    pub lambda_w1: f64,
    pub lambda_w2: f64,
    pub rmse: f64,
}

impl CvEntry {
    pub fn regularization(&self) -> Regularization {
        Regularization::new(self.lambda_x, self.lambda_w1, self.lambda_w2)
    }

    /// Lower RMSE first; ties go to the lexicographically smallest λs.
    fn rank(&self, other: &Self) -> Ordering {
        self.rmse
            .total_cmp(&other.rmse)
            .then(self.lambda_x.total_cmp(&other.lambda_x))
            .then(self.lambda_w1.total_cmp(&other.lambda_w1))
            .then(self.lambda_w2.total_cmp(&other.lambda_w2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: CvEntry,
    /// One entry per combination in [`CvPlan::combinations`] order.
    pub table: Vec<CvEntry>,
}

impl GridSearchResult {
    /// CSV with header `lambda_x,lambda_w1,lambda_w2,rmse`.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("lambda_x,lambda_w1,lambda_w2,rmse\n");
        for e in &self.table {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                e.lambda_x, e.lambda_w1, e.lambda_w2, e.rmse
            ));
        }
        out
    }
}

/// Picks the best entry of `table` by RMSE with the lexicographic tie rule.
pub fn select_best(table: &[CvEntry]) -> Option<CvEntry> {
    table.iter().copied().min_by(|a, b| a.rank(b))
}

/// Evaluates every grid combination in parallel and returns the table and
/// the minimizer.
pub fn grid_search(
    plan: &CvPlan,
    model: &ForwardModel,
    schedule: &SamplingSchedule,
    signals: &SignalSet,
) -> Result<GridSearchResult> {
    plan.validate()?;
    let folds = CvFolds::new(model, schedule, signals, plan.base.rho1 + plan.base.mu)?;
    let combos = plan.combinations();
    let total = combos.len();
    let done = AtomicUsize::new(0);
    let step = (total / 20).max(1);
    let table = combos
        .par_iter()
        .map(|reg| {
            let rmse = cv_rmse(reg, &folds, &plan.base)?;
            let finished = done.fetch_add(1, AtomicOrdering::Relaxed) + 1;
            if finished % step == 0 || finished == total {
                log::info!("cv: {finished}/{total} combinations evaluated");
            }
            Ok(CvEntry {
                lambda_x: reg.lambda_x,
                lambda_w1: reg.lambda_w1,
                lambda_w2: reg.lambda_w2,
                rmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&table).ok_or_else(|| Error::Config("CV grid is empty".into()))?;
    Ok(GridSearchResult { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AcquisitionGeometry, BaseSpectraSet, DftSign, SamplePoint};
    use num_complex::Complex64;

    fn scalar_setup(values: &[Option<f64>]) -> (ForwardModel, SamplingSchedule, SignalSet) {
        let geometry = AcquisitionGeometry::new(vec![1], 1, 1).unwrap();
        let base = BaseSpectraSet::new(
            vec!["s".into()],
            1,
            1,
            vec![Complex64::new(1.0, 0.0)],
            DftSign::Inverse,
        )
        .unwrap();
        let model = ForwardModel::new(geometry, base).unwrap();
        let frames = values
            .iter()
            .map(|v| {
                if v.is_some() {
                    Frame::Acquired(vec![SamplePoint::new(1, vec![1])])
                } else {
                    Frame::Gap
                }
            })
            .collect();
        let schedule = SamplingSchedule::new(4.0, frames).unwrap();
        let signals = SignalSet::new(
            values
                .iter()
                .map(|v| v.map(|v| vec![Complex64::new(v, 0.0)]))
                .collect(),
        );
        (model, schedule, signals)
    }

    #[test]
    fn grids() {
        let g = paper_grid();
        assert_eq!(g.len(), 12);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[11], 1e7);
        assert_eq!(CvPlan::default().len(), 1728);
        assert_eq!(coarse_grid(), vec![1e-3, 1e-1, 1e1, 1e3, 1e5]);
        assert_eq!(CvPlan::coarse().len(), 125);
        assert_eq!(CvPlan::default().base.outer_iters, CV_OUTER_ITERS);
    }

    #[test]
    fn plan_validation() {
        let mut plan = CvPlan::coarse();
        plan.lambda_w2 = vec![];
        assert!(plan.validate().is_err());
        plan.lambda_w2 = vec![0.0];
        assert!(plan.validate().is_err());
        plan.lambda_w2 = vec![1.0];
        assert!(plan.validate().is_ok());
    }

    #[test]
    fn parity_split_of_five() {
        let (_, schedule, signals) = scalar_setup(&[
            Some(1.0),
            None,
            Some(2.0),
            Some(3.0),
            None,
            Some(4.0),
            Some(5.0),
        ]);
        let (a, b) = split_readouts(&schedule, &signals).unwrap();
        // acquisition order 1..5 sits at frames 0, 2, 3, 5, 6
        assert_eq!(a.schedule.acquired(), vec![0, 3, 6]);
        assert_eq!(b.schedule.acquired(), vec![2, 5]);
        assert_eq!(a.schedule.n_frames(), 7);
        assert_eq!(a.signals.frame(3).unwrap()[0].re, 3.0);
        assert!(a.signals.frame(2).is_none());
    }

    #[test]
    fn split_of_two_and_too_few() {
        let (_, schedule, signals) = scalar_setup(&[Some(1.0), Some(2.0)]);
        let (a, b) = split_readouts(&schedule, &signals).unwrap();
        assert_eq!((a.schedule.n_acquired(), b.schedule.n_acquired()), (1, 1));
        let (_, schedule, signals) = scalar_setup(&[Some(1.0), None]);
        assert!(split_readouts(&schedule, &signals).is_err());
    }

    #[test]
    fn huge_penalty_predicts_zero() {
        // λx large enough that x = 0: the RMSE is the RMS of the withheld data.
        let (model, schedule, signals) =
            scalar_setup(&[Some(1.0), Some(2.0), Some(3.0), Some(4.0)]);
        let base = SolverConfig {
            rho1: 1.0,
            rho2: 1.0,
            mu: 1.0,
            outer_iters: 2000,
            ..Default::default()
        };
        let folds = CvFolds::new(&model, &schedule, &signals, 2.0).unwrap();
        let rmse = cv_rmse(&Regularization::new(1e3, 1e-3, 1e-3), &folds, &base).unwrap();
        // fold 1 withholds {2, 4}, fold 2 withholds {1, 3}; imaginary parts are zero.
        let expected = (((4.0f64 + 16.0) / 4.0).sqrt() + ((1.0f64 + 9.0) / 4.0).sqrt()) / 2.0;
        assert!((rmse - expected).abs() < 1e-6, "{rmse} vs {expected}");
    }

    #[test]
    fn constant_signal_is_predicted_exactly() {
        let (model, schedule, signals) = scalar_setup(&[Some(2.0); 6]);
        let base = SolverConfig {
            rho1: 1.0,
            rho2: 1.0,
            mu: 1.0,
            outer_iters: 2000,
            ..Default::default()
        };
        let folds = CvFolds::new(&model, &schedule, &signals, 2.0).unwrap();
        let rmse = cv_rmse(&Regularization::new(1e-9, 1e-9, 1.0), &folds, &base).unwrap();
        assert!(rmse < 1e-6, "{rmse}");
    }

    #[test]
    fn singleton_grid_and_tie_break() {
        let (model, schedule, signals) =
            scalar_setup(&[Some(1.0), Some(1.5), Some(0.5), Some(1.0)]);
        let mut plan = CvPlan::from_axis(vec![0.1]);
        plan.base.rho1 = 1.0;
        plan.base.mu = 1.0;
        plan.base.rho2 = 1.0;
        let result = grid_search(&plan, &model, &schedule, &signals).unwrap();
        assert_eq!(result.table.len(), 1);
        assert_eq!(
            result.best.regularization(),
            Regularization::new(0.1, 0.1, 0.1)
        );

        let tied = [
            CvEntry {
                lambda_x: 2.0,
                lambda_w1: 1.0,
                lambda_w2: 1.0,
                rmse: 0.5,
            },
            CvEntry {
                lambda_x: 1.0,
                lambda_w1: 3.0,
                lambda_w2: 1.0,
                rmse: 0.5,
            },
            CvEntry {
                lambda_x: 1.0,
                lambda_w1: 2.0,
                lambda_w2: 9.0,
                rmse: 0.5,
            },
            CvEntry {
                lambda_x: 0.1,
                lambda_w1: 0.1,
                lambda_w2: 0.1,
                rmse: 0.6,
            },
        ];
        let forward = select_best(&tied).unwrap();
        let mut reversed = tied;
        reversed.reverse();
        assert_eq!(forward, select_best(&reversed).unwrap());
        assert_eq!(forward.regularization(), Regularization::new(1.0, 2.0, 9.0));
    }

    #[test]
    fn table_csv_layout() {
        let r = GridSearchResult {
            best: CvEntry {
                lambda_x: 1.0,
                lambda_w1: 1.0,
                lambda_w2: 1.0,
                rmse: 0.25,
            },
            table: vec![CvEntry {
                lambda_x: 1.0,
                lambda_w1: 1.0,
                lambda_w2: 1.0,
                rmse: 0.25,
            }],
        };
        assert_eq!(
            r.table_csv(),
            "lambda_x,lambda_w1,lambda_w2,rmse\n1e0,1e0,1e0,2.5e-1\n"
        );
    }
}
