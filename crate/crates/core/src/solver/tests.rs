use nalgebra::DMatrix;
use num_complex::Complex64;

use super::*;
use crate::model::{
    AcquisitionGeometry, BaseSpectraSet, DftSign, ForwardModel, Frame, NormalMatrix, SamplePoint,
    SamplingSchedule, SignalSet,
};

/// One voxel, one substance, one readout sample: `A = a` (a real scalar).
fn scalar_problem(a: f64, ys: &[Option<f64>]) -> Problem {
    let geometry = AcquisitionGeometry::new(vec![1], 1, 1).unwrap();
    let base = BaseSpectraSet::new(
        vec!["s".into()],
        1,
        1,
        vec![Complex64::new(a, 0.0)],
        DftSign::Inverse,
    )
    .unwrap();
    let model = ForwardModel::new(geometry, base).unwrap();
    let frames = ys
        .iter()
        .map(|y| match y {
            Some(_) => Frame::Acquired(vec![SamplePoint::new(1, vec![1])]),
            None => Frame::Gap,
        })
        .collect();
    let schedule = SamplingSchedule::new(4.0, frames).unwrap();
    let signals = SignalSet::new(
        ys.iter()
            .map(|y| y.map(|v| vec![Complex64::new(v, 0.0)]))
            .collect(),
    );
    Problem::new(model, schedule, signals).unwrap()
}

#[test]
fn scalar_x_update_first_inner_step() {
    let normal = NormalMatrix::from_factor(DMatrix::from_element(1, 1, 1.0), 2.0).unwrap();
    let config = SolverConfig {
        rho1: 1.0,
        mu: 1.0,
        inner_iters: 1,
        ..Default::default()
    };
    let (mut x, mut alpha, mut beta) = ([0.0], [0.0], [0.0]);
    update_x_frame(
        FrameData::Acquired {
            back_projection: &[2.0],
            normal: &normal,
        },
        &[0.0],
        &[0.0],
        &mut x,
        &mut alpha,
        &mut beta,
        &config,
        &mut Vec::new(),
    )
    .unwrap();
    assert!((x[0] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn gap_frame_fixed_point() {
    let config = SolverConfig {
        rho1: 0.3,
        mu: 0.7,
        inner_iters: 5,
        ..Default::default()
    };
    let c = [1.25, -0.5];
    // z − u = c and α − β = c with β = 0.
    let (mut x, mut alpha, mut beta) = ([9.0, 9.0], c, [0.0, 0.0]);
    update_x_frame(
        FrameData::Gap,
        &c,
        &[0.0, 0.0],
        &mut x,
        &mut alpha,
        &mut beta,
        &config,
        &mut Vec::new(),
    )
    .unwrap();
    assert!((x[0] - c[0]).abs() < 1e-15 && (x[1] - c[1]).abs() < 1e-15);
}

#[test]
fn inner_loop_reaches_subproblem_kkt_point() {
    // 2x2 voxels, two substances, two sample points: solve the per-frame
    // subproblem ½‖y − Ax‖² + λx‖x‖₁ + ρ1/2‖x − v‖² by running the inner loop long.
    let geometry = AcquisitionGeometry::new(vec![2, 2], 2, 3).unwrap();
    let spectra: Vec<Complex64> = (0..12)
        .map(|i| Complex64::new((i as f64 * 0.7).sin() + 0.3, (i as f64 * 1.3).cos() * 0.2))
        .collect();
    let base = BaseSpectraSet::new(
        vec!["a".into(), "b".into()],
        2,
        3,
        spectra,
        DftSign::Inverse,
    )
    .unwrap();
    let model = ForwardModel::new(geometry, base).unwrap();
    let points = [
        SamplePoint::new(1, vec![1, 2]),
        SamplePoint::new(2, vec![2, 1]),
    ];
    let op = model.frame_operator(&points).unwrap();
    let y: Vec<Complex64> = (0..6)
        .map(|i| Complex64::new(1.0 - i as f64 * 0.3, 0.5))
        .collect();
    let aty = op.adjoint(&y).unwrap();

    let config = SolverConfig {
        lambda_x: 0.05,
        rho1: 0.2,
        mu: 0.5,
        inner_iters: 20_000,
        ..Default::default()
    };
    let normal = model
        .normal_matrix(&points, config.rho1 + config.mu)
        .unwrap();
    let v: Vec<f64> = (0..8).map(|i| (i as f64 - 3.5) * 0.1).collect();
    let (mut x, mut alpha, mut beta) = (vec![0.0; 8], vec![0.0; 8], vec![0.0; 8]);
    update_x_frame(
        FrameData::Acquired {
            back_projection: &aty,
            normal: &normal,
        },
        &v,
        &vec![0.0; 8],
        &mut x,
        &mut alpha,
        &mut beta,
        &config,
        &mut Vec::new(),
    )
    .unwrap();

    // Use α (exactly sparse) as the candidate; gradient of the smooth part at α.
    let pred = op.forward(&alpha).unwrap();
    let r: Vec<Complex64> = pred.iter().zip(&y).map(|(p, y)| p - y).collect();
    let g = op.adjoint(&r).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..8 {
        let smooth = g[i] + config.rho1 * (alpha[i] - v[i]);
        let res = if alpha[i] != 0.0 {
            (smooth + config.lambda_x * alpha[i].signum()).abs()
        } else {
            (smooth.abs() - config.lambda_x).max(0.0)
        };
        worst = worst.max(res);
    }
    assert!(worst < 1e-6, "subgradient residual {worst}");
    assert!(x.iter().zip(&alpha).all(|(x, a)| (x - a).abs() < 1e-8));
}

#[test]
fn zero_data_gives_zero() {
    let problem = scalar_problem(1.0, &[Some(0.0), Some(0.0), None, Some(0.0)]);
    let config = SolverConfig {
        lambda_x: 0.1,
        lambda_w1: 0.1,
        lambda_w2: 0.1,
        outer_iters: 20,
        ..Default::default()
    };
    let sol = solve(&problem, &config).unwrap();
    assert!(sol.x.values().iter().all(|&v| v == 0.0));
    assert_eq!(
        problem
            .objective(sol.x.values(), &config.regularization())
            .unwrap(),
        0.0
    );
}

#[test]
fn objective_worked_values() {
    let problem = scalar_problem(1.0, &[Some(1.0)]);
    assert_eq!(
        problem
            .objective(&[1.0], &Regularization::new(2.0, 0.0, 0.0))
            .unwrap(),
        2.0
    );

    let zero = scalar_problem(1.0, &[Some(0.0), Some(0.0)]);
    assert_eq!(
        zero.objective(&[0.0, 0.0], &Regularization::new(1.0, 1.0, 1.0))
            .unwrap(),
        0.0
    );

    // Constant in time: only data and ℓ1 terms remain; gap frames carry no ℓ1.
    let gapped = scalar_problem(1.0, &[Some(2.0), None, Some(2.0)]);
    let obj = gapped
        .objective(&[2.0, 2.0, 2.0], &Regularization::new(0.5, 3.0, 3.0))
        .unwrap();
    assert!((obj - 2.0).abs() < 1e-15);
}

#[test]
fn scalar_lasso_converges_to_soft_threshold() {
    // min ½(2 − x)² + 0.5|x| → x = 1.5
    let problem = scalar_problem(1.0, &[Some(2.0)]);
    let config = SolverConfig {
        lambda_x: 0.5,
        rho1: 1.0,
        mu: 1.0,
        rho2: 1.0,
        outer_iters: 200,
        ..Default::default()
    };
    let sol = solve(&problem, &config).unwrap();
    assert!(
        (sol.x.values()[0] - 1.5).abs() < 1e-8,
        "{}",
        sol.x.values()[0]
    );
}

#[test]
fn projection_constraint_holds_every_iteration() {
    let problem = scalar_problem(0.8, &[Some(1.0), Some(0.2), None, Some(-0.4), Some(1.5)]);
    let config = SolverConfig {
        lambda_x: 0.1,
        lambda_w1: 0.3,
        lambda_w2: 0.2,
        outer_iters: 1,
        ..Default::default()
    };
    let solver = AdmmSolver::new(&problem, config).unwrap();
    let mut state = solver.initial_state();
    let mut z_prev = Vec::new();
    for _ in 0..50 {
        solver.iterate(&mut state, &mut z_prev).unwrap();
        for m in 0..4 {
            assert_eq!(state.s[m], state.z[m + 1] - state.z[m]);
        }
    }
}

#[test]
fn deterministic_bitwise() {
    let problem = scalar_problem(0.8, &[Some(1.0), Some(0.2), None, Some(-0.4), Some(1.5)]);
    let config = SolverConfig {
        lambda_x: 0.1,
        lambda_w1: 0.3,
        lambda_w2: 0.2,
        outer_iters: 100,
        ..Default::default()
    };
    let a = solve(&problem, &config).unwrap();
    let b = solve(&problem, &config).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.residuals, b.residuals);
}

#[test]
fn divergence_is_reported() {
    let problem = scalar_problem(1.0, &[Some(1.0), Some(1.0)]);
    let solver = AdmmSolver::new(
        &problem,
        SolverConfig {
            outer_iters: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let mut state = solver.initial_state();
    state.z[1] = f64::NAN;
    match solver.run_from(state) {
        Err(crate::Error::Divergence { iteration, .. }) => assert_eq!(iteration, 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn config_validation() {
    let problem = scalar_problem(1.0, &[Some(1.0)]);
    for bad in [
        SolverConfig {
            rho1: 0.0,
            ..Default::default()
        },
        SolverConfig {
            mu: -1.0,
            ..Default::default()
        },
        SolverConfig {
            lambda_x: -1.0,
            ..Default::default()
        },
        SolverConfig {
            outer_iters: 0,
            ..Default::default()
        },
        SolverConfig {
            rel_tol: Some(0.0),
            ..Default::default()
        },
    ] {
        assert!(solve(&problem, &bad).is_err());
    }
}

#[test]
fn relative_tolerance_stops_early() {
    let problem = scalar_problem(1.0, &[Some(2.0), Some(2.0)]);
    let config = SolverConfig {
        rho1: 1.0,
        mu: 1.0,
        rho2: 1.0,
        outer_iters: 10_000,
        rel_tol: Some(1e-6),
        ..Default::default()
    };
    let sol = solve(&problem, &config).unwrap();
    assert!(sol.residuals.records.len() < 10_000);
}

#[test]
fn residual_csv_layout() {
    let log = ResidualLog {
        records: vec![ResidualRecord {
            iteration: 1,
            primal: 2.0,
            z_change: 4.0,
        }],
        n_entries: 4,
    };
    assert_eq!(
        log.to_csv(),
        "iteration,rms_x_minus_z,rms_z_delta\n1,1e0,2e0\n"
    );
}
