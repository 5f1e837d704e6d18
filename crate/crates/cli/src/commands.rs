use std::path::{Path, PathBuf};

use mrsi_cs::evaluate::{evaluate, profiles_csv, snapshot_pgm, substance_max};
use mrsi_cs::model::{
    BaseSpectraSet, ForwardModel, SamplingSchedule, SignalSet, SubstanceDistribution,
};
use mrsi_cs::phantom::{acquire, make_base_spectra, make_phantom};
use mrsi_cs::sampling::build_schedule;
use mrsi_cs::selection::{coarse_grid, grid_search, paper_grid, CvPlan, CV_OUTER_ITERS};
use mrsi_cs::solver::{solve, Problem, SolverConfig};
use mrsi_cs::tensor::Tensor;
use serde_json::json;

use crate::config::{DatasetInfo, ExperimentConfig};
use crate::failure::Failure;
use crate::manifest::Recorder;

pub const TRUTH: &str = "truth.mrst";
pub const BASE: &str = "base_spectra.mrst";
pub const DATASET: &str = "dataset.json";
pub const SCHEDULE: &str = "schedule.json";
pub const SIGNALS: &str = "signals.mrst";
pub const RECON: &str = "recon.mrst";
pub const RESIDUALS: &str = "residuals.csv";
pub const CV_TABLE: &str = "cv_table.csv";
pub const CV_SELECTED: &str = "cv_selected.json";
pub const METRICS: &str = "metrics.json";
pub const PROFILES: &str = "profiles.csv";

/// Options shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct SolverFlags {
    pub iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub lambda_x: Option<f64>,
    pub lambda_w1: Option<f64>,
    pub lambda_w2: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct EvaluateFlags {
    pub recon: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub frames: Vec<usize>,
    pub upsample: Option<usize>,
}

fn load_config(
    common: &Common,
    rec: &mut Recorder,
    required: bool,
) -> Result<ExperimentConfig, Failure> {
    match &common.config {
        Some(path) => {
            let (cfg, bytes) = ExperimentConfig::load(path)?;
            rec.config(path, &bytes);
            Ok(cfg)
        }
        None if required => Err(Failure::config("--config is required for this command")),
        None => Ok(ExperimentConfig::default()),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(mrsi_cs::Error::from)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn read_dataset(rec: &mut Recorder, dir: &Path) -> Result<DatasetInfo, Failure> {
    let path = dir.join(DATASET);
    let bytes = rec.read(&path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Failure::from(mrsi_cs::Error::from(e)).context(path.display()))
}

fn read_tensor(rec: &mut Recorder, path: &Path) -> Result<Tensor, Failure> {
    let bytes = rec.read(path)?;
    Tensor::decode(&bytes).map_err(|e| Failure::from(e).context(path.display()))
}

fn read_schedule(rec: &mut Recorder, dir: &Path) -> Result<SamplingSchedule, Failure> {
    let path = dir.join(SCHEDULE);
    let bytes = rec.read(&path)?;
    let text = String::from_utf8_lossy(&bytes);
    SamplingSchedule::from_json(&text).map_err(|e| Failure::from(e).context(path.display()))
}

fn read_model(rec: &mut Recorder, dir: &Path, info: &DatasetInfo) -> Result<ForwardModel, Failure> {
    let base = BaseSpectraSet::from_tensor(
        read_tensor(rec, &dir.join(BASE))?,
        Some(info.labels.clone()),
        info.sign(),
    )?;
    Ok(ForwardModel::new(info.geometry.clone(), base)?)
}

/// Reads dataset, base spectra, schedule and signals from the output directory.
fn read_problem(rec: &mut Recorder, dir: &Path) -> Result<(DatasetInfo, Problem), Failure> {
    let info = read_dataset(rec, dir)?;
    let model = read_model(rec, dir, &info)?;
    let schedule = read_schedule(rec, dir)?;
    let signals = SignalSet::from_tensor(
        read_tensor(rec, &dir.join(SIGNALS))?,
        &schedule,
        info.geometry.n_ro(),
    )?;
    Ok((info, Problem::new(model, schedule, signals)?))
}

/// λs chosen by an earlier `cv` run in the same directory.
#[derive(Clone, Copy, Debug, Default, serde::Deserialize)]
struct Selected {
    lambda_x: Option<f64>,
    lambda_w1: Option<f64>,
    lambda_w2: Option<f64>,
}

fn read_selected(rec: &mut Recorder, dir: &Path) -> Result<Selected, Failure> {
    let path = dir.join(CV_SELECTED);
    if !path.exists() {
        return Ok(Selected::default());
    }
    let bytes = rec.read(&path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Failure::from(mrsi_cs::Error::from(e)).context(path.display()))
}

/// Flags win over the config, which wins over `cv_selected.json`.
fn solver_config(
    cfg: &ExperimentConfig,
    flags: &SolverFlags,
    selected: Selected,
) -> Result<SolverConfig, Failure> {
    let section = cfg.solver.clone().unwrap_or_default();
    let mut c = SolverConfig::default();
    let pick = |flag: Option<f64>, conf: Option<f64>, cv: Option<f64>, name: &str| {
        flag.or(conf).or(cv).ok_or_else(|| {
            Failure::config(format!(
                "solver.{name}: missing (set it in the config, pass --{}, or run `cv` first)",
                name.replace('_', "-")
            ))
        })
    };
    c.lambda_x = pick(
        flags.lambda_x,
        section.lambda_x,
        selected.lambda_x,
        "lambda_x",
    )?;
    c.lambda_w1 = pick(
        flags.lambda_w1,
        section.lambda_w1,
        selected.lambda_w1,
        "lambda_w1",
    )?;
    c.lambda_w2 = pick(
        flags.lambda_w2,
        section.lambda_w2,
        selected.lambda_w2,
        "lambda_w2",
    )?;
    if let Some(v) = section.rho1 {
        c.rho1 = v;
    }
    if let Some(v) = section.rho2 {
        c.rho2 = v;
    }
    if let Some(v) = section.mu {
        c.mu = v;
    }
    c.rel_tol = section.rel_tol;
    c.outer_iters = flags.iters.or(section.outer_iters).unwrap_or(c.outer_iters);
    c.inner_iters = flags
        .inner_iters
        .or(section.inner_iters)
        .unwrap_or(c.inner_iters);
    c.validate()?;
    Ok(c)
}

pub fn phantom(common: &Common) -> Result<serde_json::Value, Failure> {
    let mut rec = Recorder::new("phantom", &common.out)?;
    let cfg = load_config(common, &mut rec, true)?;
    let mut config = cfg.phantom()?.clone();
    if let Some(seed) = common.seed {
        config.rng_seed = seed;
    }
    rec.seed("rng_seed", config.rng_seed);
    rec.settings(&config);

    rec.stage("synthesize");
    let truth = make_phantom(&config)?;
    let base = make_base_spectra(&config)?;
    let info = DatasetInfo {
        geometry: config.geometry.clone(),
        labels: config.labels(),
        frames: config.frames,
    };

    rec.stage("write");
    rec.write(TRUTH, &truth.to_tensor().encode())?;
    rec.write(BASE, &base.to_tensor().encode())?;
    rec.write(DATASET, &to_json(&info)?)?;
    rec.finish()?;
    Ok(json!({
        "command": "phantom",
        "spatial_dims": info.geometry.spatial_dims,
        "substances": info.labels,
        "frames": info.frames,
    }))
}

pub fn design(common: &Common) -> Result<serde_json::Value, Failure> {
    let mut rec = Recorder::new("design", &common.out)?;
    let cfg = load_config(common, &mut rec, true)?;
    let geometry = cfg.geometry()?;
    let sampler = cfg.sampler()?.clone();
    rec.settings(json!({ "geometry": geometry, "sampler": sampler }));

    rec.stage("sobol");
    let schedule = build_schedule(&sampler, &geometry)?;
    rec.stage("write");
    let mut text = schedule.to_json()?;
    text.push('\n');
    rec.write(SCHEDULE, text.as_bytes())?;
    rec.finish()?;
    Ok(json!({
        "command": "design",
        "frames": schedule.n_frames(),
        "acquired": schedule.n_acquired(),
    }))
}

pub fn acquire_cmd(common: &Common) -> Result<serde_json::Value, Failure> {
    let mut rec = Recorder::new("acquire", &common.out)?;
    let cfg = load_config(common, &mut rec, false)?;
    let (sigma, config_seed) = cfg
        .phantom
        .as_ref()
        .map(|p| (p.noise_sigma, p.rng_seed))
        .unwrap_or((0.0, 0));
    let seed = common.seed.unwrap_or(config_seed);
    rec.seed("noise", seed);
    rec.settings(json!({ "noise_sigma": sigma }));

    rec.stage("read");
    let dir = common.out.clone();
    let info = read_dataset(&mut rec, &dir)?;
    let model = read_model(&mut rec, &dir, &info)?;
    let schedule = read_schedule(&mut rec, &dir)?;
    let truth = SubstanceDistribution::from_tensor(read_tensor(&mut rec, &dir.join(TRUTH))?)?;

    rec.stage("acquire");
    let signals = acquire(&truth, &model, &schedule, sigma, seed)?;
    rec.stage("write");
    rec.write(
        SIGNALS,
        &signals.to_tensor(&schedule, info.geometry.n_ro())?.encode(),
    )?;
    rec.finish()?;
    Ok(json!({
        "command": "acquire",
        "acquired": schedule.n_acquired(),
        "noise_sigma": sigma,
        "seed": seed,
    }))
}

pub fn reconstruct(common: &Common, flags: &SolverFlags) -> Result<serde_json::Value, Failure> {
    let mut rec = Recorder::new("reconstruct", &common.out)?;
    let cfg = load_config(common, &mut rec, false)?;
    let dir = common.out.clone();
    let selected = read_selected(&mut rec, &dir)?;
    let config = solver_config(&cfg, flags, selected)?;
    rec.settings(&config);

    rec.stage("read");
    let (_, problem) = read_problem(&mut rec, &dir)?;

    rec.stage("solve");
    let solution = solve(&problem, &config)?;
    let objective = problem.objective(solution.x.values(), &config.regularization())?;

    rec.stage("write");
    rec.write(RECON, &solution.x.to_tensor().encode())?;
    rec.write(RESIDUALS, solution.residuals.to_csv().as_bytes())?;
    rec.finish()?;
    let last = solution.residuals.records.last();
    Ok(json!({
        "command": "reconstruct",
        "iterations": solution.state.iteration,
        "objective": objective,
        "final_primal_residual": last.map(|r| r.primal),
    }))
}

pub fn cv(common: &Common, flags: &SolverFlags, paper: bool) -> Result<serde_json::Value, Failure> {
    let mut rec = Recorder::new("cv", &common.out)?;
    let cfg = load_config(common, &mut rec, false)?;
    let section = cfg.cv.clone().unwrap_or_default();
    let axis = if paper {
        paper_grid()
    } else {
        section.grid.clone().unwrap_or_else(coarse_grid)
    };
    let mut plan = CvPlan::from_axis(axis.clone());
    if !paper {
        plan.lambda_x = section.lambda_x.clone().unwrap_or_else(|| axis.clone());
        plan.lambda_w1 = section.lambda_w1.clone().unwrap_or_else(|| axis.clone());
        plan.lambda_w2 = section.lambda_w2.clone().unwrap_or(axis);
    }
    // λs come from the grid; placeholders keep the base config valid.
    let base_flags = SolverFlags {
        lambda_x: Some(1.0),
        lambda_w1: Some(1.0),
        lambda_w2: Some(1.0),
        iters: Some(
            flags
                .iters
                .or(section.outer_iters)
                .unwrap_or(CV_OUTER_ITERS),
        ),
        inner_iters: flags.inner_iters,
    };
    plan.base = solver_config(&cfg, &base_flags, Selected::default())?;
    plan.base.record_residuals = false;
    plan.validate()?;
    rec.settings(&plan);

    rec.stage("read");
    let dir = common.out.clone();
    let (_, problem) = read_problem(&mut rec, &dir)?;

    rec.stage("grid_search");
    log::info!(
        "cv: {} combinations, {} outer iterations each",
        plan.len(),
        plan.base.outer_iters
    );
    let result = grid_search(
        &plan,
        problem.model(),
        problem.schedule(),
        problem.signals(),
    )?;

    rec.stage("write");
    rec.write(CV_TABLE, result.table_csv().as_bytes())?;
    let selected = json!({
        "lambda_x": result.best.lambda_x,
        "lambda_w1": result.best.lambda_w1,
        "lambda_w2": result.best.lambda_w2,
        "rmse": result.best.rmse,
        "combinations": result.table.len(),
    });
    rec.write(CV_SELECTED, &to_json(&selected)?)?;
    rec.finish()?;
    Ok(json!({ "command": "cv", "selected": selected }))
}

pub fn evaluate_cmd(common: &Common, flags: &EvaluateFlags) -> Result<serde_json::Value, Failure> {
    let mut rec = Recorder::new("evaluate", &common.out)?;
    let cfg = load_config(common, &mut rec, false)?;
    let section = cfg.evaluate.clone().unwrap_or_default();

    rec.stage("read");
    let dir = common.out.clone();
    let info = read_dataset(&mut rec, &dir)?;
    let recon_path = flags.recon.clone().unwrap_or_else(|| dir.join(RECON));
    let truth_path = flags.truth.clone().unwrap_or_else(|| dir.join(TRUTH));
    let recon = SubstanceDistribution::from_tensor(read_tensor(&mut rec, &recon_path)?)?;
    let truth = SubstanceDistribution::from_tensor(read_tensor(&mut rec, &truth_path)?)?;

    let upsample = flags.upsample.or(section.upsample).unwrap_or(1);
    let mut frames = if !flags.frames.is_empty() {
        flags.frames.clone()
    } else {
        section.snapshot_frames.clone()
    };
    if frames.is_empty() {
        let last = recon.n_frames().saturating_sub(1);
        frames = vec![0, last / 2, last];
        frames.dedup();
    }
    rec.settings(json!({ "upsample": upsample, "snapshot_frames": frames }));

    rec.stage("metrics");
    let metrics = evaluate(&recon, &truth, &info.labels)?;
    let profiles = profiles_csv(&recon, &truth, &info.labels, info.geometry.frame_interval_s)?;

    rec.stage("write");
    rec.write(METRICS, &to_json(&metrics)?)?;
    rec.write(PROFILES, profiles.as_bytes())?;
    for (j, label) in info.labels.iter().enumerate() {
        let scale = substance_max(&recon, j);
        for &m in &frames {
            let image = snapshot_pgm(&recon, j, m, scale, upsample)?;
            rec.write(&format!("snapshots/{label}_m{m:05}.pgm"), &image)?;
        }
    }
    rec.finish()?;
    Ok(json!({ "command": "evaluate", "metrics": metrics }))
}
