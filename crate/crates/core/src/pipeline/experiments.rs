//! Experiment runners. Each one sweeps a condition grid over a set of
//! independently trained seeds and returns an [`ExperimentReport`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector2, Vector3};
use rayon::prelude::*;

use super::{
    path_error, to_point, to_target, train_agent, uncontrolled, visual_predictions, Agent, Generator, TrainConfig,
};
use crate::aif::{corrected_visual_rollout, AifOptions, ControlTrace, Direction};
use crate::data::{transform_points, Dataset, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::pcrnn::{one_hot, LearningRates, PcrnnParams};
use crate::seeding::{normal_vector, rng, stream};

pub const PERTURBATION_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const SCALE_GRID: [f64; 10] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0];
pub const IMPAIRMENT_GRID: [f64; 6] = [0.0, 0.02, 0.04, 0.06, 0.08, 0.1];
pub const THRESHOLD_GRID: [f64; 5] = [3e-4, 1e-3, 3e-3, 1e-2, 3e-2];
pub const SANDBOX_ALPHA_GRID: [f64; 5] = [0.0, 0.025, 0.05, 0.1, 0.2];

/// First step that receives the motor perturbation (zero-based).
pub const PERTURBATION_ONSET: usize = 10;

pub fn rotation_grid() -> Vec<f64> {
    use std::f64::consts::PI;
    vec![-PI / 4.0, -PI / 6.0, -PI / 12.0, 0.0, PI / 12.0, PI / 6.0, PI / 4.0]
}

/// A dataset together with the agent trained on it for one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub cfg: TrainConfig,
    pub dataset: Dataset,
    pub agent: Agent,
    pub visual_curve: Vec<f64>,
    pub motor_curve: Vec<f64>,
}

impl SeedRun {
    pub fn train(dataset: Dataset, cfg: &TrainConfig) -> Result<Self> {
        let (agent, visual_curve, motor_curve) = train_agent(&dataset, cfg)?;
        Ok(Self {
            seed: cfg.seed,
            cfg: cfg.clone(),
            dataset,
            agent,
            visual_curve,
            motor_curve,
        })
    }

    /// Wraps an already trained agent.
    pub fn from_agent(agent: Agent, dataset: Dataset, cfg: &TrainConfig) -> Self {
        Self {
            seed: cfg.seed,
            cfg: cfg.clone(),
            dataset,
            agent,
            visual_curve: Vec::new(),
            motor_curve: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.dataset
            .test
            .first()
            .or(self.dataset.train.first())
            .map_or(0, Trajectory::len)
    }

    /// Visual prediction of each class, used as the motor goal.
    pub fn goals(&self) -> Result<Vec<Vec<Vector2<f64>>>> {
        visual_predictions(&self.agent.visual, self.steps())
    }
}

/// Trains one agent per seed. `dataset` builds the data for a seed.
pub fn train_seeds<F>(cfg: &TrainConfig, seeds: &[u64], dataset: F) -> Result<Vec<SeedRun>>
where
    F: Fn(u64) -> Result<Dataset> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..cfg.clone() };
            SeedRun::train(dataset(seed)?, &cfg)
        })
        .collect()
}

/// A 2-D path kept for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub condition: usize,
    pub seed: u64,
    pub label: usize,
    pub kind: String,
    pub points: Vec<Vector2<f64>>,
    /// Per-step flags, e.g. controller activations. Empty when unused.
    pub markers: Vec<bool>,
}

impl Trace {
    fn path(condition: usize, seed: u64, label: usize, kind: &str, points: Vec<Vector2<f64>>) -> Self {
        Self {
            condition,
            seed,
            label,
            kind: kind.to_owned(),
            points,
            markers: Vec::new(),
        }
    }

    fn control(condition: usize, seed: u64, label: usize, kind: &str, trace: &ControlTrace) -> Self {
        Self {
            markers: trace.steps.iter().map(|s| s.gate_active).collect(),
            ..Self::path(condition, seed, label, kind, trace.executed())
        }
    }
}

/// Per-condition, per-column, per-seed values of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub condition_name: String,
    pub conditions: Vec<f64>,
    pub columns: Vec<String>,
    pub seeds: Vec<u64>,
    /// `values[condition][column][seed]`.
    pub values: Vec<Vec<Vec<f64>>>,
    pub traces: Vec<Trace>,
}

impl ExperimentReport {
    fn from_values(
        name: &str,
        condition_name: &str,
        conditions: Vec<f64>,
        columns: &[&str],
        runs: &[SeedRun],
        values: Vec<Vec<Vec<f64>>>,
        traces: Vec<Trace>,
    ) -> Self {
        Self {
            name: name.to_owned(),
            condition_name: condition_name.to_owned(),
            conditions,
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            values,
            traces,
        }
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("report {} has no column {name:?}", self.name)))
    }

    pub fn condition_index(&self, value: f64) -> Option<usize> {
        self.conditions.iter().position(|&c| (c - value).abs() < 1e-12)
    }

    pub fn samples(&self, condition: usize, column: usize) -> &[f64] {
        &self.values[condition][column]
    }

    pub fn mean(&self, condition: usize, column: usize) -> f64 {
        mean(self.samples(condition, column))
    }

    /// Standard error of the mean over seeds (0 for a single seed).
    pub fn std_error(&self, condition: usize, column: usize) -> f64 {
        std_error(self.samples(condition, column))
    }

    /// Column means in condition order.
    pub fn means(&self, column: &str) -> Result<Vec<f64>> {
        let c = self.column(column)?;
        Ok((0..self.conditions.len()).map(|i| self.mean(i, c)).collect())
    }

    /// One row per condition: mean and standard error of every column.
    pub fn summary_csv(&self) -> String {
        let mut out = self.condition_name.clone();
        for c in &self.columns {
            let _ = write!(out, ",{c}_mean,{c}_se");
        }
        out.push('\n');
        for (i, cond) in self.conditions.iter().enumerate() {
            out.push_str(&cond.to_string());
            for c in 0..self.columns.len() {
                let _ = write!(out, ",{},{}", self.mean(i, c), self.std_error(i, c));
            }
            out.push('\n');
        }
        out
    }

    /// One row per (condition, seed).
    pub fn seeds_csv(&self) -> String {
        let mut out = format!("{},seed,{}\n", self.condition_name, self.columns.join(","));
        for (i, cond) in self.conditions.iter().enumerate() {
            for (s, seed) in self.seeds.iter().enumerate() {
                let _ = write!(out, "{cond},{seed}");
                for c in 0..self.columns.len() {
                    let _ = write!(out, ",{}", self.values[i][c][s]);
                }
                out.push('\n');
            }
        }
        out
    }

    /// Every kept trace as long-format rows.
    pub fn traces_csv(&self) -> String {
        let mut out = format!("{},seed,label,kind,t,x,y,marker\n", self.condition_name);
        for tr in &self.traces {
            let cond = self.conditions[tr.condition];
            for (t, p) in tr.points.iter().enumerate() {
                let marker = tr.markers.get(t).copied().unwrap_or(false) as u8;
                let _ = writeln!(out, "{cond},{},{},{},{t},{},{},{marker}", tr.seed, tr.label, tr.kind, p.x, p.y);
            }
        }
        out
    }

    /// Writes `<name>.csv`, `<name>_seeds.csv` and `<name>_traces.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (format!("{}.csv", self.name), self.summary_csv()),
            (format!("{}_seeds.csv", self.name), self.seeds_csv()),
            (format!("{}_traces.csv", self.name), self.traces_csv()),
        ];
        let mut written = Vec::new();
        for (file, text) in files {
            let path = dir.join(file);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    let k = xs.len();
    if k < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

type Cell = (Vec<f64>, Vec<Trace>);

/// Evaluates `cell` for every (condition, seed) pair in parallel and
/// assembles the report in grid order.
fn sweep<F>(
    name: &str,
    condition_name: &str,
    conditions: &[f64],
    columns: &[&str],
    runs: &[SeedRun],
    cell: F,
) -> Result<ExperimentReport>
where
    F: Fn(usize, f64, &SeedRun) -> Result<Cell> + Sync,
{
    if runs.is_empty() {
        return Err(Error::Config(format!("{name}: no seeds to run")));
    }
    let tasks: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..runs.len()).map(move |s| (c, s)))
        .collect();
    let cells = tasks
        .par_iter()
        .map(|&(c, s)| cell(c, conditions[c], &runs[s]))
        .collect::<Result<Vec<Cell>>>()?;
    let mut values = vec![vec![vec![0.0; runs.len()]; columns.len()]; conditions.len()];
    let mut traces = Vec::new();
    for (&(c, s), (row, kept)) in tasks.iter().zip(cells) {
        check_dim("report row", columns.len(), row.len())?;
        for (k, v) in row.into_iter().enumerate() {
            values[c][k][s] = v;
        }
        traces.extend(kept);
    }
    Ok(ExperimentReport::from_values(name, condition_name, conditions.to_vec(), columns, runs, values, traces))
}

fn class_tests(ds: &Dataset, label: usize) -> Result<Vec<&Trajectory>> {
    let tests = ds.test_of_class(label);
    if tests.is_empty() {
        return Err(Error::Dataset(format!("class {} has no test trajectories", ds.class_names[label])));
    }
    Ok(tests)
}

/// Mean over classes of the mean path error to that class's test set.
fn error_vs_tests(paths: &[Vec<Vector2<f64>>], tests: &[Vec<&Trajectory>]) -> f64 {
    let per_class: Vec<f64> = paths
        .iter()
        .zip(tests)
        .map(|(path, ts)| mean(&ts.iter().map(|t| path_error(path, &t.points)).collect::<Vec<_>>()))
        .collect();
    mean(&per_class)
}

/// Rollout error of the visual generator before and after training, per class.
pub fn run_prediction(runs: &[SeedRun]) -> Result<ExperimentReport> {
    let p = common_p(runs)?;
    let conditions: Vec<f64> = (0..p).map(|l| l as f64).collect();
    sweep("prediction", "class", &conditions, &["untrained", "trained"], runs, |c, _, run| {
        let steps = run.steps();
        let untrained = Generator::init(2, p, run.cfg.tau_visual, &run.cfg, stream::VISUAL_INIT, stream::VISUAL_H0)?;
        let tests = class_tests(&run.dataset, c)?;
        let before = untrained.natural_2d(c, steps)?;
        let after = run.agent.visual.natural_2d(c, steps)?;
        let err = |path: &Vec<Vector2<f64>>| error_vs_tests(std::slice::from_ref(path), std::slice::from_ref(&tests));
        let row = vec![err(&before), err(&after)];
        let traces = vec![
            Trace::path(c, run.seed, c, "untrained", before),
            Trace::path(c, run.seed, c, "trained", after),
        ];
        Ok((row, traces))
    })
}

fn common_p(runs: &[SeedRun]) -> Result<usize> {
    let p = runs.first().map_or(0, |r| r.agent.p());
    if runs.iter().any(|r| r.agent.p() != p) {
        return Err(Error::Config("seeds disagree on the class count".into()));
    }
    Ok(p)
}

/// Classification by inference of the hidden causes: accuracy and mean
/// mass on the true class after each presentation.
pub fn run_classification(runs: &[SeedRun]) -> Result<ExperimentReport> {
    let presentations = runs.first().map_or(0, |r| r.cfg.presentations);
    let conditions: Vec<f64> = (1..=presentations).map(|k| k as f64).collect();
    // Inference is sequential over presentations, so compute every
    // presentation per seed once and slice the result per condition.
    let per_seed = runs
        .par_iter()
        .map(|run| {
            let visual = &run.agent.visual;
            let rates = LearningRates::prediction().with_inference(run.cfg.infer_alpha_h, run.cfg.infer_alpha_c);
            let mut correct = vec![0.0; presentations];
            let mut mass = vec![0.0; presentations];
            for traj in &run.dataset.test {
                let targets: Vec<DVector<f64>> = traj.points.iter().map(to_target).collect();
                let inf = visual.params.infer_causes(&visual.h0, &targets, presentations, &rates)?;
                for (k, c) in inf.history.iter().enumerate() {
                    correct[k] += (c.argmax().0 == traj.label) as u8 as f64;
                    mass[k] += c[traj.label];
                }
            }
            let k = run.dataset.test.len().max(1) as f64;
            Ok((correct.iter().map(|x| x / k).collect(), mass.iter().map(|x| x / k).collect()))
        })
        .collect::<Result<Vec<(Vec<f64>, Vec<f64>)>>>()?;
    let columns = ["accuracy", "true_mass"];
    let values = (0..presentations)
        .map(|k| {
            vec![
                per_seed.iter().map(|(acc, _)| acc[k]).collect(),
                per_seed.iter().map(|(_, mass)| mass[k]).collect(),
            ]
        })
        .collect();
    Ok(ExperimentReport::from_values("classification", "presentation", conditions, &columns, runs, values, Vec::new()))
}

/// Controlled and open-loop motor error against the visual goal, before
/// (condition 0) and after (condition 1) motor training.
pub fn run_motor_learning(runs: &[SeedRun]) -> Result<ExperimentReport> {
    sweep(
        "motor_learning",
        "trained",
        &[0.0, 1.0],
        &["controlled", "uncontrolled"],
        runs,
        |c, _, run| {
            let mut agent = run.agent.clone();
            if c == 0 {
                agent.motor = Generator::init(3, agent.p(), run.cfg.tau_motor, &run.cfg, stream::MOTOR_INIT, stream::MOTOR_H0)?;
            }
            let goals = run.goals()?;
            let (mut ctrl, mut open, mut traces) = (Vec::new(), Vec::new(), Vec::new());
            for (label, goal) in goals.iter().enumerate() {
                let runs = agent.motor_runs(label, goal, &run.cfg, None)?;
                ctrl.push(path_error(&runs.controlled.executed(), goal));
                open.push(path_error(&runs.uncontrolled.executed(), goal));
                traces.push(Trace::control(c, run.seed, label, "controlled", &runs.controlled));
                traces.push(Trace::control(c, run.seed, label, "uncontrolled", &runs.uncontrolled));
                traces.push(Trace::path(c, run.seed, label, "goal", goal.clone()));
            }
            Ok((vec![mean(&ctrl), mean(&open)], traces))
        },
    )
}

/// Constant offset per test trajectory, drawn from a standard normal.
/// Shared across perturbation levels so the grid uses common random numbers.
fn perturbation_directions(run: &SeedRun) -> Vec<Vector3<f64>> {
    let mut r = rng(run.seed, stream::PERTURBATION);
    run.dataset
        .test
        .iter()
        .map(|_| {
            let z = normal_vector(&mut r, 3, 1.0);
            Vector3::new(z[0], z[1], z[2])
        })
        .collect()
}

/// Constant motor perturbation of variance `sigma2` added from step
/// [`PERTURBATION_ONSET`] on.
pub fn perturbation_schedule(direction: &Vector3<f64>, sigma2: f64, steps: usize) -> Vec<Vector3<f64>> {
    let offset = direction * sigma2.sqrt();
    (0..steps)
        .map(|t| if t >= PERTURBATION_ONSET { offset } else { Vector3::zeros() })
        .collect()
}

pub fn run_perturbation(runs: &[SeedRun], grid: &[f64]) -> Result<ExperimentReport> {
    if let Some(bad) = grid.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::Config(format!("perturbation variance must be >= 0, got {bad}")));
    }
    sweep(
        "perturbation",
        "sigma2",
        grid,
        &["controlled", "uncontrolled"],
        runs,
        |c, sigma2, run| {
            let goals = run.goals()?;
            let dirs = perturbation_directions(run);
            let (mut ctrl, mut open, mut traces) = (Vec::new(), Vec::new(), Vec::new());
            let mut shown = vec![false; goals.len()];
            for (traj, dir) in run.dataset.test.iter().zip(&dirs) {
                let goal = &goals[traj.label];
                let schedule = perturbation_schedule(dir, sigma2, goal.len());
                let out = run.agent.motor_runs(traj.label, goal, &run.cfg, Some(&schedule))?;
                ctrl.push(path_error(&out.controlled.executed(), &traj.points));
                open.push(path_error(&out.uncontrolled.executed(), &traj.points));
                if !shown[traj.label] {
                    shown[traj.label] = true;
                    traces.push(Trace::control(c, run.seed, traj.label, "controlled", &out.controlled));
                    traces.push(Trace::control(c, run.seed, traj.label, "uncontrolled", &out.uncontrolled));
                    traces.push(Trace::path(c, run.seed, traj.label, "goal", goal.clone()));
                }
            }
            Ok((vec![mean(&ctrl), mean(&open)], traces))
        },
    )
}

/// Controlled and open-loop errors when the visual goal and the test
/// trajectories are transformed about their first point.
fn transformed_goal_experiment(
    name: &str,
    condition_name: &str,
    runs: &[SeedRun],
    grid: &[f64],
    transform: impl Fn(f64) -> (f64, f64) + Sync,
) -> Result<ExperimentReport> {
    sweep(name, condition_name, grid, &["controlled", "uncontrolled"], runs, |c, value, run| {
        let (scale, angle) = transform(value);
        if !(scale.is_finite() && scale > 0.0 && angle.is_finite()) {
            return Err(Error::Config(format!("{name}: invalid transform value {value}")));
        }
        let goals: Vec<Vec<Vector2<f64>>> = run.goals()?.iter().map(|g| transform_points(g, scale, angle)).collect();
        let (mut ctrl, mut open, mut traces) = (Vec::new(), Vec::new(), Vec::new());
        for (label, goal) in goals.iter().enumerate() {
            let tests: Vec<Vec<Vector2<f64>>> = class_tests(&run.dataset, label)?
                .iter()
                .map(|t| transform_points(&t.points, scale, angle))
                .collect();
            let out = run.agent.motor_runs(label, goal, &run.cfg, None)?;
            let err = |path: &[Vector2<f64>]| mean(&tests.iter().map(|t| path_error(path, t)).collect::<Vec<_>>());
            ctrl.push(err(&out.controlled.executed()));
            open.push(err(&out.uncontrolled.executed()));
            traces.push(Trace::control(c, run.seed, label, "controlled", &out.controlled));
            traces.push(Trace::control(c, run.seed, label, "uncontrolled", &out.uncontrolled));
            traces.push(Trace::path(c, run.seed, label, "goal", goal.clone()));
        }
        Ok((vec![mean(&ctrl), mean(&open)], traces))
    })
}

pub fn run_scaling(runs: &[SeedRun], grid: &[f64]) -> Result<ExperimentReport> {
    transformed_goal_experiment("scaling", "scale", runs, grid, |s| (s, 0.0))
}

/// Angles in radians, counterclockwise positive.
pub fn run_rotation(runs: &[SeedRun], grid: &[f64]) -> Result<ExperimentReport> {
    transformed_goal_experiment("rotation", "angle", runs, grid, |a| (1.0, a))
}

/// Multiplies every entry of the four weight matrices by an independent
/// draw from N(1, sigma2). The standard normal draws depend only on the
/// seed, so levels of a sweep share them.
pub fn impair_params(params: &PcrnnParams, sigma2: f64, seed: u64) -> Result<PcrnnParams> {
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::Config(format!("impairment variance must be >= 0, got {sigma2}")));
    }
    let sigma = sigma2.sqrt();
    let mut r = rng(seed, stream::IMPAIRMENT);
    let mut out = params.clone();
    for m in [&mut out.w_out, &mut out.w_p, &mut out.w_f, &mut out.w_c] {
        let (rows, cols) = m.shape();
        let z = crate::seeding::normal_matrix(&mut r, rows, cols, 1.0);
        m.zip_apply(&z, |w, z| *w *= 1.0 + sigma * z);
    }
    Ok(out)
}

/// Impairs the visual generator and lets the motor outcome correct it
/// through the motor-to-visual pathway.
pub fn run_impairment(runs: &[SeedRun], grid: &[f64]) -> Result<ExperimentReport> {
    sweep(
        "impairment",
        "sigma2",
        grid,
        &["corrected", "uncorrected", "motor"],
        runs,
        |c, sigma2, run| {
            let visual = &run.agent.visual;
            let impaired = Generator {
                params: impair_params(&visual.params, sigma2, run.seed)?,
                h0: visual.h0.clone(),
            };
            let steps = run.steps();
            let opts = AifOptions {
                direction: Direction::MotorToVisual,
                gate_threshold: None,
                ..run.cfg.aif
            };
            let rates = LearningRates::prediction().with_inference(run.cfg.visual.alpha_h, 0.0);
            let (off, off_rates) = uncontrolled(&run.cfg);
            let (mut fixed, mut broken, mut motor, mut traces) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for label in 0..run.agent.p() {
                let tests = class_tests(&run.dataset, label)?;
                let err = |path: &[Vector2<f64>]| mean(&tests.iter().map(|t| path_error(path, &t.points)).collect::<Vec<_>>());
                // The motor side runs open loop: it is the guide here.
                let motor_run = crate::aif::controlled_rollout(
                    &run.agent.motor.params,
                    &run.agent.motor.initial_state(label),
                    &vec![Vector2::zeros(); steps],
                    &run.agent.arm,
                    &off,
                    &off_rates,
                    None,
                )?;
                let commands: Vec<Vector3<f64>> = motor_run.steps.iter().map(|s| s.m).collect();
                let corrected = corrected_visual_rollout(
                    &impaired.params,
                    &impaired.initial_state(label),
                    &commands,
                    &run.agent.arm,
                    &opts,
                    &rates,
                )?;
                let uncorrected = impaired.natural_2d(label, steps)?;
                fixed.push(err(&corrected.predicted()));
                broken.push(err(&uncorrected));
                motor.push(err(&motor_run.executed()));
                traces.push(Trace::path(c, run.seed, label, "corrected", corrected.predicted()));
                traces.push(Trace::path(c, run.seed, label, "uncorrected", uncorrected));
                traces.push(Trace::path(c, run.seed, label, "motor", motor_run.executed()));
            }
            Ok((vec![mean(&fixed), mean(&broken), mean(&motor)], traces))
        },
    )
}

/// Gated control over a threshold sweep. `activations` counts gate openings
/// in the gated run itself; `pregate_activations` applies each threshold to
/// the same per-step errors of the open-loop run, so it is comparable
/// across thresholds step by step.
pub fn run_intermittent(runs: &[SeedRun], thresholds: &[f64]) -> Result<ExperimentReport> {
    if let Some(bad) = thresholds.iter().find(|t| t.is_nan() || **t < 0.0) {
        return Err(Error::Config(format!("gate threshold must be >= 0, got {bad}")));
    }
    sweep(
        "intermittent",
        "threshold",
        thresholds,
        &["activations", "pregate_activations", "steps", "error"],
        runs,
        |c, threshold, run| {
            let goals = run.goals()?;
            let cfg = TrainConfig {
                aif: AifOptions {
                    gate_threshold: Some(threshold),
                    ..run.cfg.aif
                },
                ..run.cfg.clone()
            };
            let (mut active, mut pregate, mut steps, mut errors, mut traces) = (0, 0, 0, Vec::new(), Vec::new());
            for (label, goal) in goals.iter().enumerate() {
                let out = run.agent.motor_runs(label, goal, &cfg, None)?;
                active += out.controlled.activations();
                pregate += pregate_activations(&out.uncontrolled, threshold);
                steps += out.controlled.len();
                errors.push(path_error(&out.controlled.executed(), goal));
                traces.push(Trace::control(c, run.seed, label, "gated", &out.controlled));
                traces.push(Trace::path(c, run.seed, label, "goal", goal.clone()));
            }
            Ok((vec![active as f64, pregate as f64, steps as f64, mean(&errors)], traces))
        },
    )
}

/// Steps of `trace` whose pre-correction error would open the gate.
pub fn pregate_activations(trace: &ControlTrace, threshold: f64) -> usize {
    trace
        .steps
        .iter()
        .filter(|s| crate::aif::gate_is_open(s.err2, Some(threshold)))
        .count()
}

/// Setup for the 2-D motor control experiment: the network output is the
/// controlled position itself and the goal is a constant point.
#[derive(Debug, Clone, PartialEq)]
pub struct SandboxConfig {
    pub n: usize,
    pub tau: f64,
    pub steps: usize,
    pub target: Vector2<f64>,
    /// Inference rate used while training towards the target.
    pub train_alpha_h: f64,
    pub lambda: f64,
    pub train_iterations: usize,
    pub perturb_step: usize,
    pub perturb_std: f64,
    pub h0_std: f64,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            n: 50,
            tau: 50.0,
            steps: 100,
            target: Vector2::new(1.0, 1.0),
            train_alpha_h: 0.2,
            lambda: 1e-3,
            train_iterations: 200,
            perturb_step: 20,
            perturb_std: 1.0,
            h0_std: 1.0,
        }
    }
}

/// A sandbox network with its initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Sandbox {
    pub net: Generator,
    pub cfg: SandboxConfig,
    /// Hidden-state kick applied at `perturb_step` in perturbed runs.
    pub kick: DVector<f64>,
}

impl Sandbox {
    pub fn new(cfg: &SandboxConfig, seed: u64) -> Result<Self> {
        if cfg.steps == 0 || cfg.perturb_step >= cfg.steps {
            return Err(Error::Config("sandbox needs perturb_step < steps".into()));
        }
        let mut r = rng(seed, stream::SANDBOX);
        let params = PcrnnParams::new(cfg.n, 1, 2, cfg.tau, &mut r)?;
        let h0 = normal_vector(&mut r, cfg.n, cfg.h0_std);
        let kick = normal_vector(&mut r, cfg.n, cfg.perturb_std);
        Ok(Self {
            net: Generator { params, h0 },
            cfg: cfg.clone(),
            kick,
        })
    }

    /// Runs towards the target with hidden-state inference rate `alpha_h`
    /// (0 gives the natural trajectory), optionally with the kick.
    pub fn rollout(&self, alpha_h: f64, perturbed: bool) -> Result<Vec<Vector2<f64>>> {
        let params = &self.net.params;
        let rates = LearningRates::prediction().with_inference(alpha_h, 0.0);
        let target = to_target(&self.cfg.target);
        let c = one_hot(1, 0);
        let mut post = self.net.h0.clone();
        let mut path = Vec::with_capacity(self.cfg.steps);
        for t in 0..self.cfg.steps {
            if perturbed && t == self.cfg.perturb_step {
                post += &self.kick;
            }
            let (h, x) = params.predict_step(&post, &c)?;
            path.push(to_point(&x));
            post = params.infer_step(&h, &x, &target, &post, &c, &rates, true)?.h_post;
        }
        Ok(path)
    }

    /// Online training with the constant target as supervision.
    pub fn train(&mut self) -> Result<Vec<f64>> {
        let rates = LearningRates::prediction()
            .with_inference(self.cfg.train_alpha_h, 0.0)
            .with_lambda(self.cfg.lambda);
        let targets = vec![to_target(&self.cfg.target); self.cfg.steps];
        let c = one_hot(1, 0);
        let mut curve = Vec::with_capacity(self.cfg.train_iterations);
        for it in 0..self.cfg.train_iterations {
            let loss = self.net.params.train_sequence(&self.net.h0, &c, &targets, &rates, true)?;
            super::check_finite(&self.net.params, it, loss)?;
            curve.push(loss);
        }
        Ok(curve)
    }

    pub fn final_distance(&self, path: &[Vector2<f64>]) -> f64 {
        path.last().map_or(f64::NAN, |p| (p - self.cfg.target).norm())
    }
}

/// Final distance to the target for each hidden-state rate: untrained,
/// trained, and trained with the mid-run perturbation.
pub fn run_sandbox(cfg: &SandboxConfig, seeds: &[u64], alphas: &[f64]) -> Result<ExperimentReport> {
    let boxes = seeds
        .par_iter()
        .map(|&seed| {
            let fresh = Sandbox::new(cfg, seed)?;
            let mut trained = fresh.clone();
            trained.train()?;
            Ok((seed, fresh, trained))
        })
        .collect::<Result<Vec<_>>>()?;
    let columns = ["untrained", "trained", "trained_perturbed"];
    let mut values = vec![vec![vec![0.0; seeds.len()]; columns.len()]; alphas.len()];
    let mut traces = Vec::new();
    for (s, (seed, fresh, trained)) in boxes.iter().enumerate() {
        for (c, &alpha_h) in alphas.iter().enumerate() {
            let paths = [
                fresh.rollout(alpha_h, false)?,
                trained.rollout(alpha_h, false)?,
                trained.rollout(alpha_h, true)?,
            ];
            for (k, path) in paths.into_iter().enumerate() {
                values[c][k][s] = fresh.final_distance(&path);
                traces.push(Trace::path(c, *seed, 0, columns[k], path));
            }
        }
    }
    Ok(ExperimentReport {
        seeds: seeds.to_vec(),
        ..ExperimentReport::from_values("sandbox", "alpha_h", alphas.to_vec(), &columns, &[], values, traces)
    })
}
