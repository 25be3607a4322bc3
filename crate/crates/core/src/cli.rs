//! Command-line verbs. Every run writes `manifest_<verb>.toml` next to its
//! artifacts: the resolved configuration, the seed, and content hashes of
//! every input file, enough to repeat the run exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::baselines::{self, class_targets, BaselineBudget, CapacityPlan, RnnFm};
use crate::data::{load_csv_dir, split, synth_letters, Dataset, Trajectory, DEFAULT_LENGTH};
use crate::error::{check_dim, Error, Result};
use crate::pipeline::experiments::{self as exp, ExperimentReport, SandboxConfig, SeedRun};
use crate::pipeline::{
    continue_motor, eval_reconstruction, path_error, train_visual, visual_predictions, Agent, Generator, TrainConfig,
};
use crate::plot;
use crate::seeding::stream;

pub const OUT_ENV: &str = "VISUOMOTOR_OUT";

#[derive(Debug, Parser)]
#[command(name = "visuomotor", version, about = "Predictive-coding visuomotor trajectory generation")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Output root.
    #[arg(long, global = true, env = OUT_ENV, default_value = "runs")]
    pub out: PathBuf,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Read raw trajectory CSVs, resample, scale and split them.
    Ingest(IngestArgs),
    /// Generate the synthetic letter dataset.
    Synth(SynthArgs),
    /// Train the visual generator; the motor network is left at its init.
    TrainVisual(DataArgs),
    /// Train the motor generator of an agent by active inference.
    TrainMotor(AgentArgs),
    /// Reconstruction and classification errors of an agent.
    Eval(EvalArgs),
    /// Run one experiment sweep over seeds.
    Experiment(ExperimentArgs),
    /// Heatmaps, trajectories and arm poses of an agent.
    Plot(AgentArgs),
    /// Train a comparison model on the class means.
    TrainBaseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of raw `<class>_<id>.csv` files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 20)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = DEFAULT_LENGTH)]
    pub length: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Trajectories per class, split evenly into train and test.
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory (default `<out>/data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgentArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Agent directory (default `<out>/agent`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub agent: AgentArgs,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Prediction,
    Classification,
    Motor,
    Perturbation,
    Scaling,
    Rotation,
    Impairment,
    Intermittent,
    Sandbox,
    Capacity,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub name: ExperimentName,
    /// Use this trained agent instead of training one per seed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset for `--checkpoint` or for every seed (default: synthetic per seed).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    /// Condition grid, replacing the default sweep.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    /// MTRNN sizes in the capacity sweep.
    #[arg(long, value_delimiter = ',', default_value = "50,100")]
    pub mtrnn_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineModel {
    Mtrnn,
    RnnFm,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = BaselineModel::Mtrnn)]
    pub model: BaselineModel,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long)]
    pub babbling: Option<usize>,
    #[arg(long)]
    pub imitation: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

/// What a verb did: a one-line summary and the files it wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
    /// Configuration actually used, when a checkpoint overrides geometry.
    pub config: Option<TrainConfig>,
}

/// Configuration plus the keys set explicitly by file or override.
struct Resolved {
    cfg: TrainConfig,
    explicit: Vec<String>,
    inputs: Vec<PathBuf>,
}

fn resolve_config(cli: &Cli) -> Result<Resolved> {
    let mut explicit = Vec::new();
    let mut inputs = Vec::new();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            explicit.extend(
                text.lines()
                    .filter_map(|l| l.split('#').next()?.split_once('='))
                    .map(|(k, _)| k.trim().to_owned()),
            );
            inputs.push(path.clone());
            TrainConfig::load(path)?
        }
        None => TrainConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
        explicit.extend(o.split_once('=').map(|(k, _)| k.trim().to_owned()));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(Resolved { cfg, explicit, inputs })
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let res = resolve_config(cli)?;
    let mut inputs = Inputs::default();
    for path in &res.inputs {
        inputs.add(path)?;
    }
    let out = cli.out.clone();
    let (verb, mut outcome) = match &cli.verb {
        Verb::Ingest(a) => ("ingest", ingest(a, &res.cfg, &out, &mut inputs)?),
        Verb::Synth(a) => ("synth", synth(a, &res.cfg, &out)?),
        Verb::TrainVisual(a) => ("train-visual", cmd_train_visual(a, &res.cfg, &out, &mut inputs)?),
        Verb::TrainMotor(a) => ("train-motor", cmd_train_motor(a, &res, &out, &mut inputs)?),
        Verb::Eval(a) => ("eval", cmd_eval(a, &res, &out, &mut inputs)?),
        Verb::Experiment(a) => ("experiment", cmd_experiment(a, &res, &out, &mut inputs)?),
        Verb::Plot(a) => ("plot", cmd_plot(a, &res, &out, &mut inputs)?),
        Verb::TrainBaseline(a) => ("train-baseline", cmd_baseline(a, &res.cfg, &out, &mut inputs)?),
    };
    let used = outcome.config.clone().unwrap_or_else(|| res.cfg.clone());
    let manifest = write_manifest(&out, verb, &used, &inputs)?;
    outcome.artifacts.push(manifest);
    Ok(outcome)
}

/// Parses `args`, runs the verb, prints the summary, and returns the exit
/// code: 0 ok, 2 usage, 3 data or checkpoint, 4 numeric divergence.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(o) => {
            let paths: Vec<String> = o.artifacts.iter().map(|p| p.display().to_string()).collect();
            let shown = if paths.len() > 4 {
                format!("{} ... ({} files)", paths[..3].join(", "), paths.len())
            } else {
                paths.join(", ")
            };
            println!("{} -> {shown}", o.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

fn data_dir(arg: &Option<PathBuf>, out: &Path) -> PathBuf {
    arg.clone().unwrap_or_else(|| out.join("data"))
}

fn agent_dir(arg: &Option<PathBuf>, out: &Path) -> PathBuf {
    arg.clone().unwrap_or_else(|| out.join("agent"))
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("iteration,error\n");
    for (i, v) in curve.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    out
}

fn ingest(a: &IngestArgs, cfg: &TrainConfig, out: &Path, inputs: &mut Inputs) -> Result<Outcome> {
    let raws = load_csv_dir(&a.input)?;
    if raws.is_empty() {
        return Err(Error::Dataset(format!("{}: no trajectory CSVs", a.input.display())));
    }
    inputs.add(&a.input)?;
    let ds = split(&raws, a.train_per_class, a.test_per_class, a.length, cfg.seed)?;
    save_dataset(&ds, out)
}

fn synth(a: &SynthArgs, cfg: &TrainConfig, out: &Path) -> Result<Outcome> {
    save_dataset(&synth_letters(a.classes, a.per_class, cfg.seed)?, out)
}

fn save_dataset(ds: &Dataset, out: &Path) -> Result<Outcome> {
    let dir = out.join("data");
    let mut artifacts = ds.save_dir(&dir)?;
    artifacts.insert(0, dir.join("manifest.toml"));
    Ok(Outcome {
        config: None,
        summary: format!(
            "{} classes, {} train + {} test trajectories, scale {:.4}",
            ds.p(),
            ds.train.len(),
            ds.test.len(),
            ds.scale
        ),
        artifacts,
    })
}

fn load_data(dir: &Path, inputs: &mut Inputs) -> Result<Dataset> {
    let ds = Dataset::load_dir(dir)?;
    inputs.add(dir)?;
    Ok(ds)
}

fn steps_of(ds: &Dataset) -> usize {
    ds.train.first().or(ds.test.first()).map_or(0, Trajectory::len)
}

fn cmd_train_visual(a: &DataArgs, cfg: &TrainConfig, out: &Path, inputs: &mut Inputs) -> Result<Outcome> {
    let ds = load_data(&data_dir(&a.data, out), inputs)?;
    let (visual, curve) = train_visual(&ds, cfg)?;
    let motor = Generator::init(3, ds.p(), cfg.tau_motor, cfg, stream::MOTOR_INIT, stream::MOTOR_H0)?;
    let agent = Agent {
        visual,
        motor,
        arm: cfg.arm,
        class_names: ds.class_names.clone(),
        scale: ds.scale,
    };
    let dir = out.join("agent");
    agent.save(&dir)?;
    let err = eval_reconstruction(&visual_predictions(&agent.visual, steps_of(&ds))?, &ds.train)?;
    Ok(Outcome {
        config: None,
        summary: format!(
            "visual error {:.4} -> {:.4} over {} iterations; rollout train error {err:.4}",
            curve.first().copied().unwrap_or(f64::NAN),
            curve.last().copied().unwrap_or(f64::NAN),
            curve.len()
        ),
        artifacts: vec![dir, write(out.join("visual_curve.csv"), &curve_csv(&curve))?],
    })
}

/// Loads an agent and refuses configurations that contradict it.
fn load_agent(arg: &Option<PathBuf>, res: &Resolved, out: &Path, inputs: &mut Inputs) -> Result<Agent> {
    let dir = agent_dir(arg, out);
    let agent = Agent::load(&dir)?;
    inputs.add(&dir)?;
    let has = |k: &str| res.explicit.iter().any(|e| e == k);
    if has("n") {
        check_dim("hidden size (checkpoint vs config)", agent.visual.params.n, res.cfg.n)?;
    }
    if has("d") {
        check_dim("factor dimension (checkpoint vs config)", agent.visual.params.d, res.cfg.factor_dim())?;
    }
    for (key, net, want) in [
        ("tau_v", &agent.visual, res.cfg.tau_visual),
        ("tau_m", &agent.motor, res.cfg.tau_motor),
        ("tau", &agent.visual, res.cfg.tau_visual),
    ] {
        if has(key) && net.params.tau != want {
            return Err(Error::Config(format!(
                "{key} = {want} conflicts with the checkpoint's {}",
                net.params.tau
            )));
        }
    }
    Ok(agent)
}

fn check_classes(agent: &Agent, ds: &Dataset) -> Result<()> {
    check_dim("class count (checkpoint vs data)", agent.p(), ds.p())?;
    if agent.class_names != ds.class_names {
        return Err(Error::Dataset(format!(
            "checkpoint classes {:?} differ from data classes {:?}",
            agent.class_names, ds.class_names
        )));
    }
    Ok(())
}

/// Runtime config taking its geometry from the agent.
fn agent_cfg(agent: &Agent, cfg: &TrainConfig) -> TrainConfig {
    TrainConfig {
        n: agent.visual.params.n,
        d: Some(agent.visual.params.d),
        tau_visual: agent.visual.params.tau,
        tau_motor: agent.motor.params.tau,
        arm: agent.arm,
        ..cfg.clone()
    }
}

fn cmd_train_motor(a: &AgentArgs, res: &Resolved, out: &Path, inputs: &mut Inputs) -> Result<Outcome> {
    let agent = load_agent(&a.checkpoint, res, out, inputs)?;
    let ds = load_data(&data_dir(&a.data.data, out), inputs)?;
    check_classes(&agent, &ds)?;
    let cfg = agent_cfg(&agent, &res.cfg);
    let fresh = Generator::init(3, agent.p(), cfg.tau_motor, &cfg, stream::MOTOR_INIT, stream::MOTOR_H0)?;
    let (motor, curve) = continue_motor(fresh, &agent.visual, &cfg, steps_of(&ds), cfg.motor_iterations)?;
    let agent = Agent { motor, ..agent };
    let dir = out.join("agent");
    agent.save(&dir)?;
    Ok(Outcome {
        config: Some(cfg),
        summary: format!(
            "motor goal distance {:.4} -> {:.4} over {} iterations",
            curve.first().copied().unwrap_or(f64::NAN),
            curve.last().copied().unwrap_or(f64::NAN),
            curve.len()
        ),
        artifacts: vec![dir, write(out.join("motor_curve.csv"), &curve_csv(&curve))?],
    })
}

fn cmd_eval(a: &EvalArgs, res: &Resolved, out: &Path, inputs: &mut Inputs) -> Result<Outcome> {
    let agent = load_agent(&a.agent.checkpoint, res, out, inputs)?;
    let ds = load_data(&data_dir(&a.agent.data.data, out), inputs)?;
    check_classes(&agent, &ds)?;
    let cfg = agent_cfg(&agent, &res.cfg);
    let set = match a.split {
        Split::Train => &ds.train,
        Split::Test => &ds.test,
    };
    let steps = steps_of(&ds);
    let goals = visual_predictions(&agent.visual, steps)?;
    let visual = eval_reconstruction(&goals, set)?;
    let (mut controlled, mut natural) = (Vec::new(), Vec::new());
    for (label, goal) in goals.iter().enumerate() {
        let runs = agent.motor_runs(label, goal, &cfg, None)?;
        controlled.push(runs.controlled.executed());
        natural.push(runs.uncontrolled.executed());
    }
    let controlled = eval_reconstruction(&controlled, set)?;
    let natural = eval_reconstruction(&natural, set)?;
    let single = SeedRun::from_agent(agent, Dataset { test: set.clone(), ..ds }, &cfg);
    let classification = exp::run_classification(std::slice::from_ref(&single))?;
    let accuracy = *classification.means("accuracy")?.last().unwrap_or(&f64::NAN);
    let csv = format!(
        "metric,value\nvisual_error,{visual}\ncontrolled_error,{controlled}\nnatural_error,{natural}\naccuracy,{accuracy}\n"
    );
    Ok(Outcome {
        config: Some(cfg),
        summary: format!(
            "visual {visual:.4}, controlled {controlled:.4}, natural {natural:.4}, accuracy {accuracy:.3}"
        ),
        artifacts: vec![write(out.join("eval.csv"), &csv)?],
    })
}

fn default_grid(name: ExperimentName, presentations: usize) -> Vec<f64> {
    match name {
        ExperimentName::Perturbation => exp::PERTURBATION_GRID.to_vec(),
        ExperimentName::Scaling => exp::SCALE_GRID.to_vec(),
        ExperimentName::Rotation => exp::rotation_grid(),
        ExperimentName::Impairment => exp::IMPAIRMENT_GRID.to_vec(),
        ExperimentName::Intermittent => exp::THRESHOLD_GRID.to_vec(),
        ExperimentName::Sandbox => exp::SANDBOX_ALPHA_GRID.to_vec(),
        ExperimentName::Capacity => baselines::CAPACITY_GRID.iter().map(|&p| p as f64).collect(),
        ExperimentName::Classification => (1..=presentations).map(|k| k as f64).collect(),
        ExperimentName::Prediction | ExperimentName::Motor => Vec::new(),
    }
}

fn experiment_runs(a: &ExperimentArgs, res: &Resolved, out: &Path, inputs: &mut Inputs) -> Result<Vec<SeedRun>> {
    if let Some(dir) = &a.checkpoint {
        let agent = load_agent(&Some(dir.clone()), res, out, inputs)?;
        let ds = load_data(&data_dir(&a.data, out), inputs)?;
        check_classes(&agent, &ds)?;
        let cfg = agent_cfg(&agent, &res.cfg);
        return Ok(vec![SeedRun::from_agent(agent, ds, &cfg)]);
    }
    let shared = match &a.data {
        Some(dir) => Some(load_data(dir, inputs)?),
        None => None,
    };
    exp::train_seeds(&res.cfg, &a.seeds, |seed| match &shared {
        Some(ds) => Ok(ds.clone()),
        None => synth_letters(a.classes, a.per_class, seed),
    })
}

fn cmd_experiment(a: &ExperimentArgs, res: &Resolved, out: &Path, inputs: &mut Inputs) -> Result<Outcome> {
    let grid = a.grid.clone().unwrap_or_else(|| default_grid(a.name, res.cfg.presentations));
    let dir = out.join("experiments");
    if a.name == ExperimentName::Capacity {
        let plan = CapacityPlan {
            classes: grid.iter().map(|&p| p as usize).collect(),
            seeds: a.seeds.clone(),
            per_class: a.per_class,
            mtrnn_sizes: a.mtrnn_sizes.clone(),
            ..CapacityPlan::default()
        };
        let report = baselines::run_capacity(&res.cfg, &plan)?;
        let artifacts = vec![
            write(dir.join("capacity_seeds.csv"), &report.to_csv())?,
            write(dir.join("capacity.csv"), &report.summary_csv())?,
        ];
        let p_max = plan.classes.iter().max().copied().unwrap_or(0);
        return Ok(Outcome {
            config: None,
            summary: format!(
                "capacity: {} rows; pc_rnn error at p={p_max}: {:.4}",
                report.rows.len(),
                report.mean(baselines::model::PC_RNN, res.cfg.n, p_max)
            ),
            artifacts,
        });
    }
    let mut used = None;
    let report: ExperimentReport = if a.name == ExperimentName::Sandbox {
        exp::run_sandbox(&SandboxConfig::default(), &a.seeds, &grid)?
    } else {
        let runs = experiment_runs(a, res, out, inputs)?;
        if a.checkpoint.is_some() {
            used = runs.first().map(|r| r.cfg.clone());
        }
        match a.name {
            ExperimentName::Prediction => exp::run_prediction(&runs)?,
            ExperimentName::Classification => exp::run_classification(&runs)?,
            ExperimentName::Motor => exp::run_motor_learning(&runs)?,
            ExperimentName::Perturbation => exp::run_perturbation(&runs, &grid)?,
            ExperimentName::Scaling => exp::run_scaling(&runs, &grid)?,
            ExperimentName::Rotation => exp::run_rotation(&runs, &grid)?,
            ExperimentName::Impairment => exp::run_impairment(&runs, &grid)?,
            ExperimentName::Intermittent => exp::run_intermittent(&runs, &grid)?,
            ExperimentName::Sandbox | ExperimentName::Capacity => unreachable!("handled above"),
        }
    };
    let mut artifacts = report.write(&dir)?;
    artifacts.extend(plot::write_report_figures(&report, dir.join("figures"))?);
    let first = report.columns.first().cloned().unwrap_or_default();
    let means = report.means(&first)?;
    Ok(Outcome {
        config: used,
        summary: format!(
            "{}: {} conditions x {} seeds; {first} mean {}",
            report.name,
            report.conditions.len(),
            report.seeds.len(),
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" ")
        ),
        artifacts,
    })
}

fn cmd_plot(a: &AgentArgs, res: &Resolved, out: &Path, inputs: &mut Inputs) -> Result<Outcome> {
    let agent = load_agent(&a.checkpoint, res, out, inputs)?;
    let ds = load_data(&data_dir(&a.data.data, out), inputs)?;
    check_classes(&agent, &ds)?;
    let cfg = agent_cfg(&agent, &res.cfg);
    let dir = out.join("plots");
    let goals = visual_predictions(&agent.visual, steps_of(&ds))?;
    let mut artifacts = Vec::new();
    let mut all = Vec::new();
    for (label, goal) in goals.iter().enumerate() {
        let name = &agent.class_names[label];
        let heat = plot::plot_heatmap(goal, None, plot::HEATMAP_GRID, &format!("class {name}"))?;
        artifacts.push(write(dir.join(format!("heatmap_{name}.svg")), &heat)?);
        let runs = agent.motor_runs(label, goal, &cfg, None)?;
        let poses: Vec<_> = runs.controlled.steps.iter().step_by(6).map(|s| crate::arm::MotorCommand(s.m)).collect();
        let arm = plot::plot_arm(&agent.arm, &poses, Some(&runs.controlled.executed()), &format!("arm, class {name}"));
        artifacts.push(write(dir.join(format!("arm_{name}.svg")), &arm)?);
        all.push(plot::Series::new(&format!("goal {name}"), goal.clone(), 3 * label).dashed());
        all.push(plot::Series::new(&format!("controlled {name}"), runs.controlled.executed(), 3 * label + 1));
        all.push(plot::Series::new(&format!("natural {name}"), runs.uncontrolled.executed(), 3 * label + 2));
    }
    artifacts.push(write(dir.join("trajectories.svg"), &plot::plot_trajectories(&all, "visual goal and executed paths"))?);
    Ok(Outcome {
        config: Some(cfg),
        summary: format!("{} figures for {} classes", artifacts.len(), agent.p()),
        artifacts,
    })
}

fn cmd_baseline(a: &BaselineArgs, cfg: &TrainConfig, out: &Path, inputs: &mut Inputs) -> Result<Outcome> {
    let ds = load_data(&data_dir(&a.data.data, out), inputs)?;
    let mut budget = BaselineBudget::desk();
    budget.babbling_iterations = a.babbling.unwrap_or(budget.babbling_iterations);
    budget.imitation_iterations = a.imitation.unwrap_or(budget.imitation_iterations);
    budget.rnnfm_iterations = a.iterations.unwrap_or(budget.rnnfm_iterations);
    budget.validate()?;
    let targets = class_targets(&ds)?;
    let steps = steps_of(&ds);
    let dir = out.join("baselines");
    let (name, paths, mut artifacts) = match a.model {
        BaselineModel::Mtrnn => {
            let trained = baselines::train_mtrnn(a.n, &cfg.arm, &targets, &budget, cfg.seed)?;
            let ckpt = dir.join(format!("mtrnn_n{}.mtrnn", a.n));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            trained.params.save(&ckpt)?;
            let paths = (0..ds.p()).map(|l| trained.executed(l, steps, &cfg.arm)).collect::<Result<Vec<_>>>()?;
            ("mtrnn", paths, vec![ckpt])
        }
        BaselineModel::RnnFm => {
            let mut fm = RnnFm::new(a.n, ds.p(), cfg.tau_motor, &cfg.arm, cfg.seed)?;
            fm.train(&targets, &budget)?;
            let paths = (0..ds.p()).map(|l| fm.executed(l, steps)).collect::<Result<Vec<_>>>()?;
            ("rnn_fm", paths, Vec::new())
        }
    };
    let err = eval_reconstruction(&paths, &ds.test)?;
    let mut csv = String::from("label,t,x,y\n");
    for (l, path) in paths.iter().enumerate() {
        for (t, p) in path.iter().enumerate() {
            let _ = writeln!(csv, "{l},{t},{},{}", p.x, p.y);
        }
    }
    let fit: Vec<f64> = paths.iter().zip(&targets).map(|(p, t)| path_error(p, t)).collect();
    artifacts.push(write(dir.join(format!("{name}_n{}_paths.csv", a.n)), &csv)?);
    Ok(Outcome {
        config: None,
        summary: format!(
            "{name} n={}: test error {err:.4}, class-mean fit {:.4}",
            a.n,
            fit.iter().sum::<f64>() / fit.len().max(1) as f64
        ),
        artifacts,
    })
}

/// Git-style blob hash: sha256 over `blob <len>\0<content>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn collect_files(path: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for e in entries {
            collect_files(&e, files)?;
        }
    } else if path.is_file() {
        files.push(path.to_path_buf());
    }
    Ok(())
}

/// Input files with their blob hashes, taken when the input is read so a
/// verb that rewrites its own input still records what it consumed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inputs {
    pub files: Vec<(PathBuf, String)>,
}

impl Inputs {
    /// Hashes a file, or every file below a directory.
    pub fn add(&mut self, path: &Path) -> Result<()> {
        let mut found = Vec::new();
        collect_files(path, &mut found)?;
        for f in found {
            if self.files.iter().any(|(p, _)| *p == f) {
                continue;
            }
            let bytes = fs::read(&f).map_err(|e| Error::io(&f, e))?;
            self.files.push((f, blob_hash(&bytes)));
        }
        Ok(())
    }

    /// Tree hash over the path-sorted `(hash, path)` list.
    pub fn tree_hash(&self) -> String {
        let mut sorted = self.files.clone();
        sorted.sort();
        let mut tree = Sha256::new();
        for (f, h) in &sorted {
            tree.update(format!("{h} {}\n", f.display()).as_bytes());
        }
        hex::encode(tree.finalize())
    }
}

fn write_manifest(out: &Path, verb: &str, cfg: &TrainConfig, inputs: &Inputs) -> Result<PathBuf> {
    let tree = inputs.tree_hash();
    let mut entries = inputs.files.clone();
    entries.sort();
    let mut text = format!(
        "verb = \"{verb}\"\nseed = {}\nversion = \"{}\"\ninputs_hash = \"{tree}\"\n",
        cfg.seed,
        env!("CARGO_PKG_VERSION")
    );
    let _ = writeln!(text, "config = '''\n{}'''", cfg.to_text());
    for (path, hash) in entries {
        let _ = writeln!(text, "\n[[input]]\npath = {:?}\nhash = \"{hash}\"", path.display().to_string());
    }
    write(out.join(format!("manifest_{verb}.toml")), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verbs_parse() {
        for args in [
            vec!["visuomotor", "synth", "--classes", "3", "--per-class", "40", "--seed", "1"],
            vec!["visuomotor", "train-visual", "--set", "iterations=10", "--out", "x"],
            vec!["visuomotor", "experiment", "perturbation", "--checkpoint", "m", "--grid", "0,0.5"],
            vec!["visuomotor", "train-baseline", "--model", "rnn-fm", "--n", "20"],
        ] {
            Cli::try_parse_from(args).unwrap();
        }
        assert!(Cli::try_parse_from(["visuomotor", "fly"]).is_err());
        assert!(Cli::try_parse_from(["visuomotor", "experiment", "warp"]).is_err());
    }

    #[test]
    fn unknown_verb_is_a_usage_error() {
        assert_eq!(main_with_args(["visuomotor", "fly"]), 2);
    }

    #[test]
    fn blob_hash_matches_git_for_sha256() {
        // `git hash-object --object-format=sha256` of an empty file.
        assert_eq!(blob_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
        assert_ne!(blob_hash(b"a"), blob_hash(b"b"));
    }

    #[test]
    fn default_grids_have_the_documented_sizes() {
        assert_eq!(default_grid(ExperimentName::Perturbation, 5).len(), 6);
        assert_eq!(default_grid(ExperimentName::Rotation, 5).len(), 7);
        assert_eq!(default_grid(ExperimentName::Classification, 5), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }
}
