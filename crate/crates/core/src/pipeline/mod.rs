//! Two-stage training (visual generator first, then the motor generator
//! through active inference), evaluation metrics, and persistence.

mod config;
pub mod experiments;

use std::fs;
use std::path::Path;

use nalgebra::{DVector, Vector2, Vector3};
use rand::Rng as _;

pub use config::{TrainConfig, CONFIG_KEYS};
pub use crate::checkpoint::{load_checkpoint, save_checkpoint};

use crate::aif::{controlled_rollout, controlled_training_pass, AifOptions, ControlTrace, InitialState};
use crate::arm::ArmConfig;
use crate::data::{Dataset, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::pcrnn::{one_hot, LearningRates, PcrnnParams};
use crate::seeding::{normal_vector, rng, stream};

/// A trained network together with its shared initial hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub params: PcrnnParams,
    pub h0: DVector<f64>,
}

impl Generator {
    /// Fresh network and initial state drawn from the two given streams.
    pub fn init(out_dim: usize, p: usize, tau: f64, cfg: &TrainConfig, init_stream: u64, h0_stream: u64) -> Result<Self> {
        cfg.validate()?;
        let params = PcrnnParams::with_factor_dim(
            cfg.n,
            p,
            cfg.factor_dim(),
            out_dim,
            tau,
            &mut rng(cfg.seed, init_stream),
        )?;
        let h0 = normal_vector(&mut rng(cfg.seed, h0_stream), cfg.n, cfg.h0_std);
        Ok(Self { params, h0 })
    }

    pub fn initial_state(&self, label: usize) -> InitialState {
        InitialState {
            h0: self.h0.clone(),
            c0: one_hot(self.params.p, label),
        }
    }

    /// Pure prediction for one class.
    pub fn natural(&self, label: usize, steps: usize) -> Result<Vec<DVector<f64>>> {
        check_label(label, self.params.p)?;
        let run = self.params.rollout(
            &self.h0,
            &one_hot(self.params.p, label),
            steps,
            None,
            &LearningRates::prediction(),
            true,
        )?;
        Ok(run.outputs)
    }

    pub fn natural_2d(&self, label: usize, steps: usize) -> Result<Vec<Vector2<f64>>> {
        check_dim("visual output", 2, self.params.out_dim)?;
        Ok(self.natural(label, steps)?.iter().map(to_point).collect())
    }
}

fn check_label(label: usize, p: usize) -> Result<()> {
    if label >= p {
        return Err(Error::Config(format!("class {label} out of range for p = {p}")));
    }
    Ok(())
}

pub(crate) fn to_point(v: &DVector<f64>) -> Vector2<f64> {
    Vector2::new(v[0], v[1])
}

pub(crate) fn to_target(p: &Vector2<f64>) -> DVector<f64> {
    DVector::from_column_slice(p.as_slice())
}

fn check_finite(params: &PcrnnParams, iteration: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || params.validate().is_err() {
        return Err(Error::Divergence(format!(
            "training diverged at iteration {iteration} (loss {loss})"
        )));
    }
    Ok(())
}

/// Supervised training of the visual generator. Causes stay clamped to the
/// one-hot label; every iteration trains online on one training trajectory
/// drawn uniformly at random. Returns the per-iteration mean error.
pub fn train_visual(dataset: &Dataset, cfg: &TrainConfig) -> Result<(Generator, Vec<f64>)> {
    let visual = Generator::init(2, dataset.p(), cfg.tau_visual, cfg, stream::VISUAL_INIT, stream::VISUAL_H0)?;
    continue_visual(visual, dataset, cfg, cfg.iterations)
}

/// Further visual training of an existing generator.
pub fn continue_visual(
    mut visual: Generator,
    dataset: &Dataset,
    cfg: &TrainConfig,
    iterations: usize,
) -> Result<(Generator, Vec<f64>)> {
    if dataset.train.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    check_dim("class count", visual.params.p, dataset.p())?;
    let rates = LearningRates {
        alpha_c: 0.0,
        ..cfg.visual
    };
    rates.validate()?;
    let targets: Vec<Vec<DVector<f64>>> = dataset
        .train
        .iter()
        .map(|t| t.points.iter().map(to_target).collect())
        .collect();
    let mut pick = rng(cfg.seed, stream::TRAIN_VISUAL);
    let mut curve = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let k = pick.random_range(0..targets.len());
        let c = one_hot(visual.params.p, dataset.train[k].label);
        let loss = visual.params.train_sequence(&visual.h0, &c, &targets[k], &rates, true)?;
        check_finite(&visual.params, it, loss)?;
        curve.push(loss);
    }
    Ok((visual, curve))
}

/// Inference-only copy of the motor rates used for test-time rollouts.
pub fn motor_test_rates(cfg: &TrainConfig) -> LearningRates {
    LearningRates {
        lambda_out: 0.0,
        lambda_p: 0.0,
        lambda_f: 0.0,
        lambda_c: 0.0,
        ..cfg.motor
    }
}

/// Options and rates for the open-loop baseline: no motor correction and no
/// bottom-up pathway in the motor network.
pub fn uncontrolled(cfg: &TrainConfig) -> (AifOptions, LearningRates) {
    (
        AifOptions {
            alpha_m: 0.0,
            gate_threshold: None,
            ..cfg.aif
        },
        LearningRates::prediction(),
    )
}

/// Trains the motor generator without motor supervision. Each iteration
/// takes the visual prediction of a random class as the goal, corrects the
/// motor output towards it through the arm, and learns from the corrected
/// commands. Returns the per-iteration mean pre-correction distance.
pub fn train_motor(visual: &Generator, cfg: &TrainConfig, steps: usize) -> Result<(Generator, Vec<f64>)> {
    let motor = Generator::init(3, visual.params.p, cfg.tau_motor, cfg, stream::MOTOR_INIT, stream::MOTOR_H0)?;
    continue_motor(motor, visual, cfg, steps, cfg.motor_iterations)
}

pub fn continue_motor(
    mut motor: Generator,
    visual: &Generator,
    cfg: &TrainConfig,
    steps: usize,
    iterations: usize,
) -> Result<(Generator, Vec<f64>)> {
    let p = visual.params.p;
    check_dim("class count", p, motor.params.p)?;
    cfg.motor.validate()?;
    let goals = (0..p).map(|l| visual.natural_2d(l, steps)).collect::<Result<Vec<_>>>()?;
    let mut pick = rng(cfg.seed, stream::TRAIN_MOTOR);
    let mut curve = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let label = pick.random_range(0..p);
        let init = motor.initial_state(label);
        let trace = controlled_training_pass(&mut motor.params, &init, &goals[label], &cfg.arm, &cfg.aif, &cfg.motor)?;
        let loss = trace.steps.iter().map(|s| s.err2.sqrt()).sum::<f64>() / trace.len().max(1) as f64;
        check_finite(&motor.params, it, loss)?;
        curve.push(loss);
    }
    Ok((motor, curve))
}

/// Mean point-to-point Euclidean distance between two equal-length paths.
pub fn path_error(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    assert_eq!(a.len(), b.len(), "path_error needs equal-length paths");
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

/// Mean path error of each test trajectory against the output produced for
/// its class.
pub fn eval_reconstruction(produced: &[Vec<Vector2<f64>>], test: &[Trajectory]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Dataset("test set is empty".into()));
    }
    let mut total = 0.0;
    for traj in test {
        let out = produced
            .get(traj.label)
            .ok_or_else(|| Error::Config(format!("no output for class {}", traj.label)))?;
        check_dim("produced length", traj.len(), out.len())?;
        total += path_error(out, &traj.points);
    }
    Ok(total / test.len() as f64)
}

/// Visual prediction of every class.
pub fn visual_predictions(visual: &Generator, steps: usize) -> Result<Vec<Vec<Vector2<f64>>>> {
    (0..visual.params.p).map(|l| visual.natural_2d(l, steps)).collect()
}

/// Controlled and open-loop motor runs towards one visual goal.
#[derive(Debug, Clone, PartialEq)]
pub struct MotorRuns {
    pub controlled: ControlTrace,
    pub uncontrolled: ControlTrace,
}

/// Both the visual and motor generators with the arm that links them.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub visual: Generator,
    pub motor: Generator,
    pub arm: ArmConfig,
    pub class_names: Vec<String>,
    pub scale: f64,
}

impl Agent {
    pub fn p(&self) -> usize {
        self.visual.params.p
    }

    /// Runs the motor network towards `goal` with control on and off.
    pub fn motor_runs(
        &self,
        label: usize,
        goal: &[Vector2<f64>],
        cfg: &TrainConfig,
        perturb: Option<&[Vector3<f64>]>,
    ) -> Result<MotorRuns> {
        check_label(label, self.p())?;
        let init = self.motor.initial_state(label);
        let controlled = controlled_rollout(
            &self.motor.params,
            &init,
            goal,
            &self.arm,
            &cfg.aif,
            &motor_test_rates(cfg),
            perturb,
        )?;
        let (off, off_rates) = uncontrolled(cfg);
        let uncontrolled = controlled_rollout(&self.motor.params, &init, goal, &self.arm, &off, &off_rates, perturb)?;
        Ok(MotorRuns {
            controlled,
            uncontrolled,
        })
    }

    /// Saves the two networks plus initial states and metadata into a directory.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&self.visual.params, dir.join("visual.pcrnn"))?;
        save_checkpoint(&self.motor.params, dir.join("motor.pcrnn"))?;
        let vec_text = |v: &DVector<f64>| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let meta = format!(
            "classes = \"{}\"\nscale = {:?}\nh0_visual = [{}]\nh0_motor = [{}]\nshoulder_x = {:?}\nshoulder_y = {:?}\nlengths = [{:?}, {:?}, {:?}]\n",
            self.class_names.join(","),
            self.scale,
            vec_text(&self.visual.h0),
            vec_text(&self.motor.h0),
            self.arm.shoulder.x,
            self.arm.shoulder.y,
            self.arm.lengths[0],
            self.arm.lengths[1],
            self.arm.lengths[2],
        );
        let path = dir.join("agent.toml");
        fs::write(&path, meta).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let visual = load_checkpoint(dir.join("visual.pcrnn"))?;
        let motor = load_checkpoint(dir.join("motor.pcrnn"))?;
        let path = dir.join("agent.toml");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let bad = |key: &str| Error::Checkpoint(format!("{}: missing or invalid {key}", path.display()));
        let float = |key: &str| -> Result<f64> {
            table.get(key).and_then(|v| v.as_float()).ok_or_else(|| bad(key))
        };
        let floats = |key: &str| -> Result<Vec<f64>> {
            table
                .get(key)
                .and_then(|v| v.as_array())
                .ok_or_else(|| bad(key))?
                .iter()
                .map(|v| v.as_float().ok_or_else(|| bad(key)))
                .collect()
        };
        let class_names: Vec<String> = table
            .get("classes")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("classes"))?
            .split(',')
            .map(str::to_owned)
            .collect();
        let lengths = floats("lengths")?;
        if lengths.len() != 3 {
            return Err(bad("lengths"));
        }
        let arm = ArmConfig::new(
            Vector2::new(float("shoulder_x")?, float("shoulder_y")?),
            [lengths[0], lengths[1], lengths[2]],
        )?;
        let h0_visual = DVector::from_vec(floats("h0_visual")?);
        let h0_motor = DVector::from_vec(floats("h0_motor")?);
        check_dim("visual initial state", visual.n, h0_visual.len())?;
        check_dim("motor initial state", motor.n, h0_motor.len())?;
        check_dim("motor class count", visual.p, motor.p)?;
        check_dim("class names", visual.p, class_names.len())?;
        Ok(Self {
            visual: Generator {
                params: visual,
                h0: h0_visual,
            },
            motor: Generator {
                params: motor,
                h0: h0_motor,
            },
            arm,
            class_names,
            scale: float("scale")?,
        })
    }
}

/// Both training stages on one dataset.
pub fn train_agent(dataset: &Dataset, cfg: &TrainConfig) -> Result<(Agent, Vec<f64>, Vec<f64>)> {
    let steps = dataset.train.first().map_or(0, Trajectory::len);
    let (visual, visual_curve) = train_visual(dataset, cfg)?;
    let (motor, motor_curve) = train_motor(&visual, cfg, steps)?;
    Ok((
        Agent {
            visual,
            motor,
            arm: cfg.arm,
            class_names: dataset.class_names.clone(),
            scale: dataset.scale,
        },
        visual_curve,
        motor_curve,
    ))
}

#[cfg(test)]
mod tests;
