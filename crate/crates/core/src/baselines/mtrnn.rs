//! Two-timescale RNN producing joint visual and motor output, trained by
//! motor babbling followed by imitation of visual targets.
//!
//! Wiring: the fast layer reads both layers and the previous output; the
//! slow layer reads both layers but not the output. Outputs are
//! `(o_x, o_y, theta_0, theta_1, theta_2)`.

use std::fs;
use std::path::Path;

use nalgebra::{DVector, Vector2, Vector3};

use super::leaky::{masked_squared_error, Adam, LeakyRnn};
use super::BaselineBudget;
use crate::arm::{ArmConfig, MotorCommand};
use crate::checkpoint::{to_u32, Reader, Writer};
use crate::error::{check_dim, Error, Result};
use crate::seeding::{normal_vector, rng, stream, Rng};

pub const MTRNN_MAGIC: &[u8; 6] = b"MTRNN1";
pub const TAU_FAST: f64 = 5.0;
pub const TAU_SLOW: f64 = 10.0;
pub const JOINT_DIM: usize = 5;
/// Initial scale of the motor readout relative to fan-in scaling. Keeps
/// babbled postures within a few tenths of a radian of home, so babbling
/// explores the area where the letters are drawn instead of the whole reach.
pub const MOTOR_SPREAD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct MtrnnParams {
    pub n_fast: usize,
    pub n_slow: usize,
    pub tau_fast: f64,
    pub tau_slow: f64,
    pub net: LeakyRnn,
}

fn visual_mask() -> DVector<f64> {
    DVector::from_column_slice(&[1.0, 1.0, 0.0, 0.0, 0.0])
}

fn joint(o: &Vector2<f64>, m: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[o.x, o.y, m.x, m.y, m.z])
}

pub fn motor_part(y: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(y[2], y[3], y[4])
}

pub fn visual_part(y: &DVector<f64>) -> Vector2<f64> {
    Vector2::new(y[0], y[1])
}

impl MtrnnParams {
    /// Random weights. Output biases start at `home` and its visual image
    /// so that early babbling stays near the working area.
    pub fn new(n_fast: usize, n_slow: usize, tau_fast: f64, tau_slow: f64, arm: &ArmConfig, home: &MotorCommand, rng: &mut Rng) -> Result<Self> {
        if n_fast == 0 || n_slow == 0 {
            return Err(Error::Config("MTRNN layers must be non-empty".into()));
        }
        if !(tau_fast <= tau_slow) {
            return Err(Error::Config(format!("fast time constant {tau_fast} exceeds slow {tau_slow}")));
        }
        let taus: Vec<f64> = (0..n_fast + n_slow)
            .map(|i| if i < n_fast { tau_fast } else { tau_slow })
            .collect();
        let feedback: Vec<bool> = (0..n_fast + n_slow).map(|i| i < n_fast).collect();
        let mut net = LeakyRnn::new(&taus, 0, JOINT_DIM, &feedback, rng)?;
        net.b_out = joint(&arm.forward_kinematics(home), &home.0);
        for r in 2..JOINT_DIM {
            net.w_out.row_mut(r).scale_mut(MOTOR_SPREAD);
        }

        Ok(Self {
            n_fast,
            n_slow,
            tau_fast,
            tau_slow,
            net,
        })
    }

    pub fn n(&self) -> usize {
        self.n_fast + self.n_slow
    }

    pub fn rollout(&self, h0: &DVector<f64>, steps: usize) -> Result<Vec<DVector<f64>>> {
        let tape = self.net.forward(h0, &DVector::zeros(0), steps)?;
        Ok(tape.outputs().to_vec())
    }

    /// Executes the motor half of a rollout on the arm.
    pub fn executed(&self, h0: &DVector<f64>, steps: usize, arm: &ArmConfig) -> Result<Vec<Vector2<f64>>> {
        Ok(self
            .rollout(h0, steps)?
            .iter()
            .map(|y| arm.forward_kinematics(&MotorCommand(motor_part(y))))
            .collect())
    }

    /// Motor commands from `h0`, the arm's response, and both as a joint
    /// training target.
    fn babble(&self, h0: &DVector<f64>, steps: usize, arm: &ArmConfig) -> Result<Vec<DVector<f64>>> {
        Ok(self
            .rollout(h0, steps)?
            .iter()
            .map(|y| {
                let m = motor_part(y);
                joint(&arm.forward_kinematics(&MotorCommand(m)), &m)
            })
            .collect())
    }

    /// One optimizer step on the joint squared error from `h0`.
    pub fn train_step(&mut self, opt: &mut Adam, h0: &DVector<f64>, targets: &[DVector<f64>]) -> Result<f64> {
        let tape = self.net.forward(h0, &DVector::zeros(0), targets.len())?;
        let (loss, dy) = masked_squared_error(tape.outputs(), targets, &DVector::from_element(JOINT_DIM, 1.0))?;
        let grads = self.net.backward(&tape, &dy)?;
        opt.step(&mut self.net, &grads);
        if !loss.is_finite() || !self.net.is_finite() {
            return Err(Error::Divergence(format!("MTRNN training diverged (loss {loss})")));
        }
        Ok(loss)
    }

    /// Gradient descent on the initial state so the visual half of the
    /// output fits `target`.
    pub fn infer_h0(&self, start: &DVector<f64>, target: &[Vector2<f64>], steps: usize, lr: f64) -> Result<DVector<f64>> {
        let targets: Vec<DVector<f64>> = target.iter().map(|o| joint(o, &Vector3::zeros())).collect();
        let mask = visual_mask();
        let mut h0 = start.clone();
        for _ in 0..steps {
            let tape = self.net.forward(&h0, &DVector::zeros(0), targets.len())?;
            let (_, dy) = masked_squared_error(tape.outputs(), &targets, &mask)?;
            let grads = self.net.backward(&tape, &dy)?;
            h0 -= grads.u0 * lr;
        }
        if h0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("initial-state inference diverged".into()));
        }
        Ok(h0)
    }

    /// The candidate initial state (or zero) whose visual output is
    /// closest to `target`, as a starting point for inference.
    pub fn closest_start(&self, candidates: &[DVector<f64>], target: &[Vector2<f64>]) -> Result<DVector<f64>> {
        let mut best = (f64::INFINITY, DVector::zeros(self.n()));
        for h0 in std::iter::once(&best.1.clone()).chain(candidates) {
            let out = self.rollout(h0, target.len())?;
            let err: f64 = out.iter().zip(target).map(|(y, o)| (visual_part(y) - o).norm_squared()).sum();
            if err < best.0 {
                best = (err, h0.clone());
            }
        }
        Ok(best.1)
    }

    /// Mean squared visual error between the predicted and the executed
    /// trajectory from `h0`. Measures how well the visual half has learnt
    /// the arm.
    pub fn joint_consistency(&self, h0: &DVector<f64>, steps: usize, arm: &ArmConfig) -> Result<f64> {
        let out = self.rollout(h0, steps)?;
        let total: f64 = out
            .iter()
            .map(|y| (visual_part(y) - arm.forward_kinematics(&MotorCommand(motor_part(y)))).norm_squared())
            .sum();
        Ok(total / steps.max(1) as f64)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = [to_u32(self.n_fast, "n_fast")?, to_u32(self.n_slow, "n_slow")?, to_u32(JOINT_DIM, "out_dim")?];
        let mut w = Writer::new(MTRNN_MAGIC, &header);
        w.scalar(self.tau_fast);
        w.scalar(self.tau_slow);
        w.matrix(&self.net.w);
        w.matrix(&self.net.w_fb);
        w.matrix(&nalgebra::DMatrix::from_column_slice(self.n(), 1, self.net.b.as_slice()));
        w.matrix(&self.net.w_out);
        w.matrix(&nalgebra::DMatrix::from_column_slice(JOINT_DIM, 1, self.net.b_out.as_slice()));
        Ok(w.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (mut r, header) = Reader::open(bytes, MTRNN_MAGIC, 3)?;
        let [n_fast, n_slow, out] = [0, 1, 2].map(|i| header[i] as usize);
        if out != JOINT_DIM {
            return Err(Error::Checkpoint(format!("MTRNN output size {out}, expected {JOINT_DIM}")));
        }
        let n = n_fast + n_slow;
        r.expect_payload(2 + n * n + n * out + n + out * n + out)?;
        let tau_fast = r.scalar()?;
        let tau_slow = r.scalar()?;
        let arm = ArmConfig::default();
        let mut params = Self::new(n_fast, n_slow, tau_fast, tau_slow, &arm, &MotorCommand::zero(), &mut rng(0, 0))
            .map_err(|e| Error::Checkpoint(format!("invalid MTRNN header: {e}")))?;
        params.net.w = r.matrix(n, n)?;
        params.net.w_fb = r.matrix(n, out)?;
        params.net.b = DVector::from_column_slice(r.matrix(n, 1)?.as_slice());
        params.net.w_out = r.matrix(out, n)?;
        params.net.b_out = DVector::from_column_slice(r.matrix(out, 1)?.as_slice());
        if !params.net.is_finite() {
            return Err(Error::Checkpoint("MTRNN weights are not finite".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Posture used as the output bias of the motor baselines: the arm reaching
/// the scene origin, where every preprocessed trajectory starts.
pub fn home_posture(arm: &ArmConfig) -> MotorCommand {
    arm.inverse_kinematics(&Vector2::zeros(), MotorCommand::new(-0.5, 1.0, 1.0), 2000)
}

/// Fresh MTRNN with `n/2` units per layer and the standard time constants.
pub fn init_mtrnn(n: usize, arm: &ArmConfig, seed: u64) -> Result<MtrnnParams> {
    let n_fast = n / 2;
    MtrnnParams::new(n_fast, n - n_fast, TAU_FAST, TAU_SLOW, arm, &home_posture(arm), &mut rng(seed, stream::BASELINE))
}

/// Motor babbling: random initial states generate motor trajectories, the
/// arm executes them, and the network learns the joint pair from the same
/// initial state. Returns the per-iteration loss.
pub fn babbling_phase(params: &mut MtrnnParams, arm: &ArmConfig, budget: &BaselineBudget, steps: usize, seed: u64) -> Result<Vec<f64>> {
    let mut r = rng(seed, stream::BABBLING);
    let mut opt = Adam::new(budget.lr, budget.clip, params.net.parameter_count());
    let mut curve = Vec::with_capacity(budget.babbling_iterations);
    for _ in 0..budget.babbling_iterations {
        let h0 = normal_vector(&mut r, params.n(), budget.h0_std);
        let targets = params.babble(&h0, steps, arm)?;
        curve.push(params.train_step(&mut opt, &h0, &targets)?);
    }
    Ok(curve)
}

/// Imitation: per class and iteration, infer the initial state that makes
/// the visual output fit the class target, execute the resulting motor
/// commands, and learn the executed pair. Returns the final per-class
/// initial states.
pub fn imitation_phase(
    params: &mut MtrnnParams,
    arm: &ArmConfig,
    targets: &[Vec<Vector2<f64>>],
    budget: &BaselineBudget,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let mut opt = Adam::new(budget.imitation_lr, budget.clip, params.net.parameter_count());
    let mut r = rng(seed, stream::BABBLING + 100);
    let candidates: Vec<DVector<f64>> = (0..budget.h0_candidates)
        .map(|_| normal_vector(&mut r, params.n(), budget.h0_std))
        .collect();
    let mut h0s = targets
        .iter()
        .map(|t| params.closest_start(&candidates, t))
        .collect::<Result<Vec<_>>>()?;
    for it in 0..=budget.imitation_iterations {
        for (k, target) in targets.iter().enumerate() {
            h0s[k] = params.infer_h0(&h0s[k], target, budget.infer_steps, budget.infer_lr)?;
            if it == budget.imitation_iterations {
                // Last pass only refreshes the states for the final weights.
                continue;
            }
            let pair = params.babble(&h0s[k], target.len(), arm)?;
            params.train_step(&mut opt, &h0s[k], &pair)?;
        }
    }
    Ok(h0s)
}

/// MTRNN after both phases, with its per-class initial states.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMtrnn {
    pub params: MtrnnParams,
    pub h0s: Vec<DVector<f64>>,
}

impl TrainedMtrnn {
    pub fn executed(&self, label: usize, steps: usize, arm: &ArmConfig) -> Result<Vec<Vector2<f64>>> {
        let h0 = self
            .h0s
            .get(label)
            .ok_or_else(|| Error::Config(format!("no initial state for class {label}")))?;
        self.params.executed(h0, steps, arm)
    }
}

pub fn train_mtrnn(n: usize, arm: &ArmConfig, targets: &[Vec<Vector2<f64>>], budget: &BaselineBudget, seed: u64) -> Result<TrainedMtrnn> {
    let steps = targets.first().map_or(0, Vec::len);
    if steps == 0 {
        return Err(Error::Dataset("imitation needs non-empty targets".into()));
    }
    for t in targets {
        check_dim("target length", steps, t.len())?;
    }
    let mut params = init_mtrnn(n, arm, seed)?;
    babbling_phase(&mut params, arm, budget, steps, seed)?;
    let h0s = imitation_phase(&mut params, arm, targets, budget, seed)?;
    Ok(TrainedMtrnn { params, h0s })
}
