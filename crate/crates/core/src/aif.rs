//! Active-inference coupling between the visual and motor generators.
//!
//! In the visual-to-motor direction the motor network's command is nudged
//! down the gradient of the squared distance between its forward-model
//! outcome and the visual prediction. The corrected command then serves as
//! the motor network's inference target, so the correction persists through
//! its hidden state. The motor-to-visual direction reuses the same machinery
//! with the roles swapped: the forward-model outcome becomes the visual
//! network's inference target.

use std::fmt::Write as _;

use nalgebra::{DVector, Vector2, Vector3};

use crate::arm::{ArmConfig, MotorCommand};
use crate::error::{check_dim, Error, Result};
use crate::pcrnn::{LearningRates, PcrnnParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Motor commands are corrected towards the visual prediction.
    #[default]
    VisualToMotor,
    /// The visual prediction is corrected towards the motor outcome.
    MotorToVisual,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual_to_motor" | "visual->motor" => Ok(Direction::VisualToMotor),
            "motor_to_visual" | "motor->visual" => Ok(Direction::MotorToVisual),
            other => Err(Error::Config(format!("unknown feedback direction {other:?}"))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::VisualToMotor => "visual_to_motor",
            Direction::MotorToVisual => "motor_to_visual",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AifOptions {
    pub alpha_m: f64,
    pub grad_steps: usize,
    /// Squared-error threshold below which the feedback pathway stays off.
    /// `None` keeps it always on.
    pub gate_threshold: Option<f64>,
    pub direction: Direction,
}

impl Default for AifOptions {
    fn default() -> Self {
        Self {
            alpha_m: 0.004,
            grad_steps: 1,
            gate_threshold: None,
            direction: Direction::VisualToMotor,
        }
    }
}

impl AifOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_m.is_finite() && self.alpha_m >= 0.0) {
            return Err(Error::Config(format!("alpha_m must be >= 0, got {}", self.alpha_m)));
        }
        if self.grad_steps == 0 {
            return Err(Error::Config("grad_steps must be >= 1".into()));
        }
        if let Some(t) = self.gate_threshold {
            if t.is_nan() || t < 0.0 {
                return Err(Error::Config(format!("gate_threshold must be >= 0, got {t}")));
            }
        }
        Ok(())
    }

    /// Control disabled.
    pub fn disabled() -> Self {
        Self {
            alpha_m: 0.0,
            ..Self::default()
        }
    }
}

/// One timestep of a coupled run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlStep {
    /// Command emitted by the motor network (after any perturbation).
    pub m: Vector3<f64>,
    /// Command after correction; equals `m` when the gate is off.
    pub m_star: Vector3<f64>,
    /// Forward-model outcome of the executed command `m_star`.
    pub o_m: Vector2<f64>,
    /// Visual prediction at this step.
    pub o_v: Vector2<f64>,
    /// Squared distance between `f(m)` and `o_v` before correction.
    pub err2: f64,
    pub gate_active: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlTrace {
    pub steps: Vec<ControlStep>,
}

impl ControlTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn executed(&self) -> Vec<Vector2<f64>> {
        self.steps.iter().map(|s| s.o_m).collect()
    }

    pub fn predicted(&self) -> Vec<Vector2<f64>> {
        self.steps.iter().map(|s| s.o_v).collect()
    }

    pub fn activations(&self) -> usize {
        self.steps.iter().filter(|s| s.gate_active).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,theta0,theta1,theta2,theta_star0,theta_star1,theta_star2,omx,omy,ovx,ovy,err2,gate\n",
        );
        for (t, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{t},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.m[0],
                s.m[1],
                s.m[2],
                s.m_star[0],
                s.m_star[1],
                s.m_star[2],
                s.o_m.x,
                s.o_m.y,
                s.o_v.x,
                s.o_v.y,
                s.err2,
                u8::from(s.gate_active)
            );
        }
        out
    }
}

/// `grad_m ||f(m) - o||^2 = 2 J(m)' (f(m) - o)`.
pub fn visual_error_gradient(cfg: &ArmConfig, m: &MotorCommand, o_v: &Vector2<f64>) -> Vector3<f64> {
    let residual = cfg.forward_kinematics(m) - o_v;
    cfg.jacobian(m).transpose() * residual * 2.0
}

/// Gradient correction of a motor command. The returned error is the
/// squared distance for the input command.
pub fn correct_motor(
    m: &MotorCommand,
    o_v: &Vector2<f64>,
    cfg: &ArmConfig,
    opts: &AifOptions,
) -> (MotorCommand, f64) {
    let err2 = (cfg.forward_kinematics(m) - o_v).norm_squared();
    let mut cur = *m;
    if opts.alpha_m > 0.0 {
        for _ in 0..opts.grad_steps {
            cur = MotorCommand(cur.0 - visual_error_gradient(cfg, &cur, o_v) * opts.alpha_m);
        }
    }
    (cur, err2)
}

/// Correction that only fires when the squared error reaches the gate
/// threshold. Returns the command, whether the gate was active, and the
/// pre-correction squared error.
pub fn gated_correct(
    m: &MotorCommand,
    o_v: &Vector2<f64>,
    cfg: &ArmConfig,
    opts: &AifOptions,
) -> (MotorCommand, bool, f64) {
    let err2 = (cfg.forward_kinematics(m) - o_v).norm_squared();
    if gate_is_open(err2, opts.gate_threshold) {
        let (m_star, _) = correct_motor(m, o_v, cfg, opts);
        (m_star, true, err2)
    } else {
        (*m, false, err2)
    }
}

pub fn gate_is_open(err2: f64, threshold: Option<f64>) -> bool {
    match threshold {
        None => true,
        Some(t) => err2 >= t,
    }
}

fn to_vec3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn to_dvec(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

/// Initial conditions of a generator network.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub h0: DVector<f64>,
    pub c0: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn motor_loop(
    motor: &mut PcrnnParams,
    init: &InitialState,
    visual_traj: &[Vector2<f64>],
    cfg: &ArmConfig,
    opts: &AifOptions,
    rates: &LearningRates,
    perturb: Option<&[Vector3<f64>]>,
    learn: bool,
) -> Result<ControlTrace> {
    check_dim("motor output", 3, motor.out_dim)?;
    if let Some(p) = perturb {
        check_dim("perturbation length", visual_traj.len(), p.len())?;
    }
    let mut post = init.h0.clone();
    let mut c = init.c0.clone();
    let mut steps = Vec::with_capacity(visual_traj.len());
    for (t, o_v) in visual_traj.iter().enumerate() {
        let (h, x) = motor.predict_step(&post, &c)?;
        let mut m = to_vec3(&x);
        if let Some(p) = perturb {
            m += p[t];
        }
        let emitted = DVector::from_column_slice(m.as_slice());
        let (m_star, gate_active, err2) = gated_correct(&MotorCommand(m), o_v, cfg, opts);
        let state = motor.infer_step(&h, &emitted, &to_dvec(&m_star.0), &post, &c, rates, true)?;
        if learn {
            motor.apply_local_update(&post, &c, &state.h, &state.eps, &state.eps_h, rates)?;
        }
        steps.push(ControlStep {
            m,
            m_star: m_star.0,
            o_m: cfg.forward_kinematics(&m_star),
            o_v: *o_v,
            err2,
            gate_active,
        });
        post = state.h_post;
        c = state.c;
    }
    Ok(ControlTrace { steps })
}

/// Runs the motor network along a visual trajectory with the
/// visual-to-motor feedback pathway. `rates` are the motor network's
/// inference rates; its weights are not modified.
#[allow(clippy::too_many_arguments)]
pub fn controlled_rollout(
    motor: &PcrnnParams,
    init: &InitialState,
    visual_traj: &[Vector2<f64>],
    cfg: &ArmConfig,
    opts: &AifOptions,
    rates: &LearningRates,
    perturb: Option<&[Vector3<f64>]>,
) -> Result<ControlTrace> {
    let mut scratch = motor.clone();
    let inference_only = LearningRates {
        lambda_out: 0.0,
        lambda_p: 0.0,
        lambda_f: 0.0,
        lambda_c: 0.0,
        ..*rates
    };
    motor_loop(&mut scratch, init, visual_traj, cfg, opts, &inference_only, perturb, false)
}

/// Same loop as [`controlled_rollout`], with the local weight update applied
/// at every step using the corrected command as target.
pub fn controlled_training_pass(
    motor: &mut PcrnnParams,
    init: &InitialState,
    visual_traj: &[Vector2<f64>],
    cfg: &ArmConfig,
    opts: &AifOptions,
    rates: &LearningRates,
) -> Result<ControlTrace> {
    motor_loop(motor, init, visual_traj, cfg, opts, rates, None, true)
}

/// Motor-to-visual pathway: the visual network runs with the observed motor
/// outcomes as inference targets. `o_v` in the trace is the visual
/// network's prediction; `m`/`m_star` record the (unmodified) motor command.
pub fn corrected_visual_rollout(
    visual: &PcrnnParams,
    init: &InitialState,
    motor_commands: &[Vector3<f64>],
    cfg: &ArmConfig,
    opts: &AifOptions,
    rates: &LearningRates,
) -> Result<ControlTrace> {
    check_dim("visual output", 2, visual.out_dim)?;
    let mut post = init.h0.clone();
    let mut c = init.c0.clone();
    let mut steps = Vec::with_capacity(motor_commands.len());
    for m in motor_commands {
        let (h, x) = visual.predict_step(&post, &c)?;
        let o_v = Vector2::new(x[0], x[1]);
        let o_m = cfg.forward_kinematics(&MotorCommand(*m));
        let err2 = (o_m - o_v).norm_squared();
        let gate_active = gate_is_open(err2, opts.gate_threshold);
        let state = if gate_active {
            let target = DVector::from_column_slice(o_m.as_slice());
            visual.infer_step(&h, &x, &target, &post, &c, rates, true)?
        } else {
            visual.passive_state(h, x, &c)
        };
        steps.push(ControlStep {
            m: *m,
            m_star: *m,
            o_m,
            o_v,
            err2,
            gate_active,
        });
        post = state.h_post;
        c = state.c;
    }
    Ok(ControlTrace { steps })
}
