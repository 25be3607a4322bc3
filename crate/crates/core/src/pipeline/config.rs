//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::aif::{AifOptions, Direction};
use crate::arm::ArmConfig;
use crate::error::{Error, Result};
use crate::pcrnn::{GradientForm, LearningRates};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n: usize,
    /// Factor dimension; `n / 2` when unset.
    pub d: Option<usize>,
    pub tau_visual: f64,
    pub tau_motor: f64,
    /// Visual network rates during training. Causes stay clamped to the
    /// label, so `alpha_c` here only matters outside training.
    pub visual: LearningRates,
    pub motor: LearningRates,
    /// Inference rates for classifying a trajectory by its hidden causes.
    pub infer_alpha_h: f64,
    pub infer_alpha_c: f64,
    pub presentations: usize,
    pub iterations: usize,
    pub motor_iterations: usize,
    /// Standard deviation of the shared initial hidden state.
    pub h0_std: f64,
    pub seed: u64,
    pub arm: ArmConfig,
    pub aif: AifOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n: 50,
            d: None,
            tau_visual: 10.0,
            tau_motor: 5.0,
            visual: LearningRates {
                alpha_c: 0.0,
                ..LearningRates::default()
            }
            .with_lambda(0.01),
            motor: LearningRates {
                alpha_c: 0.0,
                ..LearningRates::default()
            }
            .with_lambda(0.1),
            infer_alpha_h: 0.1,
            infer_alpha_c: 0.5,
            presentations: 5,
            iterations: 10_000,
            motor_iterations: 40_000,
            h0_std: 1.0,
            seed: 1,
            arm: ArmConfig::default(),
            aif: AifOptions::default(),
        }
    }
}

/// Every key accepted by [`TrainConfig::set`], with a short description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("n", "hidden-state size of both networks"),
    ("d", "factor dimension (default n/2)"),
    ("tau", "time constant of both networks"),
    ("tau_v", "visual time constant"),
    ("tau_m", "motor time constant"),
    ("iterations", "visual training iterations"),
    ("motor_iterations", "motor training iterations"),
    ("seed", "run seed"),
    ("h0_std", "standard deviation of the shared initial hidden state"),
    ("alpha_h_v", "visual hidden-state inference rate"),
    ("alpha_c_v", "visual hidden-causes inference rate"),
    ("alpha_h_m", "motor hidden-state inference rate"),
    ("alpha_c_m", "motor hidden-causes inference rate"),
    ("lambda_v", "all four visual learning rates"),
    ("lambda_m", "all four motor learning rates"),
    ("lambda_out_v", "visual readout learning rate"),
    ("lambda_p_v", "visual past-factor learning rate"),
    ("lambda_f_v", "visual future-factor learning rate"),
    ("lambda_c_v", "visual cause-factor learning rate"),
    ("lambda_out_m", "motor readout learning rate"),
    ("lambda_p_m", "motor past-factor learning rate"),
    ("lambda_f_m", "motor future-factor learning rate"),
    ("lambda_c_m", "motor cause-factor learning rate"),
    ("gradient_form", "printed | exact"),
    ("infer_alpha_h", "hidden-state rate when classifying by inference"),
    ("infer_alpha_c", "hidden-causes rate when classifying by inference"),
    ("presentations", "target presentations when classifying"),
    ("alpha_m", "motor correction step size"),
    ("grad_steps", "correction gradient steps per timestep"),
    ("gate_threshold", "squared-error gate threshold, or \"none\""),
    ("direction", "visual_to_motor | motor_to_visual"),
    ("shoulder_x", "arm shoulder x"),
    ("shoulder_y", "arm shoulder y"),
    ("len0", "first link length"),
    ("len1", "second link length"),
    ("len2", "third link length"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .trim_matches('"')
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

impl TrainConfig {
    pub fn factor_dim(&self) -> usize {
        self.d.unwrap_or(self.n / 2)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let all = |rates: &mut LearningRates, v: f64| {
            rates.lambda_out = v;
            rates.lambda_p = v;
            rates.lambda_f = v;
            rates.lambda_c = v;
        };
        match key {
            "n" => self.n = parse(key, value)?,
            "d" => self.d = Some(parse(key, value)?),
            "tau" => {
                self.tau_visual = parse(key, value)?;
                self.tau_motor = self.tau_visual;
            }
            "tau_v" => self.tau_visual = parse(key, value)?,
            "tau_m" => self.tau_motor = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "motor_iterations" => self.motor_iterations = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "h0_std" => self.h0_std = parse(key, value)?,
            "alpha_h_v" => self.visual.alpha_h = parse(key, value)?,
            "alpha_c_v" => self.visual.alpha_c = parse(key, value)?,
            "alpha_h_m" => self.motor.alpha_h = parse(key, value)?,
            "alpha_c_m" => self.motor.alpha_c = parse(key, value)?,
            "lambda_v" => all(&mut self.visual, parse(key, value)?),
            "lambda_m" => all(&mut self.motor, parse(key, value)?),
            "lambda_out_v" => self.visual.lambda_out = parse(key, value)?,
            "lambda_p_v" => self.visual.lambda_p = parse(key, value)?,
            "lambda_f_v" => self.visual.lambda_f = parse(key, value)?,
            "lambda_c_v" => self.visual.lambda_c = parse(key, value)?,
            "lambda_out_m" => self.motor.lambda_out = parse(key, value)?,
            "lambda_p_m" => self.motor.lambda_p = parse(key, value)?,
            "lambda_f_m" => self.motor.lambda_f = parse(key, value)?,
            "lambda_c_m" => self.motor.lambda_c = parse(key, value)?,
            "gradient_form" => {
                let form = match value.trim().trim_matches('"') {
                    "printed" => GradientForm::Printed,
                    "exact" => GradientForm::Exact,
                    other => return Err(Error::Config(format!("gradient_form: unknown value {other:?}"))),
                };
                self.visual.gradient_form = form;
                self.motor.gradient_form = form;
            }
            "infer_alpha_h" => self.infer_alpha_h = parse(key, value)?,
            "infer_alpha_c" => self.infer_alpha_c = parse(key, value)?,
            "presentations" => self.presentations = parse(key, value)?,
            "alpha_m" => self.aif.alpha_m = parse(key, value)?,
            "grad_steps" => self.aif.grad_steps = parse(key, value)?,
            "gate_threshold" => {
                let v = value.trim().trim_matches('"');
                self.aif.gate_threshold = if v == "none" { None } else { Some(parse(key, v)?) };
            }
            "direction" => self.aif.direction = value.trim().trim_matches('"').parse::<Direction>()?,
            "shoulder_x" => self.arm.shoulder.x = parse(key, value)?,
            "shoulder_y" => self.arm.shoulder.y = parse(key, value)?,
            "len0" => self.arm.lengths[0] = parse(key, value)?,
            "len1" => self.arm.lengths[1] = parse(key, value)?,
            "len2" => self.arm.lengths[2] = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` (as given on the command line).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    /// Parses a config file. Each non-empty line is `key = value`; `#`
    /// starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        for tau in [self.tau_visual, self.tau_motor] {
            if !(tau >= 1.0) {
                return Err(Error::Config(format!("tau must be >= 1, got {tau}")));
            }
        }
        if self.presentations == 0 {
            return Err(Error::Config("presentations must be >= 1".into()));
        }
        if !(self.h0_std.is_finite() && self.h0_std >= 0.0) {
            return Err(Error::Config("h0_std must be finite and >= 0".into()));
        }
        for v in [self.infer_alpha_h, self.infer_alpha_c] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config("inference rates must be finite and >= 0".into()));
            }
        }
        self.visual.validate()?;
        self.motor.validate()?;
        self.aif.validate()?;
        ArmConfig::new(self.arm.shoulder, self.arm.lengths)?;
        Ok(())
    }

    /// Canonical text form, readable by [`TrainConfig::parse_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("n", self.n.to_string());
        line("d", self.factor_dim().to_string());
        line("tau_v", format!("{:?}", self.tau_visual));
        line("tau_m", format!("{:?}", self.tau_motor));
        line("iterations", self.iterations.to_string());
        line("motor_iterations", self.motor_iterations.to_string());
        line("seed", self.seed.to_string());
        line("h0_std", format!("{:?}", self.h0_std));
        for (suffix, r) in [("v", &self.visual), ("m", &self.motor)] {
            line(&format!("alpha_h_{suffix}"), format!("{:?}", r.alpha_h));
            line(&format!("alpha_c_{suffix}"), format!("{:?}", r.alpha_c));
            line(&format!("lambda_out_{suffix}"), format!("{:?}", r.lambda_out));
            line(&format!("lambda_p_{suffix}"), format!("{:?}", r.lambda_p));
            line(&format!("lambda_f_{suffix}"), format!("{:?}", r.lambda_f));
            line(&format!("lambda_c_{suffix}"), format!("{:?}", r.lambda_c));
        }
        let form = match self.visual.gradient_form {
            GradientForm::Printed => "printed",
            GradientForm::Exact => "exact",
        };
        line("gradient_form", form.into());
        line("infer_alpha_h", format!("{:?}", self.infer_alpha_h));
        line("infer_alpha_c", format!("{:?}", self.infer_alpha_c));
        line("presentations", self.presentations.to_string());
        line("alpha_m", format!("{:?}", self.aif.alpha_m));
        line("grad_steps", self.aif.grad_steps.to_string());
        line(
            "gate_threshold",
            self.aif.gate_threshold.map_or("none".into(), |t| format!("{t:?}")),
        );
        line("direction", self.aif.direction.to_string());
        line("shoulder_x", format!("{:?}", self.arm.shoulder.x));
        line("shoulder_y", format!("{:?}", self.arm.shoulder.y));
        line("len0", format!("{:?}", self.arm.lengths[0]));
        line("len1", format!("{:?}", self.arm.lengths[1]));
        line("len2", format!("{:?}", self.arm.lengths[2]));
        out
    }
}
