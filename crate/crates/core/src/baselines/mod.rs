//! Comparison models trained by backpropagation through time: a
//! two-timescale RNN learning by motor babbling and imitation, and a plain
//! RNN trained through the arm's forward model. Plus the capacity sweep
//! that compares them with the predictive-coding agent.

pub mod leaky;
pub mod mtrnn;
pub mod rnnfm;

use std::fmt::Write as _;

use nalgebra::Vector2;
use rayon::prelude::*;

pub use mtrnn::{babbling_phase, home_posture, imitation_phase, init_mtrnn, train_mtrnn, MtrnnParams, TrainedMtrnn};
pub use rnnfm::RnnFm;

use crate::data::{synth_letters, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::experiments::{mean, std_error, SeedRun};
use crate::pipeline::{eval_reconstruction, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineBudget {
    pub babbling_iterations: usize,
    pub imitation_iterations: usize,
    /// Gradient steps per initial-state inference.
    pub infer_steps: usize,
    pub infer_lr: f64,
    pub rnnfm_iterations: usize,
    /// Adam step size for weight training.
    pub lr: f64,
    pub imitation_lr: f64,
    /// Global gradient-norm clip (0 disables).
    pub clip: f64,
    pub h0_std: f64,
    /// Random initial states screened before the first inference.
    pub h0_candidates: usize,
}

impl Default for BaselineBudget {
    fn default() -> Self {
        Self {
            babbling_iterations: 3000,
            imitation_iterations: 2000,
            infer_steps: 200,
            infer_lr: 0.01,
            rnnfm_iterations: 3000,
            lr: 1e-4,
            imitation_lr: 3e-5,
            clip: 10.0,
            h0_std: 1.0,
            h0_candidates: 64,
        }
    }
}

impl BaselineBudget {
    /// Reduced imitation budget that keeps a full capacity sweep within
    /// minutes on one core.
    pub fn desk() -> Self {
        Self {
            imitation_iterations: 100,
            infer_steps: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lr", self.lr), ("imitation_lr", self.imitation_lr), ("infer_lr", self.infer_lr), ("h0_std", self.h0_std)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("baseline {name} must be > 0, got {v}")));
            }
        }
        if !(self.clip.is_finite() && self.clip >= 0.0) {
            return Err(Error::Config(format!("baseline clip must be >= 0, got {}", self.clip)));
        }
        Ok(())
    }
}

/// Train-split class means: the imitation targets of the baselines.
pub fn class_targets(ds: &Dataset) -> Result<Vec<Vec<Vector2<f64>>>> {
    (0..ds.p())
        .map(|l| {
            ds.class_mean(l)
                .ok_or_else(|| Error::Dataset(format!("class {} has no training trajectories", ds.class_names[l])))
        })
        .collect()
}

pub const CAPACITY_GRID: [usize; 5] = [1, 2, 4, 6, 8];

/// Model names in the capacity table.
pub mod model {
    pub const PC_RNN: &str = "pc_rnn";
    pub const PC_RNN_NATURAL: &str = "pc_rnn_natural";
    pub const MTRNN: &str = "mtrnn";
    pub const RNN_FM: &str = "rnn_fm";
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityRow {
    pub model: String,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub test_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub rows: Vec<CapacityRow>,
}

impl CapacityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,n,p,seed,test_error\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.model, r.n, r.p, r.seed, r.test_error);
        }
        out
    }

    pub fn errors(&self, model: &str, n: usize, p: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.n == n && r.p == p)
            .map(|r| r.test_error)
            .collect()
    }

    pub fn mean(&self, model: &str, n: usize, p: usize) -> f64 {
        mean(&self.errors(model, n, p))
    }

    /// Mean and standard error per (model, n, p).
    pub fn summary_csv(&self) -> String {
        let mut keys: Vec<(String, usize, usize)> = Vec::new();
        for r in &self.rows {
            let key = (r.model.clone(), r.n, r.p);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let mut out = String::from("model,n,p,test_error_mean,test_error_se\n");
        for (m, n, p) in keys {
            let errs = self.errors(&m, n, p);
            let _ = writeln!(out, "{m},{n},{p},{},{}", mean(&errs), std_error(&errs));
        }
        out
    }
}

/// Which models the capacity sweep trains, and with what sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityPlan {
    pub classes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub per_class: usize,
    pub mtrnn_sizes: Vec<usize>,
    pub rnnfm_size: Option<usize>,
    pub budget: BaselineBudget,
}

impl Default for CapacityPlan {
    fn default() -> Self {
        Self {
            classes: CAPACITY_GRID.to_vec(),
            seeds: vec![1, 2, 3],
            per_class: 40,
            mtrnn_sizes: vec![50, 100],
            rnnfm_size: Some(50),
            budget: BaselineBudget::desk(),
        }
    }
}

/// Test reconstruction error of every model for every class count and
/// seed. The predictive-coding agent is scored both with its feedback
/// control on and on its natural (open-loop) trajectory.
pub fn run_capacity(cfg: &TrainConfig, plan: &CapacityPlan) -> Result<CapacityReport> {
    plan.budget.validate()?;
    let cells: Vec<(usize, u64)> = plan
        .classes
        .iter()
        .flat_map(|&p| plan.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(p, seed)| capacity_cell(cfg, plan, p, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(CapacityReport {
        rows: rows.into_iter().flatten().collect(),
    })
}

fn capacity_cell(cfg: &TrainConfig, plan: &CapacityPlan, p: usize, seed: u64) -> Result<Vec<CapacityRow>> {
    let ds = synth_letters(p, plan.per_class, seed)?;
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let steps = ds.train.first().map_or(0, |t| t.len());
    let row = |model: &str, n: usize, test_error: f64| CapacityRow {
        model: model.to_owned(),
        n,
        p,
        seed,
        test_error,
    };
    let mut rows = Vec::new();

    let run = SeedRun::train(ds.clone(), &cfg)?;
    let goals = run.goals()?;
    let mut controlled = Vec::new();
    let mut natural = Vec::new();
    for (label, goal) in goals.iter().enumerate() {
        let out = run.agent.motor_runs(label, goal, &cfg, None)?;
        controlled.push(out.controlled.executed());
        natural.push(out.uncontrolled.executed());
    }
    rows.push(row(model::PC_RNN, cfg.n, eval_reconstruction(&controlled, &ds.test)?));
    rows.push(row(model::PC_RNN_NATURAL, cfg.n, eval_reconstruction(&natural, &ds.test)?));

    let targets = class_targets(&ds)?;
    for &n in &plan.mtrnn_sizes {
        let trained = train_mtrnn(n, &cfg.arm, &targets, &plan.budget, seed)?;
        let paths = (0..p).map(|l| trained.executed(l, steps, &cfg.arm)).collect::<Result<Vec<_>>>()?;
        rows.push(row(model::MTRNN, n, eval_reconstruction(&paths, &ds.test)?));
    }
    if let Some(n) = plan.rnnfm_size {
        let mut fm = RnnFm::new(n, p, cfg.tau_motor, &cfg.arm, seed)?;
        fm.train(&targets, &plan.budget)?;
        let paths = (0..p).map(|l| fm.executed(l, steps)).collect::<Result<Vec<_>>>()?;
        rows.push(row(model::RNN_FM, n, eval_reconstruction(&paths, &ds.test)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
