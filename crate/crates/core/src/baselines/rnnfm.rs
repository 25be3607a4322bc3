//! Plain leaky RNN emitting motor commands, trained by backpropagating the
//! visual error through the arm's forward model. The class enters as a
//! constant one-hot input.

use nalgebra::{DVector, Vector2, Vector3};

use super::leaky::{Adam, LeakyRnn, Tape};
use super::mtrnn::home_posture;
use super::BaselineBudget;
use crate::arm::{ArmConfig, MotorCommand};
use crate::error::{check_dim, Error, Result};
use crate::pcrnn::one_hot;
use crate::seeding::{normal_vector, rng, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct RnnFm {
    pub net: LeakyRnn,
    pub h0: DVector<f64>,
    pub arm: ArmConfig,
}

fn command(y: &DVector<f64>) -> MotorCommand {
    MotorCommand(Vector3::new(y[0], y[1], y[2]))
}

impl RnnFm {
    pub fn new(n: usize, p: usize, tau: f64, arm: &ArmConfig, seed: u64) -> Result<Self> {
        let mut r = rng(seed, stream::RNNFM);
        let mut net = LeakyRnn::new(&vec![tau; n], p, 3, &vec![false; n], &mut r)?;
        net.b_out = DVector::from_column_slice(home_posture(arm).0.as_slice());
        let h0 = normal_vector(&mut r, n, 1.0);
        Ok(Self { net, h0, arm: *arm })
    }

    pub fn p(&self) -> usize {
        self.net.inputs()
    }

    fn run(&self, label: usize, steps: usize) -> Result<Tape> {
        if label >= self.p() {
            return Err(Error::Config(format!("class {label} out of range for p = {}", self.p())));
        }
        self.net.forward(&self.h0, &one_hot(self.p(), label), steps)
    }

    pub fn executed(&self, label: usize, steps: usize) -> Result<Vec<Vector2<f64>>> {
        let tape = self.run(label, steps)?;
        Ok(tape.outputs().iter().map(|y| self.arm.forward_kinematics(&command(y))).collect())
    }

    /// `0.5 * sum_t ||f(m_t) - target_t||^2` and its gradient with respect
    /// to every motor output, `J(m_t)' (f(m_t) - target_t)`.
    pub fn visual_loss(&self, tape: &Tape, target: &[Vector2<f64>]) -> Result<(f64, Vec<DVector<f64>>)> {
        check_dim("target length", tape.outputs().len(), target.len())?;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(target.len());
        for (y, o) in tape.outputs().iter().zip(target) {
            let m = command(y);
            let r = self.arm.forward_kinematics(&m) - o;
            loss += 0.5 * r.norm_squared();
            let g = self.arm.jacobian(&m).transpose() * r;
            grads.push(DVector::from_column_slice(g.as_slice()));
        }
        Ok((loss, grads))
    }

    pub fn loss_and_grads(&self, label: usize, target: &[Vector2<f64>]) -> Result<(f64, super::leaky::Gradients)> {
        let tape = self.run(label, target.len())?;
        let (loss, dy) = self.visual_loss(&tape, target)?;
        Ok((loss, self.net.backward(&tape, &dy)?))
    }

    /// Cycles through the class targets, one optimizer step each.
    pub fn train(&mut self, targets: &[Vec<Vector2<f64>>], budget: &BaselineBudget) -> Result<Vec<f64>> {
        check_dim("class targets", self.p(), targets.len())?;
        let mut opt = Adam::new(budget.lr, budget.clip, self.net.parameter_count());
        let mut curve = Vec::with_capacity(budget.rnnfm_iterations);
        for it in 0..budget.rnnfm_iterations {
            let label = it % targets.len();
            let (loss, grads) = self.loss_and_grads(label, &targets[label])?;
            opt.step(&mut self.net, &grads);
            if !loss.is_finite() || !self.net.is_finite() {
                return Err(Error::Divergence(format!("RNN+FM training diverged at iteration {it}")));
            }
            curve.push(loss);
        }
        Ok(curve)
    }
}
