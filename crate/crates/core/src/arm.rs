//! Kinematic model of the three-link planar arm.
//!
//! Joint angles are relative: link `k` points along `phi_k = theta_0 + ... + theta_k`,
//! so `theta = (0, 0, 0)` is a straight arm along `+x`.

use nalgebra::{Matrix2x3, Vector2, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmConfig {
    pub shoulder: Vector2<f64>,
    pub lengths: [f64; 3],
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self {
            shoulder: Vector2::new(-6.0, 6.0),
            lengths: [6.0, 4.0, 2.0],
        }
    }
}

/// Joint angles `(theta_0, theta_1, theta_2)` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorCommand(pub Vector3<f64>);

impl MotorCommand {
    pub fn new(t0: f64, t1: f64, t2: f64) -> Self {
        Self(Vector3::new(t0, t1, t2))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }
}

impl From<Vector3<f64>> for MotorCommand {
    fn from(v: Vector3<f64>) -> Self {
        Self(v)
    }
}

impl ArmConfig {
    pub fn new(shoulder: Vector2<f64>, lengths: [f64; 3]) -> Result<Self> {
        let cfg = Self { shoulder, lengths };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Config(format!(
                "arm link lengths must be positive, got {:?}",
                self.lengths
            )));
        }
        if !(self.shoulder.x.is_finite() && self.shoulder.y.is_finite()) {
            return Err(Error::Config("arm shoulder position must be finite".into()));
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.lengths.iter().sum()
    }

    fn absolute_angles(m: &MotorCommand) -> [f64; 3] {
        let t = m.0;
        [t[0], t[0] + t[1], t[0] + t[1] + t[2]]
    }

    /// End-effector position.
    pub fn forward_kinematics(&self, m: &MotorCommand) -> Vector2<f64> {
        let phi = Self::absolute_angles(m);
        let mut pos = self.shoulder;
        for k in 0..3 {
            pos += self.lengths[k] * Vector2::new(phi[k].cos(), phi[k].sin());
        }
        pos
    }

    /// `d position / d theta`. Column `j` sums the sensitivity of every link
    /// at or after joint `j`.
    pub fn jacobian(&self, m: &MotorCommand) -> Matrix2x3<f64> {
        let phi = Self::absolute_angles(m);
        let mut jac = Matrix2x3::zeros();
        for j in 0..3 {
            for k in j..3 {
                jac[(0, j)] -= self.lengths[k] * phi[k].sin();
                jac[(1, j)] += self.lengths[k] * phi[k].cos();
            }
        }
        jac
    }

    /// Joint angles reaching `target`, by gradient descent on the squared
    /// distance from `start`. Targets out of reach converge to the closest
    /// point on the workspace boundary.
    pub fn inverse_kinematics(&self, target: &Vector2<f64>, start: MotorCommand, iterations: usize) -> MotorCommand {
        let step = 0.3 / (self.reach() * self.reach());
        let mut m = start;
        for _ in 0..iterations {
            let residual = self.forward_kinematics(&m) - target;
            m = MotorCommand(m.0 - self.jacobian(&m).transpose() * residual * (2.0 * step));
        }
        m
    }

    /// Shoulder, elbow, wrist and end-effector positions.
    pub fn joint_positions(&self, m: &MotorCommand) -> [Vector2<f64>; 4] {
        let phi = Self::absolute_angles(m);
        let mut out = [self.shoulder; 4];
        for k in 0..3 {
            out[k + 1] = out[k] + self.lengths[k] * Vector2::new(phi[k].cos(), phi[k].sin());
        }
        out
    }
}
