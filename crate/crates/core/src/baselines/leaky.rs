//! Leaky-integrator RNN with per-unit time constants, hand-derived
//! backpropagation through time, and an Adam optimizer over its weights.
//!
//! Dynamics, for `t = 1..=T`:
//!
//! ```text
//! a_t = tanh(u_t)
//! y_t = W_out a_t + b_out
//! u_t = (1 - k) * u_{t-1} + k * (W a_{t-1} + W_fb y_{t-1} + W_in c + b)
//! ```
//!
//! with `k = 1 / tau` per unit and a constant input `c`. Only the units
//! flagged in `fb_mask` receive output feedback.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::seeding::{normal_matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct LeakyRnn {
    /// Per-unit leak rates `1 / tau`.
    pub kappa: DVector<f64>,
    pub w: DMatrix<f64>,
    pub w_in: DMatrix<f64>,
    pub w_fb: DMatrix<f64>,
    /// 1 for units that read the previous output, 0 otherwise.
    pub fb_mask: DVector<f64>,
    pub b: DVector<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub input: DVector<f64>,
    /// `u_0..=u_T`.
    pub u: Vec<DVector<f64>>,
    pub a: Vec<DVector<f64>>,
    /// `y_0..=y_T`; `y_0` only feeds back into the first step.
    pub y: Vec<DVector<f64>>,
}

impl Tape {
    /// `y_1..=y_T`.
    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.y[1..]
    }
}

/// Gradient of a loss with respect to every weight and the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: DMatrix<f64>,
    pub w_in: DMatrix<f64>,
    pub w_fb: DMatrix<f64>,
    pub b: DVector<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
    pub u0: DVector<f64>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        [
            self.w.as_slice(),
            self.w_in.as_slice(),
            self.w_fb.as_slice(),
            self.b.as_slice(),
            self.w_out.as_slice(),
            self.b_out.as_slice(),
        ]
        .concat()
    }
}

impl LeakyRnn {
    /// Random weights scaled by fan-in. `taus` fixes the state size.
    pub fn new(taus: &[f64], inputs: usize, outputs: usize, feedback: &[bool], rng: &mut Rng) -> Result<Self> {
        let n = taus.len();
        check_dim("feedback mask", n, feedback.len())?;
        if n == 0 || outputs == 0 {
            return Err(Error::Config("leaky RNN needs at least one unit and one output".into()));
        }
        if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t >= 1.0)) {
            return Err(Error::Config(format!("time constants must be >= 1, got {t}")));
        }
        let std = |fan_in: usize| 1.0 / (fan_in.max(1) as f64).sqrt();
        let fb_mask = DVector::from_iterator(n, feedback.iter().map(|&f| f as u8 as f64));
        let mut w_fb = normal_matrix(rng, n, outputs, std(outputs));
        mask_rows(&mut w_fb, &fb_mask);
        Ok(Self {
            kappa: DVector::from_iterator(n, taus.iter().map(|t| 1.0 / t)),
            w: normal_matrix(rng, n, n, std(n)),
            w_in: normal_matrix(rng, n, inputs, std(inputs)),
            w_fb,
            fb_mask,
            b: DVector::zeros(n),
            w_out: normal_matrix(rng, outputs, n, std(n)),
            b_out: DVector::zeros(outputs),
        })
    }

    pub fn n(&self) -> usize {
        self.kappa.len()
    }

    pub fn inputs(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn forward(&self, u0: &DVector<f64>, input: &DVector<f64>, steps: usize) -> Result<Tape> {
        check_dim("initial state", self.n(), u0.len())?;
        check_dim("input", self.inputs(), input.len())?;
        let drive_in = &self.w_in * input + &self.b;
        let leak = self.kappa.map(|k| 1.0 - k);
        let mut tape = Tape {
            input: input.clone(),
            u: Vec::with_capacity(steps + 1),
            a: Vec::with_capacity(steps + 1),
            y: Vec::with_capacity(steps + 1),
        };
        let mut u = u0.clone();
        for t in 0..=steps {
            let a = u.map(f64::tanh);
            let y = &self.w_out * &a + &self.b_out;
            if t < steps {
                let drive = &self.w * &a + &self.w_fb * &y + &drive_in;
                let next = leak.component_mul(&u) + self.kappa.component_mul(&drive);
                tape.u.push(std::mem::replace(&mut u, next));
            } else {
                tape.u.push(u.clone());
            }
            tape.a.push(a);
            tape.y.push(y);
        }
        Ok(tape)
    }

    /// Backpropagation through the whole unrolled sequence. `dy[t - 1]` is
    /// the loss gradient with respect to `y_t`.
    pub fn backward(&self, tape: &Tape, dy: &[DVector<f64>]) -> Result<Gradients> {
        let steps = tape.u.len() - 1;
        check_dim("output gradients", steps, dy.len())?;
        let n = self.n();
        let mut g = Gradients {
            w: DMatrix::zeros(n, n),
            w_in: DMatrix::zeros(n, self.inputs()),
            w_fb: DMatrix::zeros(n, self.outputs()),
            b: DVector::zeros(n),
            w_out: DMatrix::zeros(self.outputs(), n),
            b_out: DVector::zeros(self.outputs()),
            u0: DVector::zeros(n),
        };
        let leak = self.kappa.map(|k| 1.0 - k);
        // `delta` holds dL/du_{t+1} while visiting step t.
        let mut delta = DVector::zeros(n);
        for t in (0..=steps).rev() {
            let carry = self.kappa.component_mul(&delta);
            let mut gy = if t >= 1 {
                dy[t - 1].clone()
            } else {
                DVector::zeros(self.outputs())
            };
            check_dim("output gradient", self.outputs(), gy.len())?;
            if t < steps {
                gy += self.w_fb.tr_mul(&carry);
                g.w += &carry * tape.a[t].transpose();
                g.w_fb += &carry * tape.y[t].transpose();
                g.w_in += &carry * tape.input.transpose();
                g.b += &carry;
            }
            g.w_out += &gy * tape.a[t].transpose();
            g.b_out += &gy;
            let back = self.w_out.tr_mul(&gy) + self.w.tr_mul(&carry);
            let slope = tape.a[t].map(|a| 1.0 - a * a);
            delta = slope.component_mul(&back) + leak.component_mul(&delta);
        }
        mask_rows(&mut g.w_fb, &self.fb_mask);
        g.u0 = delta;
        Ok(g)
    }

    pub fn parameter_count(&self) -> usize {
        self.w.len() + self.w_in.len() + self.w_fb.len() + self.b.len() + self.w_out.len() + self.b_out.len()
    }

    fn flat_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w.as_mut_slice(),
            self.w_in.as_mut_slice(),
            self.w_fb.as_mut_slice(),
            self.b.as_mut_slice(),
            self.w_out.as_mut_slice(),
            self.b_out.as_mut_slice(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        [&self.w, &self.w_in, &self.w_fb, &self.w_out]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.b.iter().chain(self.b_out.iter()).all(|v| v.is_finite())
    }
}

fn mask_rows(m: &mut DMatrix<f64>, mask: &DVector<f64>) {
    for (i, &keep) in mask.iter().enumerate() {
        if keep == 0.0 {
            m.row_mut(i).fill(0.0);
        }
    }
}

/// Adam over the flattened weights of a [`LeakyRnn`], with global-norm
/// gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub clip: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, clip: f64, params: usize) -> Self {
        Self {
            lr,
            clip,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
        }
    }

    pub fn step(&mut self, net: &mut LeakyRnn, grads: &Gradients) {
        let mut flat = grads.flat();
        let norm = flat.iter().map(|g| g * g).sum::<f64>().sqrt();
        if self.clip > 0.0 && norm > self.clip {
            flat.iter_mut().for_each(|g| *g *= self.clip / norm);
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for block in net.flat_mut() {
            for w in block.iter_mut() {
                let g = flat[k];
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                *w -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
                k += 1;
            }
        }
        mask_rows(&mut net.w_fb, &net.fb_mask);
    }
}

/// `0.5 * sum ||mask * (y_t - target_t)||^2` and its gradient per output.
pub fn masked_squared_error(
    outputs: &[DVector<f64>],
    targets: &[DVector<f64>],
    mask: &DVector<f64>,
) -> Result<(f64, Vec<DVector<f64>>)> {
    check_dim("target length", outputs.len(), targets.len())?;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (y, t) in outputs.iter().zip(targets) {
        check_dim("target", y.len(), t.len())?;
        let r = (y - t).component_mul(mask);
        loss += 0.5 * r.norm_squared();
        grads.push(r);
    }
    Ok((loss, grads))
}
