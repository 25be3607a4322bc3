//! Predictive-coding recurrent network with hidden states and hidden causes.
//!
//! One timestep runs a top-down prediction pass followed by an optional
//! bottom-up inference pass:
//!
//! ```text
//! h_t   = (1 - 1/tau) h*_{t-1} + (1/tau) W_f ((W_c' c_{t-1}) * (W_p' tanh h*_{t-1}))
//! x_t   = W_out tanh h_t
//! e_t   = x_t - x*_t
//! h*_t  = h_t - alpha_h W_out' e_t
//! e'_t  = h_t - h*_t
//! c_t   = c_{t-1} - alpha_c W_c ((W_f' e'_t) * (W_p' tanh h*_{t-1}))
//! ```
//!
//! The three-way recurrent tensor is never materialised during normal
//! operation; [`PcrnnParams::dense_recurrent_tensor`] exists to check the
//! factored pathway against an explicit contraction.
//!
//! Weights learn online from the same error neurons, so training never
//! unrolls the network through time.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::seeding::{normal_matrix, Rng};

/// Which form of the inference and learning updates to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientForm {
    /// Updates as printed: no `tanh'` factor in the hidden-state correction
    /// and no `1/tau` factor in the recurrent gradients.
    #[default]
    Printed,
    /// Exact gradients of the local losses, including both factors.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub alpha_h: f64,
    pub alpha_c: f64,
    pub lambda_out: f64,
    pub lambda_p: f64,
    pub lambda_f: f64,
    pub lambda_c: f64,
    pub gradient_form: GradientForm,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            alpha_h: 0.1,
            alpha_c: 0.01,
            lambda_out: 1e-3,
            lambda_p: 1e-3,
            lambda_f: 1e-3,
            lambda_c: 1e-3,
            gradient_form: GradientForm::Printed,
        }
    }
}

impl LearningRates {
    /// Pure prediction: no bottom-up pathway, no learning.
    pub fn prediction() -> Self {
        Self {
            alpha_h: 0.0,
            alpha_c: 0.0,
            lambda_out: 0.0,
            lambda_p: 0.0,
            lambda_f: 0.0,
            lambda_c: 0.0,
            gradient_form: GradientForm::Printed,
        }
    }

    pub fn with_inference(mut self, alpha_h: f64, alpha_c: f64) -> Self {
        self.alpha_h = alpha_h;
        self.alpha_c = alpha_c;
        self
    }

    /// Same learning rate for all four weight groups.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_out = lambda;
        self.lambda_p = lambda;
        self.lambda_f = lambda;
        self.lambda_c = lambda;
        self
    }

    pub fn without_learning(self) -> Self {
        self.with_lambda(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("alpha_h", self.alpha_h),
            ("alpha_c", self.alpha_c),
            ("lambda_out", self.lambda_out),
            ("lambda_p", self.lambda_p),
            ("lambda_f", self.lambda_f),
            ("lambda_c", self.lambda_c),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Learnable weights and fixed hyperparameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct PcrnnParams {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub out_dim: usize,
    pub tau: f64,
    /// Past hidden state to factor space, `n x d`.
    pub w_p: DMatrix<f64>,
    /// Factor space to future hidden state, `n x d`.
    pub w_f: DMatrix<f64>,
    /// Hidden causes to factor space, `p x d`.
    pub w_c: DMatrix<f64>,
    /// Readout, `out_dim x n`.
    pub w_out: DMatrix<f64>,
}

/// Variables of one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct PcrnnState {
    /// Prior hidden state.
    pub h: DVector<f64>,
    /// Posterior hidden state after the bottom-up correction.
    pub h_post: DVector<f64>,
    /// Hidden causes after this step.
    pub c: DVector<f64>,
    /// Output error `x - target`.
    pub eps: DVector<f64>,
    /// Hidden-state error `h - h_post`.
    pub eps_h: DVector<f64>,
    /// Prediction.
    pub x: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub outputs: Vec<DVector<f64>>,
    pub states: Vec<PcrnnState>,
}

/// Explicit `n x n x p` recurrent tensor, indexed (past, future, cause).
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentTensor {
    pub n: usize,
    pub p: usize,
    data: Vec<f64>,
}

impl RecurrentTensor {
    pub fn get(&self, past: usize, future: usize, cause: usize) -> f64 {
        self.data[(past * self.n + future) * self.p + cause]
    }

    /// `sum_{i,k} W[i, j, k] a_i c_k` for every future index `j`.
    pub fn contract(&self, past_activation: &DVector<f64>, causes: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |j, _| {
            let mut acc = 0.0;
            for i in 0..self.n {
                for k in 0..self.p {
                    acc += self.get(i, j, k) * past_activation[i] * causes[k];
                }
            }
            acc
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauseInference {
    pub c_final: DVector<f64>,
    /// Causes at the end of each presentation.
    pub history: Vec<DVector<f64>>,
}

fn tanh(v: &DVector<f64>) -> DVector<f64> {
    v.map(f64::tanh)
}

fn tanh_prime(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| {
        let t = x.tanh();
        1.0 - t * t
    })
}

/// Clip to `[0, 1]` and renormalise to sum 1. A vector that clips to all
/// zeros maps to the uniform distribution.
pub fn normalize_causes(c: &DVector<f64>) -> DVector<f64> {
    let clipped = c.map(|v| v.clamp(0.0, 1.0));
    let total: f64 = clipped.sum();
    if total > 0.0 {
        clipped / total
    } else {
        DVector::from_element(c.len(), 1.0 / c.len() as f64)
    }
}

/// Uniform causes `1/p`.
pub fn uniform_causes(p: usize) -> DVector<f64> {
    DVector::from_element(p, 1.0 / p as f64)
}

pub fn one_hot(p: usize, label: usize) -> DVector<f64> {
    let mut c = DVector::zeros(p);
    c[label] = 1.0;
    c
}

impl PcrnnParams {
    /// Randomly initialised network with the default factor size `d = n/2`.
    pub fn new(n: usize, p: usize, out_dim: usize, tau: f64, rng: &mut Rng) -> Result<Self> {
        Self::with_factor_dim(n, p, n / 2, out_dim, tau, rng)
    }

    /// Each matrix is drawn from `N(0, 1/fan_in)` where fan-in is the size of
    /// the vector it multiplies.
    pub fn with_factor_dim(
        n: usize,
        p: usize,
        d: usize,
        out_dim: usize,
        tau: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let std = |fan_in: usize| 1.0 / (fan_in.max(1) as f64).sqrt();
        let params = Self {
            n,
            p,
            d,
            out_dim,
            tau,
            w_p: normal_matrix(rng, n, d, std(n)),
            w_f: normal_matrix(rng, n, d, std(d)),
            w_c: normal_matrix(rng, p, d, std(p)),
            w_out: normal_matrix(rng, out_dim, n, std(n)),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros(n: usize, p: usize, d: usize, out_dim: usize, tau: f64) -> Self {
        Self {
            n,
            p,
            d,
            out_dim,
            tau,
            w_p: DMatrix::zeros(n, d),
            w_f: DMatrix::zeros(n, d),
            w_c: DMatrix::zeros(p, d),
            w_out: DMatrix::zeros(out_dim, n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.out_dim == 0 {
            return Err(Error::Config(format!(
                "network dimensions must be positive (n={}, p={}, out_dim={})",
                self.n, self.p, self.out_dim
            )));
        }
        if !(self.tau >= 1.0) || self.tau.is_nan() {
            return Err(Error::Config(format!("tau must be >= 1, got {}", self.tau)));
        }
        let shapes = [
            ("w_p", &self.w_p, self.n, self.d),
            ("w_f", &self.w_f, self.n, self.d),
            ("w_c", &self.w_c, self.p, self.d),
            ("w_out", &self.w_out, self.out_dim, self.n),
        ];
        for (name, m, rows, cols) in shapes {
            if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::Config(format!(
                    "{name} has shape {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("{name} contains non-finite entries")));
            }
        }
        Ok(())
    }

    fn check_state(&self, h: &DVector<f64>, c: &DVector<f64>) -> Result<()> {
        check_dim("hidden state", self.n, h.len())?;
        check_dim("hidden causes", self.p, c.len())
    }

    /// `W_c' c`, the causes projected into factor space.
    fn cause_gain(&self, c: &DVector<f64>) -> DVector<f64> {
        self.w_c.tr_mul(c)
    }

    /// `W_p' tanh(h*)`, the past state projected into factor space.
    fn past_factor(&self, h_post: &DVector<f64>) -> DVector<f64> {
        self.w_p.tr_mul(&tanh(h_post))
    }

    /// Top-down pass: prior hidden state and prediction from the previous
    /// posterior state and causes.
    pub fn predict_step(
        &self,
        prev_post: &DVector<f64>,
        prev_c: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_state(prev_post, prev_c)?;
        let factor = self.cause_gain(prev_c).component_mul(&self.past_factor(prev_post));
        let drive = &self.w_f * factor;
        let leak = 1.0 - 1.0 / self.tau;
        let h = prev_post * leak + drive / self.tau;
        let x = &self.w_out * tanh(&h);
        Ok((h, x))
    }

    /// Bottom-up pass for one timestep.
    #[allow(clippy::too_many_arguments)]
    pub fn infer_step(
        &self,
        h: &DVector<f64>,
        x: &DVector<f64>,
        target: &DVector<f64>,
        prev_post: &DVector<f64>,
        c_prev: &DVector<f64>,
        rates: &LearningRates,
        causes_on_simplex: bool,
    ) -> Result<PcrnnState> {
        self.check_state(h, c_prev)?;
        check_dim("hidden state", self.n, prev_post.len())?;
        check_dim("prediction", self.out_dim, x.len())?;
        check_dim("target", self.out_dim, target.len())?;
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("inference target contains non-finite values".into()));
        }

        let eps = x - target;
        let mut correction = self.w_out.tr_mul(&eps);
        if rates.gradient_form == GradientForm::Exact {
            correction.component_mul_assign(&tanh_prime(h));
        }
        let h_post = h - correction * rates.alpha_h;
        let eps_h = h - &h_post;

        let mut c = c_prev.clone();
        if rates.alpha_c != 0.0 {
            let factor = self.w_f.tr_mul(&eps_h).component_mul(&self.past_factor(prev_post));
            let mut step = (&self.w_c * factor) * rates.alpha_c;
            if rates.gradient_form == GradientForm::Exact {
                step /= self.tau;
            }
            c -= step;
        }
        if causes_on_simplex {
            c = normalize_causes(&c);
        }

        Ok(PcrnnState {
            h: h.clone(),
            h_post,
            c,
            eps,
            eps_h,
            x: x.clone(),
        })
    }

    /// Local online weight update from the errors of one timestep.
    #[allow(clippy::too_many_arguments)]
    pub fn apply_local_update(
        &mut self,
        prev_post: &DVector<f64>,
        c_prev: &DVector<f64>,
        h: &DVector<f64>,
        eps: &DVector<f64>,
        eps_h: &DVector<f64>,
        rates: &LearningRates,
    ) -> Result<()> {
        self.check_state(prev_post, c_prev)?;
        check_dim("hidden state", self.n, h.len())?;
        check_dim("hidden-state error", self.n, eps_h.len())?;
        check_dim("output error", self.out_dim, eps.len())?;

        let recurrent_scale = match rates.gradient_form {
            GradientForm::Printed => 1.0,
            GradientForm::Exact => 1.0 / self.tau,
        };
        let past = tanh(prev_post);
        let gain = self.cause_gain(c_prev);
        let past_factor = self.w_p.tr_mul(&past);
        let back = self.w_f.tr_mul(eps_h);

        let d_out = eps * tanh(h).transpose() * (-rates.lambda_out);
        let d_p = &past * gain.component_mul(&back).transpose() * (-rates.lambda_p * recurrent_scale);
        let d_f = eps_h * gain.component_mul(&past_factor).transpose()
            * (-rates.lambda_f * recurrent_scale);
        let d_c = c_prev * back.component_mul(&past_factor).transpose()
            * (-rates.lambda_c * recurrent_scale);

        self.w_out += d_out;
        self.w_p += d_p;
        self.w_f += d_f;
        self.w_c += d_c;
        Ok(())
    }

    /// Runs `steps` timesteps from `(h0, c0)`. With targets, each prediction
    /// is followed by an inference step; without, the posterior equals the
    /// prior and the run is pure generation.
    pub fn rollout(
        &self,
        h0: &DVector<f64>,
        c0: &DVector<f64>,
        steps: usize,
        targets: Option<&[DVector<f64>]>,
        rates: &LearningRates,
        causes_on_simplex: bool,
    ) -> Result<Rollout> {
        if steps == 0 {
            return Err(Error::Config("rollout needs at least one step".into()));
        }
        if let Some(t) = targets {
            check_dim("rollout targets", steps, t.len())?;
        }
        self.check_state(h0, c0)?;

        let mut outputs = Vec::with_capacity(steps);
        let mut states = Vec::with_capacity(steps);
        let mut post = h0.clone();
        let mut c = c0.clone();
        for t in 0..steps {
            let (h, x) = self.predict_step(&post, &c)?;
            let state = match targets {
                Some(targets) => {
                    self.infer_step(&h, &x, &targets[t], &post, &c, rates, causes_on_simplex)?
                }
                None => self.passive_state(h, x, &c),
            };
            post = state.h_post.clone();
            c = state.c.clone();
            outputs.push(state.x.clone());
            states.push(state);
        }
        Ok(Rollout { outputs, states })
    }

    pub(crate) fn passive_state(&self, h: DVector<f64>, x: DVector<f64>, c: &DVector<f64>) -> PcrnnState {
        PcrnnState {
            h_post: h.clone(),
            h,
            c: c.clone(),
            eps: DVector::zeros(self.out_dim),
            eps_h: DVector::zeros(self.n),
            x,
        }
    }

    /// One online training pass over a target sequence: predict, infer, and
    /// apply the local update at every timestep. Returns the mean Euclidean
    /// prediction error over the sequence.
    pub fn train_sequence(
        &mut self,
        h0: &DVector<f64>,
        c0: &DVector<f64>,
        targets: &[DVector<f64>],
        rates: &LearningRates,
        causes_on_simplex: bool,
    ) -> Result<f64> {
        self.check_state(h0, c0)?;
        let mut post = h0.clone();
        let mut c = c0.clone();
        let mut total = 0.0;
        for target in targets {
            let (h, x) = self.predict_step(&post, &c)?;
            let state = self.infer_step(&h, &x, target, &post, &c, rates, causes_on_simplex)?;
            total += state.eps.norm();
            self.apply_local_update(&post, &c, &state.h, &state.eps, &state.eps_h, rates)?;
            post = state.h_post;
            c = state.c;
        }
        Ok(total / targets.len().max(1) as f64)
    }

    /// Infers hidden causes for a target sequence by presenting it
    /// repeatedly. Causes start uniform and carry over between
    /// presentations; the hidden state restarts from `h0` each time.
    pub fn infer_causes(
        &self,
        h0: &DVector<f64>,
        targets: &[DVector<f64>],
        presentations: usize,
        rates: &LearningRates,
    ) -> Result<CauseInference> {
        if presentations == 0 {
            return Err(Error::Config("infer_causes needs at least one presentation".into()));
        }
        let mut c = uniform_causes(self.p);
        let mut history = Vec::with_capacity(presentations);
        for _ in 0..presentations {
            let run = self.rollout(h0, &c, targets.len(), Some(targets), rates, true)?;
            c = run
                .states
                .last()
                .map(|s| s.c.clone())
                .unwrap_or_else(|| c.clone());
            history.push(c.clone());
        }
        Ok(CauseInference { c_final: c, history })
    }

    /// Explicit recurrent tensor `W[i,j,k] = sum_l W_p[i,l] W_f[j,l] W_c[k,l]`.
    pub fn dense_recurrent_tensor(&self) -> RecurrentTensor {
        let (n, p) = (self.n, self.p);
        let mut data = vec![0.0; n * n * p];
        for i in 0..n {
            for j in 0..n {
                for k in 0..p {
                    let mut acc = 0.0;
                    for l in 0..self.d {
                        acc += self.w_p[(i, l)] * self.w_f[(j, l)] * self.w_c[(k, l)];
                    }
                    data[(i * n + j) * p + k] = acc;
                }
            }
        }
        RecurrentTensor { n, p, data }
    }

    /// Number of scalar weights.
    pub fn parameter_count(&self) -> usize {
        self.w_p.len() + self.w_f.len() + self.w_c.len() + self.w_out.len()
    }
}

#[cfg(test)]
mod tests;
