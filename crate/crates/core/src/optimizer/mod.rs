//! Muon with EMA, one-batch and two-batch variance-reduced momentum.

mod momentum;
mod schedule;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{newton_schulz, polar_with_nuclear, LinalgError, Matrix, NsCoefficients, DEFAULT_RANK_TOL};
use crate::problems::{Problem, ProblemError, Sample};

pub use momentum::{
    momentum_update_mvr1, momentum_update_mvr2, momentum_update_practical,
    momentum_update_two_accumulator,
};
pub use schedule::{schedule_eval, Hyper, Schedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("shape mismatch: state is {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite parameters after step {t}")]
    NonFiniteState { t: u64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid weight decay {0}: must be finite and >= 0")]
    InvalidWeightDecay(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuonOption {
    /// EMA momentum: MVR1 with the correction forced off.
    Mvr1Gamma0,
    /// Correction `g_t − g_{t−1}` across two different samples.
    Mvr1,
    /// Correction `∇f(X_t; ξ_t) − ∇f(X_{t−1}; ξ_t)` under one sample.
    Mvr2,
    /// `C = μC + g`, `M = μC + g` with `μ = β_t`.
    Practical,
    /// Plain stochastic gradient steps without momentum or orthogonalization.
    Sgd,
}

impl MuonOption {
    pub const ALL: [MuonOption; 5] = [
        MuonOption::Mvr1Gamma0,
        MuonOption::Mvr1,
        MuonOption::Mvr2,
        MuonOption::Practical,
        MuonOption::Sgd,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MuonOption::Mvr1Gamma0 => "mvr1_gamma0",
            MuonOption::Mvr1 => "mvr1",
            MuonOption::Mvr2 => "mvr2",
            MuonOption::Practical => "practical",
            MuonOption::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Orthogonalizer {
    #[default]
    Exact,
    NewtonSchulz { steps: usize, coeffs: NsCoefficients },
}

impl Orthogonalizer {
    pub fn newton_schulz(steps: usize) -> Self {
        Orthogonalizer::NewtonSchulz {
            steps,
            coeffs: NsCoefficients::default(),
        }
    }

    /// Returns `(O, ⟨M, O⟩)`.
    pub fn apply(&self, m: &Matrix) -> Result<(Matrix, f64), LinalgError> {
        match *self {
            Orthogonalizer::Exact => polar_with_nuclear(m, DEFAULT_RANK_TOL),
            Orthogonalizer::NewtonSchulz { steps, coeffs } => {
                if m.is_zero() {
                    return Ok((Matrix::zeros(m.rows(), m.cols()), 0.0));
                }
                let o = newton_schulz(m, steps, coeffs)?;
                let inner = m.dot(&o)?;
                Ok((o, inner))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuonConfig {
    pub option: MuonOption,
    pub schedule: Schedule,
    #[serde(default)]
    pub orthogonalizer: Orthogonalizer,
    #[serde(default)]
    pub weight_decay: f64,
}

impl MuonConfig {
    pub fn new(option: MuonOption, schedule: Schedule) -> Self {
        Self {
            option,
            schedule,
            orthogonalizer: Orthogonalizer::Exact,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        self.schedule.validate()?;
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(OptimizerError::InvalidWeightDecay(self.weight_decay));
        }
        Ok(())
    }
}

/// Mutable optimizer state. `m`, `prev_grad` and `c` start at zero, which is
/// the `M_0 = 0`, `∇f(X_0; ξ) = 0` initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct MuonState {
    pub x: Matrix,
    pub m: Matrix,
    pub prev_grad: Matrix,
    pub c: Matrix,
    /// `X_{t−1}`; equals `x` before the first step.
    pub x_prev: Matrix,
    pub t: u64,
    pub prev_beta: f64,
}

impl MuonState {
    pub fn new(x: Matrix) -> Self {
        let (r, c) = x.shape();
        Self {
            m: Matrix::zeros(r, c),
            prev_grad: Matrix::zeros(r, c),
            c: Matrix::zeros(r, c),
            x_prev: x.clone(),
            x,
            t: 1,
            prev_beta: 0.0,
        }
    }
}

/// Telemetry for one step, measured at `X_t` before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub f_value: f64,
    pub grad_true_fnorm: f64,
    /// For the practical form, every momentum field refers to `(1 − μ) M_t`,
    /// the rescaling under which it estimates the gradient.
    pub momentum_fnorm: f64,
    /// `‖M_t − ∇f(X_t)‖_F`.
    pub momentum_error_fnorm: f64,
    pub update_fnorm: f64,
    /// `⟨M_t, O_t⟩`, which equals `‖M_t‖_*` for the exact polar factor.
    pub duality_inner: f64,
}

/// Mutable intermediates of a step, exposed for the verification layer.
#[derive(Debug, Clone)]
pub struct StepInternals {
    pub hyper: Hyper,
    pub sample: Sample,
    pub grad: Matrix,
    /// `∇f(X_{t−1}; ξ_t)` for MVR2, the cached one for MVR1, zero otherwise.
    pub grad_reference: Matrix,
    pub momentum: Matrix,
    pub direction: Matrix,
    pub duality_inner: f64,
}

/// One optimizer instance: configuration plus state.
#[derive(Debug, Clone)]
pub struct Muon {
    pub config: MuonConfig,
    pub state: MuonState,
}

impl Muon {
    pub fn new(config: MuonConfig, x0: Matrix) -> Result<Self, OptimizerError> {
        config.validate()?;
        Ok(Self {
            config,
            state: MuonState::new(x0),
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.state.x
    }

    /// Steps once and returns telemetry. Evaluates the true gradient.
    pub fn step<P: Problem + ?Sized>(
        &mut self,
        problem: &P,
        rng: &mut dyn RngCore,
    ) -> Result<StepRecord, OptimizerError> {
        let x_t = self.state.x.clone();
        let f_value = problem.value(&x_t);
        let grad = problem.gradient(&x_t);
        let inner = self.step_internals(problem, rng)?;
        // the practical accumulator estimates ∇f only after rescaling by 1 − μ
        let scale = if self.config.option == MuonOption::Practical {
            1.0 - inner.hyper.beta
        } else {
            1.0
        };
        let estimate = inner.momentum.scale(scale);
        Ok(StepRecord {
            t: self.state.t - 1,
            eta: inner.hyper.eta,
            beta: inner.hyper.beta,
            gamma: inner.hyper.gamma,
            f_value,
            grad_true_fnorm: grad.frobenius_norm(),
            momentum_fnorm: estimate.frobenius_norm(),
            momentum_error_fnorm: estimate.sub(&grad)?.frobenius_norm(),
            update_fnorm: self.state.x.sub(&x_t)?.frobenius_norm(),
            duality_inner: scale * inner.duality_inner,
        })
    }

    /// Steps once without diagnostics.
    pub fn advance<P: Problem + ?Sized>(
        &mut self,
        problem: &P,
        rng: &mut dyn RngCore,
    ) -> Result<(), OptimizerError> {
        self.step_internals(problem, rng).map(|_| ())
    }

    /// Steps once and returns every intermediate quantity.
    pub fn step_internals<P: Problem + ?Sized>(
        &mut self,
        problem: &P,
        rng: &mut dyn RngCore,
    ) -> Result<StepInternals, OptimizerError> {
        problem.check_shape(&self.state.x)?;
        let s = &mut self.state;
        let mut hyper = self.config.schedule.eval(s.t);
        let sample = Sample::draw(rng);
        let grad = problem.stochastic_gradient(&s.x, sample);
        let (rows, cols) = grad.shape();
        let (momentum, grad_reference) = match self.config.option {
            MuonOption::Mvr1Gamma0 => {
                hyper.gamma = 0.0;
                let reference = s.prev_grad.clone();
                (momentum_update_mvr1(s, &grad, hyper.beta, 0.0)?, reference)
            }
            MuonOption::Mvr1 => {
                let reference = s.prev_grad.clone();
                (momentum_update_mvr1(s, &grad, hyper.beta, hyper.gamma)?, reference)
            }
            MuonOption::Mvr2 => {
                let reference = if s.t == 1 {
                    Matrix::zeros(rows, cols)
                } else {
                    problem.stochastic_gradient(&s.x_prev, sample)
                };
                let m = momentum_update_mvr2(s, &grad, &reference, hyper.beta, hyper.gamma)?;
                (m, reference)
            }
            MuonOption::Practical => {
                hyper.gamma = 1.0 - hyper.beta;
                (momentum_update_practical(s, &grad, hyper.beta)?, Matrix::zeros(rows, cols))
            }
            MuonOption::Sgd => {
                s.m = grad.clone();
                (grad.clone(), Matrix::zeros(rows, cols))
            }
        };
        let (direction, duality_inner) = if self.config.option == MuonOption::Sgd {
            (momentum.clone(), momentum.frobenius_norm_sq())
        } else {
            self.config.orthogonalizer.apply(&momentum)?
        };
        let mut x_next = s.x.clone();
        if self.config.weight_decay > 0.0 {
            x_next.scale_mut(1.0 - hyper.eta * self.config.weight_decay);
        }
        x_next.axpy(-hyper.eta, &direction)?;
        if !x_next.is_finite() {
            return Err(OptimizerError::NonFiniteState { t: s.t });
        }
        s.x_prev = std::mem::replace(&mut s.x, x_next);
        s.prev_beta = hyper.beta;
        s.t += 1;
        Ok(StepInternals {
            hyper,
            sample,
            grad,
            grad_reference,
            momentum,
            direction,
            duality_inner,
        })
    }
}
