use serde::{Deserialize, Serialize};

use super::OptimizerError;

/// Step size, momentum and correction weight for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Hyperparameter schedule, evaluated at `t = 1, 2, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `η = t^{-3/4}`, `β = 1 − t^{-1/2}`, `γ = 0`.
    Thm1Case1,
    /// `η = t^{-3/4}`, `β = 1 − (t+1)^{-1/2}`, `γ = t^{-1/2}`.
    Thm1Case2,
    /// `η = t^{-2/3}`, `β = 1 − η`, `γ = 1`.
    Thm2Mvr2,
    Constant { eta: f64, beta: f64, gamma: f64 },
}

impl Schedule {
    pub fn eval(&self, t: u64) -> Hyper {
        debug_assert!(t >= 1, "schedules start at t = 1");
        let tf = t as f64;
        match *self {
            Schedule::Thm1Case1 => Hyper {
                eta: tf.powf(-0.75),
                beta: 1.0 - tf.powf(-0.5),
                gamma: 0.0,
            },
            Schedule::Thm1Case2 => Hyper {
                eta: tf.powf(-0.75),
                beta: 1.0 - (tf + 1.0).powf(-0.5),
                gamma: tf.powf(-0.5),
            },
            Schedule::Thm2Mvr2 => {
                let eta = tf.powf(-2.0 / 3.0);
                Hyper {
                    eta,
                    beta: 1.0 - eta,
                    gamma: 1.0,
                }
            }
            Schedule::Constant { eta, beta, gamma } => Hyper { eta, beta, gamma },
        }
    }

    /// Range checks for the constant schedule; the theoretical ones are
    /// valid by construction.
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if let Schedule::Constant { eta, beta, gamma } = *self {
            let mut bad = Vec::new();
            if !(eta > 0.0 && eta <= 1.0) {
                bad.push(format!("eta = {eta} must lie in (0, 1]"));
            }
            if !(0.0..1.0).contains(&beta) {
                bad.push(format!("beta = {beta} must lie in [0, 1)"));
            }
            if !(0.0..=1.0).contains(&gamma) {
                bad.push(format!("gamma = {gamma} must lie in [0, 1]"));
            }
            if !bad.is_empty() {
                return Err(OptimizerError::InvalidSchedule(bad.join("; ")));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self {
            Schedule::Thm1Case1 => "thm1_case1",
            Schedule::Thm1Case2 => "thm1_case2",
            Schedule::Thm2Mvr2 => "thm2_mvr2",
            Schedule::Constant { .. } => "constant",
        }
    }
}

/// Free-function form of [`Schedule::eval`].
pub fn schedule_eval(schedule: &Schedule, t: u64) -> (f64, f64, f64) {
    let h = schedule.eval(t);
    (h.eta, h.beta, h.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_values() {
        assert_eq!(schedule_eval(&Schedule::Thm1Case1, 1), (1.0, 0.0, 0.0));
        assert_eq!(schedule_eval(&Schedule::Thm2Mvr2, 1), (1.0, 0.0, 1.0));
    }

    #[test]
    fn case2_at_four() {
        let (eta, beta, gamma) = schedule_eval(&Schedule::Thm1Case2, 4);
        assert!((eta - 4f64.powf(-0.75)).abs() < 1e-15);
        assert!((beta - (1.0 - 1.0 / 5f64.sqrt())).abs() < 1e-15);
        assert_eq!(gamma, 0.5);
    }

    #[test]
    fn theoretical_values_stay_in_range() {
        for s in [Schedule::Thm1Case1, Schedule::Thm1Case2, Schedule::Thm2Mvr2] {
            for t in [1, 2, 10, 1000, 100_000] {
                let h = s.eval(t);
                assert!(h.eta > 0.0 && h.eta <= 1.0);
                assert!((0.0..1.0).contains(&h.beta));
                assert!((0.0..=1.0).contains(&h.gamma));
            }
        }
    }

    #[test]
    fn constant_validation() {
        let ok = Schedule::Constant { eta: 0.1, beta: 0.9, gamma: 0.1 };
        assert!(ok.validate().is_ok());
        let bad = Schedule::Constant { eta: 0.1, beta: 1.0, gamma: 0.1 };
        assert!(matches!(bad.validate(), Err(OptimizerError::InvalidSchedule(_))));
        let worse = Schedule::Constant { eta: 0.0, beta: 1.0, gamma: 2.0 };
        let msg = worse.validate().unwrap_err().to_string();
        assert!(msg.contains("eta") && msg.contains("beta") && msg.contains("gamma"));
    }
}
