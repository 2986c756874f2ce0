use super::{CheckReport, Trace, VerificationError};

/// Free parameter of the descent inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Fixed(f64),
    /// `α_t = 1 / (η_t^{1/3} L)`.
    EtaScaled,
}

/// Path-wise audit of
/// `f(X_{t+1}) ≤ f(X_t) − η‖M‖_F + (ηα/2)‖∇f − M‖² + ηr/(2α) + Lη²r/2`
/// with `r = min(m, n)` and slack `1e-9·(1 + |f(X_t)|)`.
pub fn check_descent_lemma(trace: &Trace, alpha: Alpha) -> Result<CheckReport, VerificationError> {
    trace.require_consecutive()?;
    let l = trace.constants.smoothness;
    let r = trace.rank_bound as f64;
    let mut report = CheckReport::new("descent_lemma");
    for (i, rec) in trace.records.iter().enumerate() {
        let eta = rec.eta;
        let f_next = trace.next_f(i);
        let rhs = if eta == 0.0 {
            rec.f_value
        } else {
            let a = match alpha {
                Alpha::Fixed(a) => a,
                Alpha::EtaScaled => 1.0 / (eta.cbrt() * l),
            };
            rec.f_value - eta * rec.momentum_fnorm
                + 0.5 * eta * a * rec.momentum_error_fnorm.powi(2)
                + eta * r / (2.0 * a)
                + 0.5 * l * eta * eta * r
        };
        report.observe(rec.t as usize, f_next, rhs, 1e-9 * (1.0 + rec.f_value.abs()));
    }
    Ok(report)
}

/// `⟨M_t, O_t⟩ ≥ ‖M_t‖_F` at every recorded step, within 1e-9 relative.
pub fn check_polar_duality(trace: &Trace) -> CheckReport {
    let mut report = CheckReport::new("polar_duality");
    for rec in &trace.records {
        report.observe(rec.t as usize, rec.momentum_fnorm, rec.duality_inner, 1e-9 * rec.duality_inner.abs());
    }
    report
}

fn power_weight(t: usize, p: f64) -> f64 {
    (t as f64).powf(-p)
}

fn check_inputs(name: &str, x: &[f64], y: &[f64], p: f64) -> Result<(), VerificationError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(VerificationError::PremiseViolated {
            index: 0,
            detail: format!("{name}: need two sequences of equal length >= 2"),
        });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(VerificationError::PremiseViolated {
            index: 0,
            detail: format!("{name}: p = {p} outside (0, 1]"),
        });
    }
    if let Some(i) = x.iter().chain(y).position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(VerificationError::PremiseViolated {
            index: i % x.len(),
            detail: format!("{name}: sequences must be finite and non-negative"),
        });
    }
    Ok(())
}

/// For `E_{t+1} ≤ (1 − α_{t+1})E_t + A_{t+1}` with `α_t = t^{-p}`, checks
/// `α_t E_t ≤ 2(E_t − E_{t+1} + A_{t+1})`. Slot `i` holds `E_{i+1}`.
pub fn check_seq_lemma_a3(e: &[f64], a: &[f64], p: f64) -> Result<CheckReport, VerificationError> {
    check_inputs("seq_lemma_a3", e, a, p)?;
    let mut report = CheckReport::new("seq_lemma_a3");
    for i in 0..e.len() - 1 {
        let t = i + 1;
        let scale = e[i] + e[i + 1] + a[i + 1];
        let tol = 1e-12 * scale;
        let premise = (1.0 - power_weight(t + 1, p)) * e[i] + a[i + 1];
        if e[i + 1] > premise + tol {
            return Err(VerificationError::PremiseViolated {
                index: i + 1,
                detail: format!("E_{} = {} exceeds {}", t + 1, e[i + 1], premise),
            });
        }
        let lhs = power_weight(t, p) * e[i];
        let rhs = 2.0 * (e[i] - e[i + 1] + a[i + 1]);
        report.observe(t, lhs, rhs, tol);
    }
    Ok(report)
}

/// For `A_{t+1} ≤ (1 − ε_{t+1})A_t + B_{t+1}` with `ε_t = t^{-p}`, checks
/// `√ε_t A_t ≤ 4(A_t/√ε_t − A_{t+1}/√ε_{t+1} + B_{t+1}/√ε_{t+1})`.
pub fn check_seq_lemma_b1(a: &[f64], b: &[f64], p: f64) -> Result<CheckReport, VerificationError> {
    check_inputs("seq_lemma_b1", a, b, p)?;
    let mut report = CheckReport::new("seq_lemma_b1");
    for i in 0..a.len() - 1 {
        let t = i + 1;
        let (eps, eps_next) = (power_weight(t, p), power_weight(t + 1, p));
        let premise = (1.0 - eps_next) * a[i] + b[i + 1];
        let scale = a[i] + a[i + 1] + b[i + 1];
        if a[i + 1] > premise + 1e-12 * scale {
            return Err(VerificationError::PremiseViolated {
                index: i + 1,
                detail: format!("A_{} = {} exceeds {}", t + 1, a[i + 1], premise),
            });
        }
        let (s, s_next) = (eps.sqrt(), eps_next.sqrt());
        let lhs = s * a[i];
        let rhs = 4.0 * (a[i] / s - a[i + 1] / s_next + b[i + 1] / s_next);
        report.observe(t, lhs, rhs, 1e-12 * scale / s_next);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{MuonConfig, MuonOption, Schedule};
    use crate::problems::make_stochastic_quadratic;
    use crate::verification::collect_trace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn recursion(t_max: usize, p: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let a: Vec<f64> = (0..t_max).map(|_| rng.random::<f64>()).collect();
        let mut e = vec![rng.random::<f64>() * 10.0];
        for i in 1..t_max {
            let next = (1.0 - ((i + 1) as f64).powf(-p)) * e[i - 1] + a[i];
            // anywhere between 0 and the premise bound
            e.push(next * rng.random::<f64>().sqrt());
        }
        (e, a)
    }

    #[test]
    fn zero_sequences_hold_with_equality() {
        let z = vec![0.0; 10];
        let r = check_seq_lemma_a3(&z, &z, 0.5).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_margin, 0.0);
        assert!(check_seq_lemma_b1(&z, &z, 0.5).unwrap().passed());
    }

    #[test]
    fn recursion_generated_sequences_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (e, a) = recursion(10_000, 0.5, &mut rng);
        assert!(check_seq_lemma_a3(&e, &a, 0.5).unwrap().passed());
        let (e, a) = recursion(10_000, 2.0 / 3.0, &mut rng);
        assert!(check_seq_lemma_b1(&e, &a, 2.0 / 3.0).unwrap().passed());
    }

    #[test]
    fn premise_violation_is_refused() {
        let e = [1.0, 5.0];
        let a = [0.0, 0.0];
        assert!(matches!(
            check_seq_lemma_a3(&e, &a, 1.0),
            Err(VerificationError::PremiseViolated { index: 1, .. })
        ));
        assert!(matches!(
            check_seq_lemma_b1(&e, &a, 1.0),
            Err(VerificationError::PremiseViolated { index: 1, .. })
        ));
        assert!(check_seq_lemma_a3(&[-1.0, 0.0], &a, 1.0).is_err());
        assert!(check_seq_lemma_a3(&e, &a, 1.5).is_err());
    }

    #[test]
    fn descent_lemma_holds_on_deterministic_quadratic() {
        let p = make_stochastic_quadratic(4, 5, 4, 3.0, 0.1, 0.0).unwrap();
        for option in [MuonOption::Mvr1Gamma0, MuonOption::Mvr2, MuonOption::Practical] {
            let trace = collect_trace(&p, MuonConfig::new(option, Schedule::Thm1Case2), 1, 2000).unwrap();
            let r = check_descent_lemma(&trace, Alpha::Fixed(1.0)).unwrap();
            assert!(r.passed(), "{option:?}: {}", r.to_line());
            assert!(check_polar_duality(&trace).passed());
        }
    }

    #[test]
    fn zero_step_size_reduces_to_monotonicity() {
        let p = make_stochastic_quadratic(4, 3, 3, 3.0, 0.1, 1.0).unwrap();
        let mut trace = collect_trace(&p, MuonConfig::new(MuonOption::Mvr1, Schedule::Thm1Case1), 1, 3).unwrap();
        for r in &mut trace.records {
            r.eta = 0.0;
            r.f_value = 1.0;
        }
        trace.final_f = 1.0;
        let r = check_descent_lemma(&trace, Alpha::EtaScaled).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_margin, 0.0);
    }

    #[test]
    fn missing_diagnostics() {
        let p = make_stochastic_quadratic(4, 3, 3, 3.0, 0.1, 1.0).unwrap();
        let mut trace = collect_trace(&p, MuonConfig::new(MuonOption::Mvr1, Schedule::Thm1Case1), 1, 5).unwrap();
        trace.records.remove(2);
        assert!(matches!(
            check_descent_lemma(&trace, Alpha::Fixed(1.0)),
            Err(VerificationError::MissingDiagnostics(_))
        ));
    }
}
