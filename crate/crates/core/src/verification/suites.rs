use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_seq_lemma_a3, check_seq_lemma_b1, CheckReport, VerificationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqLemma {
    A3,
    B1,
}

impl SeqLemma {
    pub fn label(&self) -> &'static str {
        match self {
            SeqLemma::A3 => "seq_lemma_a3",
            SeqLemma::B1 => "seq_lemma_b1",
        }
    }
}

/// One premise-satisfying instance: `(x, y, p)` with
/// `x_{t+1} ≤ (1 − (t+1)^{-p}) x_t + y_{t+1}`.
///
/// Lengths, exponents and magnitudes are randomized; about a quarter of the
/// steps sit exactly on the premise bound, where the conclusion is tightest.
pub fn random_recursion(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, f64) {
    let len = rng.random_range(2..=200usize);
    let p = if rng.random_bool(0.1) {
        1.0
    } else {
        rng.random_range(1e-3..1.0)
    };
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    let y: Vec<f64> = (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                scale * rng.random::<f64>()
            }
        })
        .collect();
    let mut x = vec![scale * 10.0 * rng.random::<f64>()];
    for i in 1..len {
        let bound = (1.0 - ((i + 1) as f64).powf(-p)) * x[i - 1] + y[i];
        let share = if rng.random_bool(0.25) { 1.0 } else { rng.random::<f64>() };
        x.push(bound * share);
    }
    (x, y, p)
}

/// Runs `instances` random instances of a scalar sequence lemma and merges
/// them into one report; `worst_at` is the instance index.
pub fn random_seq_lemma_suite(
    lemma: SeqLemma,
    instances: usize,
    seed: u64,
) -> Result<CheckReport, VerificationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut merged = CheckReport::new(lemma.label());
    for k in 0..instances {
        let (x, y, p) = random_recursion(&mut rng);
        let report = match lemma {
            SeqLemma::A3 => check_seq_lemma_a3(&x, &y, p)?,
            SeqLemma::B1 => check_seq_lemma_b1(&x, &y, p)?,
        };
        merged.checked += report.checked;
        merged.violations += report.violations;
        if report.worst_margin < merged.worst_margin || report.worst_margin.is_nan() {
            merged.worst_margin = report.worst_margin;
            merged.worst_at = k;
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_instances_satisfy_the_premise() {
        // the checkers refuse premise violations, so Ok means the premise held
        for lemma in [SeqLemma::A3, SeqLemma::B1] {
            let report = random_seq_lemma_suite(lemma, 200, 11).unwrap();
            assert!(report.passed(), "{}", report.to_line());
            assert!(report.checked > 200);
        }
    }

    #[test]
    fn suite_is_deterministic_in_seed() {
        let a = random_seq_lemma_suite(SeqLemma::A3, 50, 3).unwrap();
        let b = random_seq_lemma_suite(SeqLemma::A3, 50, 3).unwrap();
        assert_eq!(a, b);
    }
}
