use serde::{Deserialize, Serialize};

use super::{Trace, VerificationError};

/// Fits use at most this many log-spaced abscissae, so every decade of the
/// window weighs the same.
const FIT_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMetric {
    /// Running minimum of `(1/t) Σ_{s≤t} ‖∇f(X_s)‖_F`.
    ErgodicGradAvg,
    /// `f(X_t) − f*`.
    SubOptGap,
}

/// Least-squares line through `(ln t, ln metric)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (u64, u64),
    pub points: usize,
    /// For the gap metric: `(q, slope of ln(metric · t^q / (ln t)²))`.
    pub flatness: Vec<(f64, f64)>,
}

/// Per-seed ergodic average of the true gradient norm.
pub fn ergodic_series(trace: &Trace) -> Result<Vec<f64>, VerificationError> {
    trace.require_consecutive()?;
    let mut sum = 0.0;
    Ok(trace
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            sum += r.grad_true_fnorm;
            sum / (i + 1) as f64
        })
        .collect())
}

pub fn gap_series(trace: &Trace) -> Result<Vec<f64>, VerificationError> {
    trace.require_consecutive()?;
    let f_star = trace.constants.f_star.ok_or(VerificationError::MissingConstant("f_star"))?;
    Ok(trace.records.iter().map(|r| r.f_value - f_star).collect())
}

fn seed_mean(traces: &[Trace], metric: RateMetric) -> Result<Vec<f64>, VerificationError> {
    let series = traces
        .iter()
        .map(|t| match metric {
            RateMetric::ErgodicGradAvg => ergodic_series(t),
            RateMetric::SubOptGap => gap_series(t),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut mean: Vec<f64> = (0..len)
        .map(|k| series.iter().map(|s| s[k]).sum::<f64>() / series.len() as f64)
        .collect();
    if metric == RateMetric::ErgodicGradAvg {
        for k in 1..mean.len() {
            mean[k] = mean[k].min(mean[k - 1]);
        }
    }
    Ok(mean)
}

fn check_window(window: (u64, u64), len: usize) -> Result<(), VerificationError> {
    let (lo, hi) = window;
    if lo < 10 || hi <= lo || hi as usize > len {
        return Err(VerificationError::DegenerateWindow(format!(
            "window [{lo}, {hi}] must satisfy 10 <= t_min < t_max <= T = {len}"
        )));
    }
    Ok(())
}

/// Log-spaced integer abscissae in `[lo, hi]`, deduplicated.
fn grid(lo: u64, hi: u64) -> Vec<u64> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut ts: Vec<u64> = (0..FIT_POINTS)
        .map(|k| (a + (b - a) * k as f64 / (FIT_POINTS - 1) as f64).exp().round() as u64)
        .map(|t| t.clamp(lo, hi))
        .collect();
    ts.dedup();
    ts
}

/// Ordinary least squares of `ln values` on `ln ts`.
pub fn fit_power_law(ts: &[f64], values: &[f64]) -> Result<RateFit, VerificationError> {
    if ts.len() != values.len() || ts.len() < 3 {
        return Err(VerificationError::DegenerateWindow("need at least 3 points".into()));
    }
    if ts.iter().chain(values).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(VerificationError::DegenerateWindow(
            "abscissae and metric values must be positive and finite".into(),
        ));
    }
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(VerificationError::DegenerateWindow("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        window: (ts[0] as u64, ts[ts.len() - 1] as u64),
        points: xs.len(),
        flatness: Vec::new(),
    })
}

fn fit_series(series: &[f64], metric: RateMetric, window: (u64, u64)) -> Result<RateFit, VerificationError> {
    check_window(window, series.len())?;
    let ts: Vec<u64> = grid(window.0, window.1);
    let xs: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
    let ys: Vec<f64> = ts.iter().map(|&t| series[t as usize - 1]).collect();
    let mut fit = fit_power_law(&xs, &ys)?;
    fit.window = window;
    if metric == RateMetric::SubOptGap {
        for q in [0.5, 2.0 / 3.0] {
            let scaled: Vec<f64> = xs.iter().zip(&ys).map(|(t, y)| y * t.powf(q) / t.ln().powi(2)).collect();
            fit.flatness.push((q, fit_power_law(&xs, &scaled)?.slope));
        }
    }
    Ok(fit)
}

/// Fit on the seed-averaged metric; needs at least five seeds.
pub fn fit_rate(traces: &[Trace], metric: RateMetric, window: (u64, u64)) -> Result<RateFit, VerificationError> {
    if traces.len() < 5 {
        return Err(VerificationError::InsufficientSeeds { got: traces.len(), need: 5 });
    }
    fit_series(&seed_mean(traces, metric)?, metric, window)
}

/// One fit per trace.
pub fn fit_rate_per_seed(
    traces: &[Trace],
    metric: RateMetric,
    window: (u64, u64),
) -> Result<Vec<RateFit>, VerificationError> {
    traces
        .iter()
        .map(|t| fit_series(&seed_mean(std::slice::from_ref(t), metric)?, metric, window))
        .collect()
}

/// `Δ_t · t^q / (ln t)²` on the seed-mean gap over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flatness {
    pub q: f64,
    pub start_value: f64,
    pub max_value: f64,
    pub max_at: u64,
}

impl Flatness {
    pub fn max_ratio(&self) -> f64 {
        self.max_value / self.start_value
    }
}

pub fn gap_flatness(traces: &[Trace], q: f64, window: (u64, u64)) -> Result<Flatness, VerificationError> {
    let mean = seed_mean(traces, RateMetric::SubOptGap)?;
    check_window(window, mean.len())?;
    let scaled = |t: u64| mean[t as usize - 1] * (t as f64).powf(q) / (t as f64).ln().powi(2);
    let mut out = Flatness {
        q,
        start_value: scaled(window.0),
        max_value: f64::NEG_INFINITY,
        max_at: window.0,
    };
    for t in window.0..=window.1 {
        let v = scaled(t);
        if v > out.max_value {
            out.max_value = v;
            out.max_at = t;
        }
    }
    Ok(out)
}
