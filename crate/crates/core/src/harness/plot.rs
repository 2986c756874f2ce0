use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::runner::RunManifest;
use super::trace_io::{parse_aggregate, read_file, write_file, AggregateRow};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// `t  mean(f)  std(f)`.
    LossVsStep,
    /// `log10 t  log10 mean‖∇f‖  std in log10 units`.
    GradnormVsStepLoglog,
    /// `log10 t  log10 mean(f − f*)  std in log10 units`.
    GapVsStepLoglog,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [
        PlotKind::LossVsStep,
        PlotKind::GradnormVsStepLoglog,
        PlotKind::GapVsStepLoglog,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PlotKind::LossVsStep => "loss_vs_step",
            PlotKind::GradnormVsStepLoglog => "gradnorm_vs_step_loglog",
            PlotKind::GapVsStepLoglog => "gap_vs_step_loglog",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }

    /// File-name stem of the plotted metric.
    pub fn metric(&self) -> &'static str {
        match self {
            PlotKind::LossVsStep => "loss",
            PlotKind::GradnormVsStepLoglog => "gradnorm",
            PlotKind::GapVsStepLoglog => "gap",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Plot rows `(x, y, spread)` for a kind, from parsed aggregate rows.
/// Log-log rows with a non-positive mean are dropped and reported in the
/// returned list of skipped `t`.
pub fn plot_rows(
    rows: &[AggregateRow],
    kind: PlotKind,
    f_star: Option<f64>,
) -> Result<(Vec<[f64; 3]>, Vec<u64>), HarnessError> {
    let mut out = Vec::with_capacity(rows.len());
    let mut skipped = Vec::new();
    for r in rows {
        let (mean, std) = match kind {
            PlotKind::LossVsStep => {
                out.push([r.t as f64, r.stats[0].0, r.stats[0].1]);
                continue;
            }
            PlotKind::GradnormVsStepLoglog => r.stats[1],
            PlotKind::GapVsStepLoglog => {
                let f_star = f_star.ok_or_else(|| {
                    HarnessError::Unsupported("gap plot needs a known f*".into())
                })?;
                (r.stats[0].0 - f_star, r.stats[0].1)
            }
        };
        if mean > 0.0 {
            // delta method: sd of log10 X ≈ sd(X) / (X ln 10)
            out.push([(r.t as f64).log10(), mean.log10(), std / (mean * std::f64::consts::LN_10)]);
        } else {
            skipped.push(r.t);
        }
    }
    Ok((out, skipped))
}

/// Writes `<metric>_<option>.dat` into the run directory and returns its path.
pub fn emit_plot_data(manifest: &RunManifest, kind: PlotKind) -> Result<PathBuf, HarnessError> {
    let dir = manifest.run_dir();
    let rows = parse_aggregate(&read_file(&dir.join(&manifest.aggregate_file))?)?;
    let (data, skipped) = plot_rows(&rows, kind, manifest.constants.f_star)?;
    let option = manifest.config.optimizer.option.label();
    let columns = match kind {
        PlotKind::LossVsStep => "t f_mean f_std",
        PlotKind::GradnormVsStepLoglog => "log10_t log10_grad_fnorm_mean log10_grad_fnorm_std",
        PlotKind::GapVsStepLoglog => "log10_t log10_gap_mean log10_gap_std",
    };
    let mut text = format!(
        "# kind={kind} option={option} schedule={} seeds={} config={}\n# {columns}\n",
        manifest.config.schedule.label(),
        manifest.traces.len(),
        manifest.config_hash
    );
    if !skipped.is_empty() {
        text.push_str(&format!("# skipped {} rows with non-positive mean\n", skipped.len()));
    }
    for [x, y, s] in data {
        text.push_str(&format!("{x:e} {y:e} {s:e}\n"));
    }
    let path = dir.join(format!("{}_{option}.dat", kind.metric()));
    write_file(&path, &text)?;
    Ok(path)
}

/// Parses a `.dat` file into rows of numbers, ignoring `#` comments.
pub fn read_plot_data(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().filter_map(|v| v.parse().ok()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::fit_power_law;

    fn rows(f: impl Fn(f64) -> f64) -> Vec<AggregateRow> {
        (1..=200)
            .map(|t| {
                let v = f(t as f64);
                AggregateRow {
                    t,
                    n: 1,
                    stats: [(v, 0.0); 5],
                }
            })
            .collect()
    }

    #[test]
    fn loglog_power_law_is_a_line() {
        let (data, skipped) =
            plot_rows(&rows(|t| 3.0 * t.powf(-1.0 / 3.0)), PlotKind::GradnormVsStepLoglog, None).unwrap();
        assert!(skipped.is_empty());
        let ts: Vec<f64> = data.iter().map(|r| 10f64.powf(r[0])).collect();
        let vs: Vec<f64> = data.iter().map(|r| 10f64.powf(r[1])).collect();
        let fit = fit_power_law(&ts, &vs).unwrap();
        assert!((fit.slope + 1.0 / 3.0).abs() < 1e-10, "{fit:?}");
        // direct check on the transformed columns
        let s = (data[199][1] - data[0][1]) / (data[199][0] - data[0][0]);
        assert!((s + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gap_needs_f_star_and_drops_non_positive() {
        let r = rows(|t| 1.0 / t);
        assert!(plot_rows(&r, PlotKind::GapVsStepLoglog, None).is_err());
        let (data, skipped) = plot_rows(&r, PlotKind::GapVsStepLoglog, Some(0.01)).unwrap();
        assert_eq!(skipped.len(), 101);
        assert_eq!(data.len(), 99);
    }

    #[test]
    fn labels_round_trip() {
        for k in PlotKind::ALL {
            assert_eq!(PlotKind::from_label(k.label()), Some(k));
        }
    }
}
