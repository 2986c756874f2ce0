//! Versioned CSV formats for per-seed traces and seed aggregates.

use std::path::Path;

use crate::optimizer::StepRecord;
use crate::verification::Trace;

use super::HarnessError;

pub const TRACE_SCHEMA: &str = "muon-vr-trace/1";
pub const AGGREGATE_SCHEMA: &str = "muon-vr-aggregate/1";

pub const TRACE_COLUMNS: [&str; 9] = [
    "t",
    "eta",
    "beta",
    "gamma",
    "f",
    "grad_fnorm",
    "momentum_fnorm",
    "momentum_err_fnorm",
    "update_fnorm",
];

/// Per-seed metrics that the aggregate summarizes, in column order.
pub const AGGREGATE_METRICS: [&str; 5] =
    ["f", "grad_fnorm", "momentum_fnorm", "momentum_err_fnorm", "update_fnorm"];

fn metrics(r: &StepRecord) -> [f64; 5] {
    [
        r.f_value,
        r.grad_true_fnorm,
        r.momentum_fnorm,
        r.momentum_error_fnorm,
        r.update_fnorm,
    ]
}

/// `{:e}` is the shortest exact round-trip rendering, so reruns and re-reads
/// reproduce every bit.
pub fn render_trace(trace: &Trace) -> String {
    let mut out = format!(
        "# schema={TRACE_SCHEMA} option={} schedule={} seed={} final_f={:e}\n",
        trace.option.label(),
        trace.schedule.label(),
        trace.seed,
        trace.final_f
    );
    out.push_str(&TRACE_COLUMNS.join(","));
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!("{},{:e},{:e},{:e}", r.t, r.eta, r.beta, r.gamma));
        for v in metrics(r) {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    out
}

/// Records and `f(X_{T+1})` from a trace CSV. `duality_inner` is not part
/// of the schema and reads back as NaN.
pub fn parse_trace(text: &str) -> Result<(Vec<StepRecord>, f64), HarnessError> {
    let bad = |line: usize, msg: String| HarnessError::TraceFormat { line, message: msg };
    let mut lines = text.lines().enumerate();
    let (_, meta) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    if !meta.contains(&format!("schema={TRACE_SCHEMA}")) {
        return Err(bad(1, format!("expected schema {TRACE_SCHEMA}")));
    }
    let final_f = meta
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("final_f="))
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| bad(1, "missing final_f".into()))?;
    let (_, header) = lines.next().ok_or_else(|| bad(2, "missing header".into()))?;
    if header != TRACE_COLUMNS.join(",") {
        return Err(bad(2, format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TRACE_COLUMNS.len() {
            return Err(bad(i + 1, format!("expected {} fields", TRACE_COLUMNS.len())));
        }
        let t = fields[0].parse::<u64>().map_err(|e| bad(i + 1, e.to_string()))?;
        let mut v = [0.0; 8];
        for (slot, field) in v.iter_mut().zip(&fields[1..]) {
            *slot = field.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()))?;
        }
        records.push(StepRecord {
            t,
            eta: v[0],
            beta: v[1],
            gamma: v[2],
            f_value: v[3],
            grad_true_fnorm: v[4],
            momentum_fnorm: v[5],
            momentum_error_fnorm: v[6],
            update_fnorm: v[7],
            duality_inner: f64::NAN,
        });
    }
    Ok((records, final_f))
}

/// Mean and sample standard deviation. Values are sorted first, so the
/// result does not depend on seed order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// Seed mean and standard deviation at every recorded `t`. All traces must
/// share the same record times.
pub fn render_aggregate(traces: &[Trace]) -> Result<String, HarnessError> {
    let first = traces
        .first()
        .ok_or_else(|| HarnessError::Unsupported("aggregate of zero traces".into()))?;
    for tr in traces {
        let same = tr.records.len() == first.records.len()
            && tr.records.iter().zip(&first.records).all(|(a, b)| a.t == b.t);
        if !same {
            return Err(HarnessError::Unsupported(format!(
                "seed {} has different record times",
                tr.seed
            )));
        }
    }
    let mut out = format!("# schema={AGGREGATE_SCHEMA} seeds={}\nt,n", traces.len());
    for m in AGGREGATE_METRICS {
        out.push_str(&format!(",{m}_mean,{m}_std"));
    }
    out.push('\n');
    for (i, r) in first.records.iter().enumerate() {
        out.push_str(&format!("{},{}", r.t, traces.len()));
        for k in 0..AGGREGATE_METRICS.len() {
            let column: Vec<f64> = traces.iter().map(|tr| metrics(&tr.records[i])[k]).collect();
            let (mean, std) = mean_std(&column);
            out.push_str(&format!(",{mean:e},{std:e}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// One parsed aggregate row: `t`, seed count, and `(mean, std)` per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub t: u64,
    pub n: usize,
    pub stats: [(f64, f64); 5],
}

pub fn parse_aggregate(text: &str) -> Result<Vec<AggregateRow>, HarnessError> {
    let bad = |line: usize, msg: String| HarnessError::TraceFormat { line, message: msg };
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        if i == 0 && !line.contains(&format!("schema={AGGREGATE_SCHEMA}")) {
            return Err(bad(1, format!("expected schema {AGGREGATE_SCHEMA}")));
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 2 + 2 * AGGREGATE_METRICS.len() {
            return Err(bad(i + 1, "wrong field count".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()));
        let mut stats = [(0.0, 0.0); 5];
        for (k, slot) in stats.iter_mut().enumerate() {
            *slot = (num(f[2 + 2 * k])?, num(f[3 + 2 * k])?);
        }
        rows.push(AggregateRow {
            t: f[0].parse().map_err(|_| bad(i + 1, "bad t".into()))?,
            n: f[1].parse().map_err(|_| bad(i + 1, "bad n".into()))?,
            stats,
        });
    }
    Ok(rows)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}
