//! Trace files: a header naming the columns, then one comma-separated record
//! per stride with floats in 17 significant digits.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of every trace file.
pub const TRACE_COLUMNS: [&str; 10] = [
    "t",
    "residual_agent1",
    "residual_max",
    "f_agent1",
    "gap_agent1",
    "f_ergodic",
    "gap_ergodic",
    "consensus_error",
    "theorem_bound",
    "round_seconds",
];

/// Metrics after round `t`.
///
/// `f_ergodic` is `f(ỹ_t)` for N-DDA and `f(x̃_{1,t})`, agent 1's running
/// average, otherwise. Unavailable values are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    /// `‖x_{1,t} − x*‖²/‖x*‖²`
    pub residual_agent1: f64,
    /// max over agents of the same quantity
    pub residual_max: f64,
    pub f_agent1: f64,
    pub gap_agent1: f64,
    pub f_ergodic: f64,
    pub gap_ergodic: f64,
    /// `Σᵢ ‖x_{i,t} − x̄_t‖²`
    pub consensus_error: f64,
    pub theorem_bound: f64,
    pub round_seconds: f64,
}

impl TraceRecord {
    fn fields(&self) -> [f64; 9] {
        [
            self.residual_agent1,
            self.residual_max,
            self.f_agent1,
            self.gap_agent1,
            self.f_ergodic,
            self.gap_ergodic,
            self.consensus_error,
            self.theorem_bound,
            self.round_seconds,
        ]
    }

    pub fn column(&self, name: &str) -> Option<f64> {
        let idx = TRACE_COLUMNS.iter().position(|c| *c == name)?;
        Some(if idx == 0 { self.t as f64 } else { self.fields()[idx - 1] })
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_trace<W: Write>(w: W, records: &[TraceRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_COLUMNS)?;
    for r in records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.fields().iter().map(|v| format_float(*v)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(TRACE_COLUMNS.iter().copied()) {
        return Err(Error::Format(format!("unexpected trace columns: {headers:?}")));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |c: usize| Error::Format(format!("record {}: bad value in column {}", line + 1, TRACE_COLUMNS[c]));
        let t: usize = rec[0].parse().map_err(|_| bad(0))?;
        let mut v = [0.0; 9];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 1].parse().map_err(|_| bad(k + 1))?;
        }
        out.push(TraceRecord {
            t,
            residual_agent1: v[0],
            residual_max: v[1],
            f_agent1: v[2],
            gap_agent1: v[3],
            f_ergodic: v[4],
            gap_ergodic: v[5],
            consensus_error: v[6],
            theorem_bound: v[7],
            round_seconds: v[8],
        });
    }
    Ok(out)
}

/// `(t, column)` pairs for rate fitting.
pub fn series(records: &[TraceRecord], column: &str) -> Result<Vec<(f64, f64)>> {
    records
        .iter()
        .map(|r| {
            r.column(column)
                .map(|v| (r.t as f64, v))
                .ok_or_else(|| Error::InvalidInput(format!("unknown trace column '{column}'")))
        })
        .collect()
}

/// Running minimum of the column, `min_{k≤t}`.
pub fn envelope(series: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut best = f64::INFINITY;
    series
        .iter()
        .map(|&(t, v)| {
            if v < best {
                best = v;
            }
            (t, best)
        })
        .collect()
}
