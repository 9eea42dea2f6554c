//! CSV and plot-data writers.
//!
//! Numbers are printed with Rust's shortest round-trip formatting, so the
//! same trace always produces the same bytes.

use std::io::{self, Write};

use super::montecarlo::SummaryRow;
use super::sim::{Experiment, SimulationTrace};
use crate::bounds::theorem2_bounds;
use crate::threat::Tamper;

pub const TRACE_HEADER: &str = "k,t,kind,sensor,state_index,value";
pub const SUMMARY_HEADER: &str = "k,statistic,value";

/// Numeric code written in `tampered` rows.
pub fn tamper_code(label: Tamper) -> u8 {
    match label {
        Tamper::Genuine => 0,
        Tamper::Injected => 1,
        Tamper::Shifted => 2,
        Tamper::Fabricated => 3,
    }
}

/// Long-format trace. `true`, `fused` and `err_inf` rows are in the
/// configured coordinates; `local` rows hold `Re(η_i)` against the
/// estimator-coordinate index it estimates. Indices are 1-based.
pub fn write_trace<W: Write>(mut w: W, exp: &Experiment, trace: &SimulationTrace) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for rec in &trace.records {
        let (k, t) = (rec.k, rec.t);
        let truth = exp.plant.report(&rec.truth);
        let fused = exp.plant.report(&rec.fused);
        for (j, v) in truth.iter().enumerate() {
            writeln!(w, "{k},{t},true,,{},{v}", j + 1)?;
        }
        for (j, v) in fused.iter().enumerate() {
            writeln!(w, "{k},{t},fused,,{},{v}", j + 1)?;
        }
        for (i, eta) in rec.locals.iter().enumerate() {
            let sub = exp.decomposition.sensor(i);
            for (pos, &j) in sub.qset.iter().enumerate() {
                writeln!(w, "{k},{t},local,{},{},{}", i + 1, j + 1, eta[pos].re)?;
            }
        }
        let err = truth.iter().zip(&fused).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        writeln!(w, "{k},{t},err_inf,,,{err}")?;
        let (be, bc) = theorem2_bounds(k, &exp.constants);
        writeln!(w, "{k},{t},bound_e,,,{be}")?;
        writeln!(w, "{k},{t},bound_cov,,,{bc}")?;
        for &(sensor, label, _) in &rec.tampered {
            writeln!(w, "{k},{t},tampered,{},,{}", sensor + 1, tamper_code(label))?;
        }
    }
    w.flush()
}

pub fn write_summary<W: Write>(mut w: W, rows: &[SummaryRow]) -> io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for row in rows {
        for (name, value) in SummaryRow::STATISTICS.iter().zip(row.values()) {
            writeln!(w, "{},{name},{value}", row.k)?;
        }
    }
    w.flush()
}

/// Whitespace-separated columns `t err_inf bound_e bound_cov` for plotting
/// one run against time.
pub fn write_trace_plot<W: Write>(mut w: W, exp: &Experiment, trace: &SimulationTrace) -> io::Result<()> {
    writeln!(w, "# t err_inf bound_e bound_cov")?;
    for rec in &trace.records {
        let truth = exp.plant.report(&rec.truth);
        let fused = exp.plant.report(&rec.fused);
        let err = truth.iter().zip(&fused).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let (be, bc) = theorem2_bounds(rec.k, &exp.constants);
        writeln!(w, "{} {err} {be} {bc}", rec.t)?;
    }
    w.flush()
}

/// Whitespace-separated summary columns, one line per stamp index.
pub fn write_summary_plot<W: Write>(mut w: W, rows: &[SummaryRow]) -> io::Result<()> {
    writeln!(w, "# k {}", SummaryRow::STATISTICS.join(" "))?;
    for row in rows {
        let cols: Vec<String> = row.values().iter().map(|v| v.to_string()).collect();
        writeln!(w, "{} {}", row.k, cols.join(" "))?;
    }
    w.flush()
}
