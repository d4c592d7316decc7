//! CSV and JSON serialization of sweep rows, convergence reports and figure series.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a
//! file back reproduces every value bit for bit. JSON objects use sorted keys
//! and carry no timestamps, which keeps output byte-identical across runs.

use std::io::{Read, Write};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::s_to_ms;
use crate::sweep::{ConvergenceReport, FigureData, SweepPlan, SweepRow};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ROW_HEADER: [&str; 13] = [
    "mass_amu",
    "c_param",
    "t_c_ms",
    "t_q_ms",
    "dt_c_ms",
    "dt_q_ms",
    "rel_dev_mean",
    "rel_dev_fluct",
    "window_s",
    "truncated",
    "mc_mean_ms",
    "mc_stderr_ms",
    "status",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], sink: W) -> Result<(), ReportError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    w.write_record(ROW_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(source: R) -> Result<Vec<SweepRow>, ReportError> {
    let mut r = csv::Reader::from_reader(source);
    r.deserialize().map(|row| row.map_err(ReportError::from)).collect()
}

/// Input parameters and settings that produced a sweep, in user units.
pub fn plan_metadata(plan: &SweepPlan) -> Value {
    let policy = plan.det.window;
    json!({
        "tool": "arrival-lab",
        "tool_version": TOOL_VERSION,
        "sigma0_cm": plan.base.sigma0,
        "u_cm_s": plan.base.u,
        "k_slope": plan.base.k_slope,
        "x_cm": plan.det.x_detector,
        "masses_amu": plan.masses_amu,
        "c_values": plan.c_values,
        "window": {
            "mode": policy.mode,
            "t_max_s": policy.t_max,
            "t_cap_s": policy.t_cap,
            "rel_tol_norm": policy.rel_tol_norm,
            "rel_tol_moment": policy.rel_tol_moment,
        },
        "tolerances": {
            "quad_abs": plan.tol.quad_abs,
            "quad_rel": plan.tol.quad_rel,
            "fd_step_scale": plan.tol.fd_step_scale,
            "max_subdivisions": plan.tol.max_subdivisions,
        },
        "monte_carlo": {
            "enabled": plan.include_mc,
            "n_particles": plan.mc.n_particles,
            "seed": plan.mc.seed,
        },
    })
}

fn write_json<W: Write, T: Serialize>(value: &T, mut sink: W) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut sink, value)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// `{"schema": 1, "metadata": {...}, "rows": [...], "convergence": ...}`
pub fn write_rows_json<W: Write>(
    plan: &SweepPlan,
    rows: &[SweepRow],
    convergence: Option<&ConvergenceReport>,
    sink: W,
) -> Result<(), ReportError> {
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "metadata": plan_metadata(plan),
        "rows": rows,
        "convergence": convergence,
    });
    write_json(&doc, sink)
}

pub fn write_rows<W: Write>(plan: &SweepPlan, rows: &[SweepRow], format: Format, sink: W) -> Result<(), ReportError> {
    match format {
        Format::Csv => write_rows_csv(rows, sink),
        Format::Json => write_rows_json(plan, rows, None, sink),
    }
}

pub const SERIES_HEADER: [&str; 7] = ["figure", "mass_amu", "c_param", "mechanics", "t_ms", "abs_current_per_s", "current_per_s"];

/// Long-format CSV: one line per (pair, mechanics, sample).
pub fn write_figure_csv<W: Write>(fig: &FigureData, sink: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SERIES_HEADER)?;
    for pair in &fig.pairs {
        for series in [&pair.quantum, &pair.classical] {
            for i in 0..series.len() {
                w.write_record([
                    fig.figure.to_string(),
                    pair.mass_amu.to_string(),
                    pair.c_param.to_string(),
                    series.mechanics.as_str().to_string(),
                    s_to_ms(series.times[i]).to_string(),
                    series.values[i].to_string(),
                    series.signed[i].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_figure_json<W: Write>(fig: &FigureData, sink: W) -> Result<(), ReportError> {
    let doc = json!({
        "schema": SCHEMA_VERSION,
        "metadata": {
            "tool": "arrival-lab",
            "tool_version": TOOL_VERSION,
            "figure": fig.figure,
            "sigma0_cm": fig.sigma0,
            "u_cm_s": fig.u,
            "x_cm": fig.x_detector,
            "k_slope": 0.0,
            "time_unit": "s",
        },
        "pairs": fig.pairs,
    });
    write_json(&doc, sink)
}

pub fn write_figure<W: Write>(fig: &FigureData, format: Format, sink: W) -> Result<(), ReportError> {
    match format {
        Format::Csv => write_figure_csv(fig, sink),
        Format::Json => write_figure_json(fig, sink),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{figure_data, run_sweep, table_plan, FigureId};

    fn row() -> SweepRow {
        SweepRow {
            mass_amu: 1000.0,
            c_param: 100.0,
            t_c_ms: 10.000_000_123_456_789,
            t_q_ms: 10.000_318_999_999_999,
            dt_c_ms: 1.000_055_1,
            dt_q_ms: 1.003_226_000_000_001,
            rel_dev_mean: 3.189e-5,
            rel_dev_fluct: 3.17e-3,
            window_s: 0.04,
            truncated: false,
            mc_mean_ms: Some(9.999_871),
            mc_stderr_ms: None,
            status: "ok".into(),
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_rows_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ROW_HEADER.join(",") + "\n");
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_rows_csv(&[row()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back = read_rows_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![row()]);
    }

    #[test]
    fn failed_row_round_trips_through_csv() {
        let mut plan = table_plan(3).unwrap();
        plan.base.u = -10.0;
        plan.c_values = vec![0.0];
        plan.masses_amu = vec![100.0];
        let rows = run_sweep(&plan).unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let back = read_rows_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].status, "no_arrival");
        assert!(back[0].t_c_ms.is_nan());
    }

    #[test]
    fn json_metadata_records_force_and_window() {
        let plan = table_plan(1).unwrap();
        let mut buf = Vec::new();
        write_rows_json(&plan, &[row()], None, &mut buf).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["metadata"]["k_slope"].as_f64(), Some(0.0));
        assert_eq!(v["metadata"]["window"]["mode"], "adaptive");
        assert_eq!(v["rows"][0]["t_q_ms"].as_f64(), Some(row().t_q_ms));
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"k_slope\": 0"));
    }

    #[test]
    fn json_is_byte_stable() {
        let plan = table_plan(2).unwrap();
        let write = || {
            let mut buf = Vec::new();
            write_rows(&plan, &[row(), row()], Format::Json, &mut buf).unwrap();
            buf
        };
        assert_eq!(write(), write());
    }

    #[test]
    fn figure_outputs() {
        let fig = figure_data(FigureId::CScan, 5);
        let mut csv_buf = Vec::new();
        write_figure(&fig, Format::Csv, &mut csv_buf).unwrap();
        assert_eq!(String::from_utf8(csv_buf).unwrap().lines().count(), 1 + 3 * 2 * 5);
        let mut json_buf = Vec::new();
        write_figure(&fig, Format::Json, &mut json_buf).unwrap();
        let v: Value = serde_json::from_slice(&json_buf).unwrap();
        assert_eq!(v["pairs"].as_array().unwrap().len(), 3);
        assert_eq!(v["pairs"][0]["quantum"]["mechanics"], "quantum");
    }
}
