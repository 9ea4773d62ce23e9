//! Tidy CSV writers. Every file is a header row, data rows, and a trailing
//! block of `# key=value` lines recording the resolved configuration.

use std::io::Write;

use crate::classical_ref::ClassicalTrajectory;
use crate::descent::DescentTrajectory;
use crate::error::Result;
use crate::hamsim::SweepRow;
use crate::phase_estimation::PECircuitResult;

/// Ordered `key=value` pairs written after the data.
pub type Metadata = Vec<(String, String)>;

/// One trajectory point. Quantum-only columns are empty for classical rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub method: String,
    pub mode: String,
    pub objective: f64,
    pub success_prob: Option<f64>,
    pub c_norm: Option<f64>,
    pub epsilon_accum: Option<f64>,
    pub samples_consumed: Option<f64>,
    /// Real parts of the amplitudes after removing the global phase.
    pub x: Vec<f64>,
}

pub fn classical_rows(tr: &ClassicalTrajectory) -> Vec<TrajectoryRow> {
    tr.points
        .iter()
        .zip(&tr.objectives)
        .enumerate()
        .map(|(step, (x, &objective))| TrajectoryRow {
            step,
            method: tr.method.name().to_string(),
            mode: "classical".to_string(),
            objective,
            success_prob: None,
            c_norm: None,
            epsilon_accum: None,
            samples_consumed: None,
            x: x.iter().copied().collect(),
        })
        .collect()
}

pub fn descent_rows(tr: &DescentTrajectory, method: &str, mode: &str, epsilon0: f64) -> Vec<TrajectoryRow> {
    let mut rows = vec![TrajectoryRow {
        step: 0,
        method: method.to_string(),
        mode: mode.to_string(),
        objective: tr.objective0,
        success_prob: None,
        c_norm: None,
        epsilon_accum: Some(epsilon0),
        samples_consumed: Some(1.0),
        x: tr.x0.canonical_phase().real_part().iter().copied().collect(),
    }];
    let mut total = 1.0;
    for (t, r) in tr.records.iter().enumerate() {
        total *= r.samples_consumed as f64;
        rows.push(TrajectoryRow {
            step: t + 1,
            method: method.to_string(),
            mode: mode.to_string(),
            objective: r.objective,
            success_prob: Some(r.success_prob),
            c_norm: Some(r.c_norm),
            epsilon_accum: Some(r.epsilon_accum),
            samples_consumed: Some(total),
            x: r.state_after.canonical_phase().real_part().iter().copied().collect(),
        });
    }
    rows
}

/// Round-trip exponent notation used by every writer.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_metadata<W: Write>(mut w: W, meta: &Metadata) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// `samples_consumed` is cumulative: copies of `x⁰` needed up to that step.
pub fn write_trajectories<W: Write>(mut w: W, rows: &[TrajectoryRow], meta: &Metadata) -> Result<()> {
    let dim = rows.iter().map(|r| r.x.len()).max().unwrap_or(0);
    {
        let mut out = csv::Writer::from_writer(&mut w);
        let mut header: Vec<String> = [
            "step",
            "method",
            "mode",
            "objective",
            "success_prob",
            "C",
            "epsilon_accum",
            "samples_consumed",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..dim).map(|i| format!("x{i}")));
        out.write_record(&header)?;
        for r in rows {
            let mut rec = vec![
                r.step.to_string(),
                r.method.clone(),
                r.mode.clone(),
                fmt_f64(r.objective),
                opt(r.success_prob),
                opt(r.c_norm),
                opt(r.epsilon_accum),
                opt(r.samples_consumed),
            ];
            rec.extend(r.x.iter().map(|&v| fmt_f64(v)));
            out.write_record(&rec)?;
        }
        out.flush()?;
    }
    write_metadata(w, meta)
}

pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow], meta: &Metadata) -> Result<()> {
    {
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record([
            "m",
            "beta",
            "tau",
            "repetition",
            "trace_distance",
            "baseline_distance",
            "samples_consumed",
            "seed",
        ])?;
        for r in rows {
            out.write_record([
                r.m.to_string(),
                fmt_f64(r.beta),
                fmt_f64(r.tau),
                r.repetition.to_string(),
                fmt_f64(r.trace_distance),
                fmt_f64(r.baseline_distance),
                r.samples_consumed.to_string(),
                r.seed.to_string(),
            ])?;
        }
        out.flush()?;
    }
    write_metadata(w, meta)
}

pub fn write_histogram<W: Write>(mut w: W, pe: &PECircuitResult, meta: &Metadata) -> Result<()> {
    {
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record(["outcome", "decoded", "probability"])?;
        for (k, (&p, &l)) in pe.histogram.iter().zip(&pe.decoded).enumerate() {
            out.write_record([k.to_string(), fmt_f64(l), fmt_f64(p)])?;
        }
        out.flush()?;
    }
    write_metadata(w, meta)
}

/// Generic table with string cells.
pub fn write_table<W: Write>(mut w: W, header: &[&str], rows: &[Vec<String>], meta: &Metadata) -> Result<()> {
    {
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record(header)?;
        for r in rows {
            out.write_record(r)?;
        }
        out.flush()?;
    }
    write_metadata(w, meta)
}
