//! File emission: `runs.csv` (per-iteration records), `summary.csv`
//! (ensemble bands), `failures.csv`, `config.json`, and the per-sweep tables.
//!
//! Numbers are written with Rust's shortest round-trip float formatting, so
//! identical runs produce byte-identical files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use gnda::{GnRunRecord, LmRun};

use crate::config::ExperimentConfig;
use crate::ensemble::{
    iterations_to_tolerance, ComparePair, EnsembleSummary, Outcome, SweepPoint,
};

pub const RUNS_HEADER: &str = "seed,k,cost,err_total,err_obs,err_unobs,step_norm,cond1_lhs,cond1_rhs,cond2_lhs,cond2_rhs,bound";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_run_rows<W: Write>(w: &mut W, seed: u64, rec: &GnRunRecord) -> io::Result<()> {
    for r in &rec.records {
        writeln!(
            w,
            "{seed},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.cost,
            fmt_opt(r.err_total),
            fmt_opt(r.err_obs),
            fmt_opt(r.err_unobs),
            r.step_norm,
            fmt_opt(r.cond1_lhs),
            fmt_opt(r.cond1_rhs),
            fmt_opt(r.cond2_lhs),
            fmt_opt(r.cond2_rhs),
            fmt_opt(r.bound),
        )?;
    }
    Ok(())
}

pub fn runs_csv(summary: &EnsembleSummary) -> String {
    let mut out = Vec::new();
    writeln!(out, "{RUNS_HEADER}").unwrap();
    for res in &summary.results {
        if let Some(rec) = res.outcome.records() {
            write_run_rows(&mut out, res.index, rec).unwrap();
        }
    }
    String::from_utf8(out).unwrap()
}

/// The LM baseline shares the schema; only cost is tracked per iteration,
/// the condition columns stay empty.
pub fn baseline_runs_csv(pairs: &[ComparePair]) -> String {
    let mut out = Vec::new();
    writeln!(out, "{RUNS_HEADER}").unwrap();
    for p in pairs {
        if let Ok((lm, _)) = &p.baseline.lm {
            write_lm_rows(&mut out, p.baseline.index, lm).unwrap();
        }
    }
    String::from_utf8(out).unwrap()
}

fn write_lm_rows<W: Write>(w: &mut W, seed: u64, lm: &LmRun) -> io::Result<()> {
    for (k, cost) in lm.cost_history.iter().enumerate() {
        writeln!(w, "{seed},{k},{cost},,,,,,,,,")?;
    }
    Ok(())
}

pub fn summary_csv(summary: &EnsembleSummary) -> String {
    let mut out = String::from("iteration,metric,median,lo,hi\n");
    for band in &summary.bands {
        for (k, (med, lo, hi)) in band.bands.iter().enumerate() {
            out.push_str(&format!("{k},{},{med},{lo},{hi}\n", band.metric));
        }
    }
    out
}

pub fn failures_csv(summary: &EnsembleSummary) -> String {
    let mut out = String::from("seed,kind,detail\n");
    for res in &summary.results {
        let detail = match &res.outcome {
            Outcome::Done(_) => continue,
            Outcome::IllPosed(rec) => rec.ill_posed_reason.clone().unwrap_or_default(),
            Outcome::NoAlphaFound(msg) | Outcome::Failed(msg) => msg.clone(),
        };
        out.push_str(&format!(
            "{},{},{}\n",
            res.index,
            res.outcome.kind(),
            csv_escape(&detail)
        ));
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per realization and sweep point: the data behind the observation
/// and window sweep figures.
pub fn sweep_csv(points: &[SweepPoint], err_tol: f64) -> String {
    let mut out = String::from("label,value,seed,outcome,iterations,iterations_to_tol,final_err_total\n");
    for p in points {
        if p.skipped {
            continue;
        }
        for res in &p.summary.results {
            let (outcome, iters, to_tol, final_err) = match &res.outcome {
                Outcome::Done(rec) => (
                    "ok",
                    rec.iterations().to_string(),
                    iterations_to_tolerance(rec, err_tol)
                        .map(|k| k.to_string())
                        .unwrap_or_default(),
                    fmt_opt(rec.final_err_total()),
                ),
                other => (other.kind(), String::new(), String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{outcome},{iters},{to_tol},{final_err}\n",
                p.label, p.value, res.index
            ));
        }
    }
    out
}

/// Median cost per iteration per sweep point: the data behind the cost-curve
/// figures of an alpha sweep.
pub fn curves_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("label,value,iteration,cost_median,cost_lo,cost_hi\n");
    for p in points {
        if p.skipped {
            continue;
        }
        let cost_band = p
            .summary
            .bands
            .iter()
            .find(|b| b.metric == "cost")
            .expect("cost band always present");
        for (k, (med, lo, hi)) in cost_band.bands.iter().enumerate() {
            out.push_str(&format!("{},{},{k},{med},{lo},{hi}\n", p.label, p.value));
        }
    }
    out
}

pub fn skips_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("label,value,reason\n");
    for p in points {
        if let Some(reason) = &p.skip_reason {
            out.push_str(&format!(
                "{},{},{}\n",
                p.label,
                p.value,
                csv_escape(reason)
            ));
        }
    }
    out
}

pub fn write_all(dir: &Path, files: &[(&str, String)]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, content) in files {
        fs::write(dir.join(name), content)?;
    }
    Ok(())
}

pub fn config_json(cfg: &ExperimentConfig) -> String {
    cfg.to_json()
}
