//! CSV emission and sweeps.

use std::io::Write;

use crate::case::{run_case, BenchRecord, CaseConfig};
use crate::error::{CliError, Result};

pub const HEADER: [&str; 28] = [
    "case",
    "nx",
    "ny",
    "nz",
    "n_cells",
    "n_cpu",
    "n_gpu",
    "alpha",
    "mode",
    "steps",
    "nnz_local",
    "nnz_nonlocal",
    "iterations",
    "residual",
    "converged",
    "verified",
    "bytes_rank_to_rank",
    "bytes_device_direct",
    "bytes_host_staged",
    "messages_rank_to_rank",
    "device_transfers",
    "t_assemble",
    "t_update",
    "t_solve",
    "t_step",
    "phi",
    "perf",
    "error",
];

/// Columns holding wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 6] = ["t_assemble", "t_update", "t_solve", "t_step", "phi", "perf"];

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// A case and what became of it.
#[derive(Debug)]
pub struct CaseOutcome {
    pub config: CaseConfig,
    pub result: Result<BenchRecord>,
}

impl CaseOutcome {
    pub fn ok(&self) -> bool {
        self.result.as_ref().is_ok_and(BenchRecord::ok)
    }
}

pub fn csv_row(outcome: &CaseOutcome) -> Vec<String> {
    let cfg = &outcome.config;
    let rec = match &outcome.result {
        Ok(rec) => rec,
        Err(e) => {
            let mut row = vec![String::new(); HEADER.len()];
            row[0] = cfg.case_name();
            if let Ok(g) = cfg.grid.build() {
                let [x, y, z] = g.dims();
                row[1..5].clone_from_slice(&[x, y, z, g.total_cells()].map(|v| v.to_string()));
            }
            row[5] = cfg.n_cpu.to_string();
            row[7] = cfg.alpha.to_string();
            row[8] = cfg.mode.to_string();
            row[9] = cfg.n_steps.to_string();
            row[HEADER.len() - 1] = e.to_string();
            return row;
        }
    };
    let t = &rec.update_traffic;
    let error = if rec.ok() {
        String::new()
    } else if !rec.converged() {
        "solver did not converge".into()
    } else {
        rec.verify_failures.join("; ")
    };
    vec![
        rec.case.clone(),
        rec.grid[0].to_string(),
        rec.grid[1].to_string(),
        rec.grid[2].to_string(),
        rec.n_cells.to_string(),
        rec.n_cpu.to_string(),
        rec.n_gpu.to_string(),
        rec.alpha.to_string(),
        rec.mode.to_string(),
        rec.steps.len().to_string(),
        rec.nnz_local.to_string(),
        rec.nnz_nonlocal.to_string(),
        fmt_opt(rec.iterations()),
        fmt_float(rec.final_residual()),
        rec.converged().to_string(),
        rec.verified.map(|v| v.to_string()).unwrap_or_default(),
        t.rank_to_rank.bytes_sent.to_string(),
        t.device_direct.bytes_sent.to_string(),
        t.host_staged.bytes_sent.to_string(),
        t.rank_to_rank.messages_sent.to_string(),
        rec.device_transfers.to_string(),
        fmt_opt(rec.t_assemble()),
        fmt_opt(rec.t_update()),
        fmt_opt(rec.t_solve()),
        fmt_opt(rec.t_step()),
        fmt_opt(rec.phi()),
        fmt_opt(rec.perf()),
        error,
    ]
}

pub fn write_csv<W: Write>(outcomes: &[CaseOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for o in outcomes {
        w.write_record(csv_row(o))?;
    }
    w.flush()?;
    Ok(())
}

/// Run cases one after another; a failing case is recorded, not fatal.
pub fn sweep(configs: &[CaseConfig]) -> Result<Vec<CaseOutcome>> {
    if configs.is_empty() {
        return Err(CliError::EmptySweep);
    }
    Ok(configs
        .iter()
        .map(|cfg| CaseOutcome {
            config: cfg.clone(),
            result: run_case(cfg),
        })
        .collect())
}
