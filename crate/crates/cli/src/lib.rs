//! Benchmark and verification driver: runs assemble/update/solve cases,
//! writes CSV reports and surfaces the cost-model optimizer.

pub mod advise;
pub mod case;
pub mod error;
pub mod report;

use std::io::Write;

use repart_core::assembly::assemble_grid;
use repart_core::matrix::{CooMatrix, PartitionMap};
use repart_core::mtx::write_matrix_market;
use repart_core::oracle::gather_global;
use repart_core::repart::repartition;
use repart_core::transport::run_world;

pub use case::{run_case, BenchRecord, CaseConfig, GridSpec, StepRecord};
pub use error::{CliError, Result};

/// Repartition the step-0 system of `cfg` and gather it into one matrix.
pub fn assembled_global(cfg: &CaseConfig) -> Result<CooMatrix> {
    let grid = cfg.validate()?;
    let parts = assemble_grid(&grid, cfg.n_cpu)?;
    let cells: Vec<usize> = parts.iter().map(|p| p.0.n_cells()).collect();
    let pm = PartitionMap::new(&cells, cfg.alpha)?;
    let run = run_world(cfg.n_cpu, cfg.scheduler, |comm| {
        let (m, i) = &parts[comm.rank()];
        match repartition(m, i, &pm, comm)?.active() {
            Some(a) => gather_global(a),
            None => Ok(None),
        }
    })?;
    Ok(run.results.into_iter().flatten().next().expect("root gathers"))
}

pub fn export_mtx<W: Write>(cfg: &CaseConfig, out: W) -> Result<()> {
    write_matrix_market(&assembled_global(cfg)?, out)?;
    Ok(())
}
