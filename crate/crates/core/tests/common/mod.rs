#![allow(dead_code)]

use repart_core::assembly::{assemble_grid, StructuredGrid};
use repart_core::matrix::{CooMatrix, InterfaceBlock, LduMatrix, PartitionMap};
use repart_core::oracle::gather_global;
use repart_core::repart::repartition;
use repart_core::transport::{run_world, SchedulerMode};
use repart_core::Result;

pub type Part = (LduMatrix, Vec<InterfaceBlock>);

pub fn grid_parts(nx: usize, ny: usize, nz: usize, n_cpu: usize) -> (StructuredGrid, Vec<Part>) {
    let g = StructuredGrid::new(nx, ny, nz).unwrap();
    let parts = assemble_grid(&g, n_cpu).unwrap();
    (g, parts)
}

pub fn partition(parts: &[Part], alpha: usize) -> PartitionMap {
    let cells: Vec<usize> = parts.iter().map(|p| p.0.n_cells()).collect();
    PartitionMap::new(&cells, alpha).unwrap()
}

/// Repartition and gather the fused global matrix.
pub fn repartitioned_global(parts: &[Part], alpha: usize, mode: SchedulerMode) -> Result<CooMatrix> {
    let pm = partition(parts, alpha);
    let run = run_world(parts.len(), mode, |comm| {
        let (m, ifaces) = &parts[comm.rank()];
        let sys = repartition(m, ifaces, &pm, comm)?;
        match sys.active() {
            Some(a) => gather_global(a),
            None => Ok(None),
        }
    })?;
    Ok(run.results.into_iter().flatten().next().expect("root result"))
}
