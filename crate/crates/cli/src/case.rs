//! One benchmark case: assemble, repartition, then perturb/update/solve for
//! a fixed number of pseudo-timesteps.

use std::fmt;
use std::time::Instant;

use repart_core::assembly::{assemble_poisson, decompose_slab, perturb_coefficients, perturbation_factor, StructuredGrid};
use repart_core::matrix::{CooMatrix, PartitionMap};
use repart_core::oracle::{
    compare_matrices, gather_global, gather_vector, reference_global_assemble, reference_solve,
    scale_diagonal,
};
use repart_core::repart::{repartition, RankSystem};
use repart_core::solver::cg_solve;
use repart_core::transport::{run_world, Comm, SchedulerMode, TrafficCounters};
use repart_core::update::{update, TransferMode};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpec {
    /// Cavity cube with `210 * n_p` cells per axis.
    Cavity(usize),
    Dims(usize, usize, usize),
}

impl GridSpec {
    pub fn build(&self) -> repart_core::Result<StructuredGrid> {
        match *self {
            GridSpec::Cavity(n_p) => StructuredGrid::cavity(n_p),
            GridSpec::Dims(nx, ny, nz) => StructuredGrid::new(nx, ny, nz),
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Cavity(n_p) => write!(f, "cavity n_p={n_p}"),
            GridSpec::Dims(x, y, z) => write!(f, "{x}x{y}x{z}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub grid: GridSpec,
    pub n_cpu: usize,
    pub alpha: usize,
    pub mode: TransferMode,
    pub tol: f64,
    pub max_iter: usize,
    pub n_steps: usize,
    pub verify: bool,
    /// Physical GPUs, only used for naming; defaults to `n_cpu / alpha`.
    pub n_gpus: Option<usize>,
    pub scheduler: SchedulerMode,
}

pub const DEFAULT_STEPS: usize = 20;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 5000;

impl CaseConfig {
    pub fn new(grid: GridSpec, n_cpu: usize, alpha: usize) -> Self {
        CaseConfig {
            grid,
            n_cpu,
            alpha,
            mode: TransferMode::Direct,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            n_steps: DEFAULT_STEPS,
            verify: false,
            n_gpus: None,
            scheduler: SchedulerMode::Deterministic,
        }
    }

    /// OSR1, URR1 or OSRR<alpha>.
    pub fn case_name(&self) -> String {
        if self.alpha > 1 {
            return format!("OSRR{}", self.alpha);
        }
        match self.n_gpus {
            Some(g) if g < self.n_cpu => "OSR1".into(),
            _ => "URR1".into(),
        }
    }

    pub fn validate(&self) -> Result<StructuredGrid> {
        if self.n_steps == 0 {
            return Err(CliError::Invalid("at least one step is required".into()));
        }
        if self.max_iter == 0 {
            return Err(CliError::Invalid("max_iter must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.n_cpu == 0 || self.alpha == 0 || !self.n_cpu.is_multiple_of(self.alpha) {
            return Err(repart_core::Error::InvalidRatio {
                n_cpu: self.n_cpu,
                alpha: self.alpha,
            }
            .into());
        }
        let grid = self.grid.build()?;
        let layers = grid.dims()[grid.cut_axis()];
        if self.n_cpu > layers {
            return Err(repart_core::Error::TooManyParts {
                parts: self.n_cpu,
                layers,
            }
            .into());
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t_assemble: f64,
    pub t_update: f64,
    pub t_solve: f64,
    pub t_step: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub case: String,
    pub grid: [usize; 3],
    pub n_cells: usize,
    pub n_cpu: usize,
    pub n_gpu: usize,
    pub alpha: usize,
    pub mode: TransferMode,
    pub steps: Vec<StepRecord>,
    pub nnz_local: usize,
    pub nnz_nonlocal: usize,
    /// Traffic of the update steps, summed over ranks.
    pub update_traffic: TrafficCounters,
    pub device_transfers: u64,
    /// `None` unless the case ran in verify mode.
    pub verified: Option<bool>,
    pub verify_failures: Vec<String>,
}

impl BenchRecord {
    /// Mean over all steps but the first; `None` when there is only one.
    fn average(&self, f: impl Fn(&StepRecord) -> f64) -> Option<f64> {
        let rest = self.steps.get(1..).filter(|s| !s.is_empty())?;
        Some(rest.iter().map(f).sum::<f64>() / rest.len() as f64)
    }

    pub fn t_assemble(&self) -> Option<f64> {
        self.average(|s| s.t_assemble)
    }

    pub fn t_update(&self) -> Option<f64> {
        self.average(|s| s.t_update)
    }

    pub fn t_solve(&self) -> Option<f64> {
        self.average(|s| s.t_solve)
    }

    pub fn t_step(&self) -> Option<f64> {
        self.average(|s| s.t_step)
    }

    pub fn iterations(&self) -> Option<f64> {
        self.average(|s| s.iterations as f64)
    }

    /// `t_solve / t_assemble`.
    pub fn phi(&self) -> Option<f64> {
        Some(self.t_solve()? / self.t_assemble()?)
    }

    /// Cells per second of timestep.
    pub fn perf(&self) -> Option<f64> {
        Some(self.n_cells as f64 / self.t_step()?)
    }

    pub fn converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }

    pub fn final_residual(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.residual)
    }

    /// Converged every step and, in verify mode, passed every check.
    pub fn ok(&self) -> bool {
        self.converged() && self.verified != Some(false)
    }
}

#[derive(Debug, Default)]
struct RankOutput {
    steps: Vec<StepRecord>,
    nnz: (usize, usize),
    traffic: TrafficCounters,
    device_transfers: u64,
    failures: Vec<String>,
}

/// Run one case in a fresh world.
pub fn run_case(cfg: &CaseConfig) -> Result<BenchRecord> {
    let grid = cfg.validate()?;
    let meshes = decompose_slab(&grid, cfg.n_cpu)?;
    let cells: Vec<usize> = meshes.iter().map(|m| m.n_cells()).collect();
    let pm = PartitionMap::new(&cells, cfg.alpha)?;

    let run = run_world(cfg.n_cpu, cfg.scheduler, |comm| {
        let t_start = Instant::now();
        let (base_m, base_i) = assemble_poisson(&meshes[comm.rank()])?;
        let t_base = t_start.elapsed().as_secs_f64();
        // only the root touches the global reference
        let reference = if cfg.verify && comm.rank() == 0 {
            Some(reference_global_assemble(&grid)?)
        } else {
            None
        };
        let mut out = RankOutput::default();
        let mut system: Option<RankSystem> = None;
        for step in 1..=cfg.n_steps {
            let t0 = Instant::now();
            let (m, i) = perturb_coefficients(&base_m, &base_i, step)?;
            let mut t_assemble = t0.elapsed().as_secs_f64();
            if step == 1 {
                t_assemble += t_base;
            }

            let t1 = Instant::now();
            let sys = match system.as_mut() {
                None => system.insert(repartition(&m, &i, &pm, comm)?),
                Some(sys) => {
                    let stats = update(sys, &m, &i, cfg.mode)?;
                    out.traffic.merge(&stats.traffic);
                    out.device_transfers += stats.device_transfers;
                    sys
                }
            };
            let t_update = t1.elapsed().as_secs_f64();

            let t2 = Instant::now();
            let solved = match sys.active() {
                Some(a) => {
                    let b = vec![1.0; a.matrix().n_owned()];
                    Some(cg_solve(a.matrix(), a.halo(), &b, cfg.tol, cfg.max_iter, a.comm())?)
                }
                None => None,
            };
            let t_solve = t2.elapsed().as_secs_f64();
            let t_step = t0.elapsed().as_secs_f64() + if step == 1 { t_base } else { 0.0 };

            let (iterations, residual, converged) = solved
                .as_ref()
                .map_or((0, 0.0, true), |(_, r)| (r.iterations, r.residual, r.converged));
            out.steps.push(StepRecord {
                step,
                t_assemble,
                t_update,
                t_solve,
                t_step,
                iterations,
                residual,
                converged,
            });

            if cfg.verify {
                let x = solved.as_ref().map(|(x, _)| x.as_slice());
                verify_step(cfg, step, sys, x, &m, &i, &pm, comm, reference.as_ref(), &mut out.failures)?;
            }
        }
        if let Some(a) = system.as_ref().and_then(RankSystem::active) {
            out.nnz = (a.matrix().local().nnz(), a.matrix().nonlocal().nnz());
        }
        Ok(out)
    })?;

    let outputs = run.results;
    let steps = (0..cfg.n_steps)
        .map(|s| {
            let max = |f: fn(&StepRecord) -> f64| {
                outputs.iter().map(|o| f(&o.steps[s])).fold(0.0, f64::max)
            };
            StepRecord {
                t_assemble: max(|r| r.t_assemble),
                t_update: max(|r| r.t_update),
                t_solve: max(|r| r.t_solve),
                t_step: max(|r| r.t_step),
                ..outputs[0].steps[s]
            }
        })
        .collect();
    let mut traffic = TrafficCounters::default();
    for o in &outputs {
        traffic.merge(&o.traffic);
    }
    let verify_failures: Vec<String> = outputs.iter().flat_map(|o| o.failures.clone()).collect();
    Ok(BenchRecord {
        case: cfg.case_name(),
        grid: grid.dims(),
        n_cells: grid.total_cells(),
        n_cpu: cfg.n_cpu,
        n_gpu: pm.n_gpu(),
        alpha: cfg.alpha,
        mode: cfg.mode,
        steps,
        nnz_local: outputs.iter().map(|o| o.nnz.0).sum(),
        nnz_nonlocal: outputs.iter().map(|o| o.nnz.1).sum(),
        update_traffic: traffic,
        device_transfers: outputs.iter().map(|o| o.device_transfers).sum(),
        verified: cfg.verify.then_some(verify_failures.is_empty()),
        verify_failures,
    })
}

/// Relative error allowed between the distributed and the reference solution.
fn solution_tolerance(tol: f64) -> f64 {
    (1e3 * tol).max(1e-6)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Per-step oracle checks. Collective over all ranks; failures are
/// collected on the root instead of aborting the run.
#[allow(clippy::too_many_arguments)]
fn verify_step(
    cfg: &CaseConfig,
    step: usize,
    sys: &RankSystem,
    x: Option<&[f64]>,
    m: &repart_core::matrix::LduMatrix,
    ifaces: &[repart_core::matrix::InterfaceBlock],
    pm: &PartitionMap,
    comm: &Comm,
    reference: Option<&CooMatrix>,
    failures: &mut Vec<String>,
) -> repart_core::Result<()> {
    let fresh = if step > 1 {
        Some(repartition(m, ifaces, pm, comm)?)
    } else {
        None
    };
    let Some(a) = sys.active() else {
        return Ok(());
    };
    let gathered = gather_global(a)?;
    let x_all = gather_vector(a, x.expect("active ranks solve"))?;
    let rebuilt = match fresh.as_ref().and_then(RankSystem::active) {
        Some(f) => gather_global(f)?,
        None => None,
    };
    let (Some(gathered), Some(x_all), Some(reference)) = (gathered, x_all, reference) else {
        return Ok(());
    };

    let expected = scale_diagonal(reference, perturbation_factor(step));
    let rep = compare_matrices(&gathered, &expected, 0.0);
    if !rep.is_empty() {
        failures.push(format!(
            "step {step}: matrix differs from reference ({} mismatches)",
            rep.mismatch_count
        ));
    }
    if let Some(rebuilt) = rebuilt {
        let rep = compare_matrices(&gathered, &rebuilt, 0.0);
        if !rep.is_empty() {
            failures.push(format!(
                "step {step}: updated matrix differs from a fresh repartition ({} mismatches)",
                rep.mismatch_count
            ));
        }
    }
    let b = vec![1.0; expected.n_rows()];
    match reference_solve(&expected, &b, cfg.tol * 1e-2) {
        Ok(want) => {
            let err = rel_diff(&x_all, &want);
            if err > solution_tolerance(cfg.tol) {
                failures.push(format!("step {step}: solution relative error {err:e}"));
            }
        }
        Err(e) => failures.push(format!("step {step}: reference solve failed: {e}")),
    }
    Ok(())
}
