use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use repart_cli::advise::{advise, ideal_curves, AdviseInput};
use repart_cli::report::{fmt_float, sweep, write_csv, CaseOutcome};
use repart_cli::{export_mtx, run_case, CaseConfig, CliError, GridSpec, Result};
use repart_core::costmodel::{read_curves_csv, CommCostParams};
use repart_core::transport::SchedulerMode;
use repart_core::update::TransferMode;

#[derive(Parser)]
#[command(name = "repart", version, about = "Repartitioned assemble/update/solve benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and print its summary.
    Run(CaseArgs),
    /// Run every combination of the listed ranks, alphas and modes.
    Sweep(CaseArgs),
    /// Recommend rank counts from the cost model.
    Advise(AdviseArgs),
    /// Write the assembled global matrix in Matrix Market format.
    ExportMtx {
        #[command(flatten)]
        case: CaseArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(id = "grid_choice", required = true, multiple = false, args = ["grid_np", "grid"])]
struct GridArgs {
    /// Cavity cube with 210*N cells per axis.
    #[arg(long = "grid-np", value_name = "N")]
    grid_np: Option<usize>,
    /// Explicit grid size.
    #[arg(long, value_name = "NX,NY,NZ", value_parser = parse_dims)]
    grid: Option<[usize; 3]>,
}

#[derive(Args)]
struct CaseArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// CPU ranks; a comma-separated list for sweeps.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    ranks: Vec<usize>,
    /// CPU ranks per solver rank; a comma-separated list for sweeps.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    alpha: Vec<usize>,
    /// direct or staged; a comma-separated list for sweeps.
    #[arg(long, value_delimiter = ',', default_value = "direct")]
    mode: Vec<TransferMode>,
    #[arg(long, default_value_t = repart_cli::case::DEFAULT_TOL)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = repart_cli::case::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = repart_cli::case::DEFAULT_STEPS)]
    steps: usize,
    /// Check every step against the sequential oracles.
    #[arg(long)]
    verify: bool,
    /// Physical GPU count, used for case naming.
    #[arg(long)]
    gpus: Option<usize>,
    /// Run ranks concurrently instead of in deterministic turns.
    #[arg(long)]
    concurrent: bool,
    /// Write the CSV report here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AdviseArgs {
    /// CPU cores available.
    #[arg(long)]
    ranks: usize,
    #[arg(long)]
    gpus: usize,
    /// CSV with columns n,t_as,t_ls; ideal speed-ups when omitted.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Seconds per coefficient moved between the groups.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Seconds per message between the groups.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Coefficients moved per timestep.
    #[arg(long, default_value_t = 0.0)]
    moved: f64,
    /// Solver ranks allowed per GPU.
    #[arg(long, default_value_t = 1)]
    oversub: usize,
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[usize; 3]>::try_from(dims).map_err(|d| format!("expected NX,NY,NZ, got {} values", d.len()))
}

impl CaseArgs {
    fn grid(&self) -> GridSpec {
        match (&self.grid.grid_np, &self.grid.grid) {
            (Some(n), _) => GridSpec::Cavity(*n),
            (None, Some(d)) => GridSpec::Dims(d[0], d[1], d[2]),
            (None, None) => unreachable!("clap requires a grid"),
        }
    }

    fn configs(&self) -> Vec<CaseConfig> {
        let mut out = Vec::new();
        for &n_cpu in &self.ranks {
            for &alpha in &self.alpha {
                for &mode in &self.mode {
                    out.push(CaseConfig {
                        mode,
                        tol: self.tol,
                        max_iter: self.max_iter,
                        n_steps: self.steps,
                        verify: self.verify,
                        n_gpus: self.gpus,
                        scheduler: if self.concurrent {
                            SchedulerMode::Concurrent
                        } else {
                            SchedulerMode::Deterministic
                        },
                        ..CaseConfig::new(self.grid(), n_cpu, alpha)
                    });
                }
            }
        }
        out
    }

    fn single(&self) -> Result<CaseConfig> {
        match self.configs().as_slice() {
            [one] => Ok(one.clone()),
            _ => Err(CliError::Invalid(
                "run takes a single value for --ranks, --alpha and --mode; use sweep for lists".into(),
            )),
        }
    }
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), fmt_float)
}

fn run(args: &CaseArgs) -> Result<bool> {
    let cfg = args.single()?;
    let outcome = CaseOutcome {
        result: run_case(&cfg),
        config: cfg,
    };
    if let Some(path) = &args.csv {
        write_csv(std::slice::from_ref(&outcome), File::create(path)?)?;
    }
    let rec = outcome.result?;
    println!("case          {}", rec.case);
    println!("grid          {}x{}x{} ({} cells)", rec.grid[0], rec.grid[1], rec.grid[2], rec.n_cells);
    println!("ranks         {} CPU / {} GPU (alpha {}), {}", rec.n_cpu, rec.n_gpu, rec.alpha, rec.mode);
    println!("nnz           {} local, {} nonlocal", rec.nnz_local, rec.nnz_nonlocal);
    println!("iterations    {}", opt(rec.iterations()));
    println!("residual      {}", fmt_float(rec.final_residual()));
    println!("t_assemble    {}", opt(rec.t_assemble()));
    println!("t_update      {}", opt(rec.t_update()));
    println!("t_solve       {}", opt(rec.t_solve()));
    println!("t_step        {}", opt(rec.t_step()));
    println!("phi           {}", opt(rec.phi()));
    println!("perf          {}", opt(rec.perf()));
    match rec.verified {
        Some(true) => println!("verify        passed"),
        Some(false) => {
            println!("verify        FAILED");
            for f in &rec.verify_failures {
                println!("  {f}");
            }
        }
        None => {}
    }
    if !rec.converged() {
        println!("solver did not converge");
    }
    Ok(rec.ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(&args),
        Command::Sweep(args) => sweep(&args.configs()).and_then(|outcomes| {
            write_csv(&outcomes, output(args.csv.as_ref())?)?;
            for o in outcomes.iter().filter(|o| !o.ok()) {
                eprintln!("case {} failed", o.config.case_name());
            }
            Ok(outcomes.iter().all(CaseOutcome::ok) || !args.verify)
        }),
        Command::Advise(a) => (|| {
            let curves = match &a.curves {
                Some(p) => read_curves_csv(File::open(p)?)?,
                None => ideal_curves(),
            };
            let advice = advise(&AdviseInput {
                n_cpu: a.ranks,
                n_gpus: a.gpus,
                curves,
                comm: CommCostParams::new(a.beta, a.lambda)?,
                moved_coeffs: a.moved,
                oversub_max: a.oversub,
            })?;
            println!("{advice}");
            Ok(true)
        })(),
        Command::ExportMtx { case, out } => case
            .single()
            .and_then(|cfg| export_mtx(&cfg, output(out.as_ref())?))
            .map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
