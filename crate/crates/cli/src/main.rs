use anyhow::{bail, Context, Result};
use clap::Parser;
use relaxrk::harness::{self, ExperimentSpec, Mode};
use relaxrk::stepper::{FsalRStage1, RFsalCompare, RFsalEmbedded, RunRecord, Strategy};
use relaxrk::PidGains;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Convergence studies, work-precision sweeps and single runs of relaxation
/// Runge-Kutta methods. Writes one CSV row per run.
#[derive(Debug, Parser)]
#[command(name = "relaxrk", version)]
struct Args {
    /// convergence, work-precision or single
    #[arg(long, default_value = "single")]
    mode: Mode,

    /// Test problem, see --list-problems
    #[arg(long, default_value = "harmonic_oscillator")]
    problem: String,

    /// bs3, dp5 or rk4
    #[arg(long, default_value = "bs3")]
    method: String,

    /// Comma-separated strategies: baseline, naive, fsal-r, r-fsal, or
    /// all-relaxation for every relaxation strategy and variant
    #[arg(long, value_delimiter = ',', default_value = "baseline")]
    strategy: Vec<String>,

    /// First-stage approximation for fsal-r: simple or interpolation
    #[arg(long, default_value = "interpolation")]
    fsalr_stage1: FsalRStage1,

    /// Embedded solution variant for r-fsal: v1, v2, v3 or v4
    #[arg(long, default_value = "v4")]
    rfsal_variant: RFsalEmbedded,

    /// Error comparison for r-fsal: c1, c2 or c3
    #[arg(long, default_value = "c3")]
    rfsal_compare: RFsalCompare,

    /// Tolerance ladder for work-precision sweeps
    #[arg(long, value_delimiter = ',')]
    tols: Vec<f64>,

    /// Step sizes for convergence sweeps; one value makes a single run fixed-step
    #[arg(long, value_delimiter = ',')]
    dts: Vec<f64>,

    /// Final time
    #[arg(long, default_value_t = 10.0)]
    tend: f64,

    /// Absolute tolerance of a single adaptive run
    #[arg(long, default_value_t = 1e-6)]
    abs_tol: f64,

    /// Relative tolerance of a single adaptive run
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,

    /// Controller gains beta1,beta2,beta3
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,

    /// Threshold on the step size factor below which a step is rejected
    #[arg(long)]
    accept_threshold: Option<f64>,

    /// Initial step size; estimated from the problem when omitted
    #[arg(long)]
    dt0: Option<f64>,

    /// Largest number of step attempts per run
    #[arg(long, default_value_t = 10_000_000)]
    max_steps: u64,

    /// CSV output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed of the random-state conservation check
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of random states in the conservation check; 0 skips it
    #[arg(long, default_value_t = 16)]
    check_samples: usize,

    /// Write the accepted-step time series of a single run to this CSV path
    #[arg(long)]
    trajectory: Option<PathBuf>,

    /// Initial angle and angular velocity of the pendulum
    #[arg(long, value_delimiter = ',')]
    pendulum_u0: Option<Vec<f64>>,

    /// Number of DG elements for advection_dg
    #[arg(long)]
    dg_elements: Option<usize>,

    /// Polynomial degree of the DG elements
    #[arg(long)]
    dg_degree: Option<usize>,

    /// Number of Fourier collocation points for the BBM problems
    #[arg(long)]
    fourier_modes: Option<usize>,

    /// Skip the reference solution and report NaN errors
    #[arg(long)]
    no_error: bool,

    /// Print the registered problem names and exit
    #[arg(long)]
    list_problems: bool,
}

fn strategies(args: &Args) -> Result<Vec<Strategy>> {
    let mut out = Vec::new();
    for name in &args.strategy {
        let name = name.trim();
        if name == "all-relaxation" {
            out.extend(Strategy::all_relaxation());
            continue;
        }
        out.push(Strategy::from_parts(
            name,
            args.fsalr_stage1,
            args.rfsal_variant,
            args.rfsal_compare,
        )?);
    }
    Ok(out)
}

fn build_spec(args: &Args) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::new(args.mode, &args.problem, &args.method, strategies(args)?, args.tend);
    if !args.tols.is_empty() {
        spec.tols = args.tols.clone();
    }
    spec.dts = args.dts.clone();
    spec.abs_tol = args.abs_tol;
    spec.rel_tol = args.rel_tol;
    if let Some(b) = &args.beta {
        if b.len() != 3 {
            bail!("--beta takes three comma-separated gains");
        }
        spec.controller.gains = PidGains {
            beta1: b[0],
            beta2: b[1],
            beta3: b[2],
        };
    }
    if let Some(th) = args.accept_threshold {
        spec.controller.accept_threshold = th;
    }
    spec.dt0 = args.dt0;
    spec.max_steps = args.max_steps;
    spec.seed = args.seed;
    spec.record_trajectory = args.trajectory.is_some();
    spec.compute_error = !args.no_error;
    if let Some(p) = &args.pendulum_u0 {
        if p.len() != 2 {
            bail!("--pendulum-u0 takes an angle and an angular velocity");
        }
        spec.problem_options.pendulum_u0 = [p[0], p[1]];
    }
    if let Some(n) = args.dg_elements {
        spec.problem_options.dg_elements = n;
    }
    if let Some(n) = args.dg_degree {
        spec.problem_options.dg_degree = n;
    }
    if let Some(n) = args.fourier_modes {
        spec.problem_options.fourier_modes = n;
    }
    if spec.mode == Mode::Convergence && spec.dts.is_empty() {
        bail!("--mode convergence needs --dts");
    }
    if args.trajectory.is_some() && spec.mode != Mode::Single {
        bail!("--trajectory is only available with --mode single");
    }
    Ok(spec)
}

/// `traj.csv` for one run, `traj.<strategy>-<variant>.csv` for several.
fn trajectory_path(base: &Path, rec: &RunRecord, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}.{}-{}.{ext}", rec.strategy, rec.variant))
}

fn main() -> Result<()> {
    let args = Args::parse();
    if args.list_problems {
        for name in relaxrk::problems::PROBLEM_NAMES {
            println!("{name}");
        }
        return Ok(());
    }
    let spec = build_spec(&args)?;

    if args.check_samples > 0 {
        let defect = harness::conservation_check(&spec, args.check_samples)?;
        eprintln!("conservation defect over {} random states: {defect:.3e}", args.check_samples);
    }

    let rows = if spec.mode == Mode::Convergence {
        let series = harness::run_convergence(&spec)?;
        for s in &series {
            let slope = s.slope.map_or("none".to_string(), |v| format!("{v:.3}"));
            eprintln!("{} {}: observed slope {slope}", s.strategy, spec.method);
        }
        series.into_iter().flat_map(|s| s.rows).collect()
    } else {
        harness::run(&spec)?
    };

    match &args.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            harness::write_csv(&rows, BufWriter::new(f))?;
        }
        None => harness::write_csv(&rows, io::stdout().lock())?,
    }

    if let Some(base) = &args.trajectory {
        for rec in &rows {
            let path = trajectory_path(base, rec, rows.len() > 1);
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            harness::write_trajectory(rec, BufWriter::new(f))?;
        }
    }

    for rec in rows.iter().filter(|r| r.failure.is_some()) {
        if let Some(fail) = &rec.failure {
            eprintln!("{} {} {}: {} ({fail})", rec.problem, rec.strategy, rec.variant, rec.status.as_str());
        }
    }
    io::stderr().flush()?;
    if !harness::all_rows_pass(&rows) {
        std::process::exit(1);
    }
    Ok(())
}
