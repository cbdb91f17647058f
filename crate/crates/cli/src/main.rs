use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use reflab::grid::{ScalarField, SpaceTimeGrid, VectorField3};
use reflab::harness::{
    run_experiment, verify_criterion, verify_with, write_estimate_csv, write_verify_outputs, ExperimentConfig,
    ExperimentId, Level, VerifyReport,
};
use reflab::heat_kernels::{kernel_table, KernelParams};
use reflab::potentials::{
    eta_density, gamma3, marginal_density, sqrt_8_over_pi, u3_potential, PotentialQuery, TimeQuadrature,
};
use reflab::reflected_spde::{solve_reflected, Scheme, SolveOptions, Trajectory};
use reflab::rng::RngStream;
use reflab::samplers::{
    sample_bessel3_bridge, sample_brownian_bridge_3d, stochastic_convolution_path, string_transition,
};

const DEFAULT_SEED: u64 = 20261015;

/// Exit status when a run completes but some comparison fails.
const EXIT_FAIL: u8 = 2;

#[derive(Parser)]
#[command(name = "reflab", version, about = "Stochastic heat equation with reflection: kernels, simulation, estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the Dirichlet heat kernels, or the potentials with --potentials.
    KernelTable(KernelTableArgs),
    /// Simulate one path of a process and emit CSV snapshots.
    Simulate(SimulateArgs),
    /// Run one estimator experiment against its target.
    Estimate(EstimateArgs),
    /// Run the acceptance criteria and write results.csv and summary.json.
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
struct KernelTableArgs {
    /// Tabulate U₃, Γ₃ and the marginal density instead of the kernels.
    #[arg(long)]
    potentials: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.5,1")]
    times: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,0.9")]
    thetas: Vec<f64>,
    /// Levels |a| for --potentials; the level vector is (a,0,0).
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.6")]
    levels: Vec<f64>,
    /// Series truncation K.
    #[arg(long, default_value_t = 10_000)]
    k: usize,
    /// Certified truncation tolerance for every series.
    #[arg(long, default_value_t = 1e-8)]
    tail_tol: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Process {
    Bridge3,
    Bessel3,
    String,
    Convolution,
    Reflected,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Lcp,
    Penalized,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Zero,
    Bessel3,
    File,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    process: Process,
    /// Interior grid sites.
    #[arg(long, default_value_t = 63)]
    n: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Time horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "lcp")]
    scheme: SchemeArg,
    /// Penalty parameter for --scheme penalized.
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
    /// Initial condition for the reflected process.
    #[arg(long, value_enum, default_value = "bessel3")]
    init: InitArg,
    /// CSV with one value per site (last column is used) for --init file.
    #[arg(long)]
    init_file: Option<PathBuf>,
    /// Number of evenly spaced snapshots after t = 0.
    #[arg(long, default_value_t = 10)]
    snapshots: usize,
    /// Snapshot CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ledger CSV for the reflected process; defaults to <out stem>.ledger.csv.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[arg(long, value_parser = parse_experiment)]
    experiment: Option<ExperimentId>,
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    a_list: Option<Vec<f64>>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// intl3: evaluate the quadrature surrogate only.
    #[arg(long)]
    analytic_surrogate: bool,
    /// Treat band-resolution warnings as errors.
    #[arg(long)]
    strict_resolution: bool,
    /// Output CSV (a .json with config and results is written beside it);
    /// stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LevelArg {
    Smoke,
    Full,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "smoke")]
    level: LevelArg,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "verify-out")]
    out: PathBuf,
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u8>>,
}

fn parse_experiment(s: &str) -> std::result::Result<ExperimentId, String> {
    ExperimentId::parse(s).map_err(|e| e.to_string())
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn kernel_table_cmd(args: &KernelTableArgs) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(&args.out)?);
    if args.potentials {
        w.write_record([
            "theta",
            "a",
            "u3",
            "u3_err",
            "gamma3",
            "gamma3_err",
            "rho_theta",
            "eta_density",
            "l_mass",
            "gamma3_stationary_mean",
        ])?;
        let zero = VectorField3 { values: Vec::new() };
        for &theta in &args.thetas {
            let g = gamma3(&zero, theta, &TimeQuadrature::default())?;
            for &a in &args.levels {
                let u = u3_potential(&PotentialQuery::new(theta, [a, 0.0, 0.0], zero.clone()))?;
                let eta = eta_density(theta);
                w.serialize((
                    theta,
                    a,
                    u.value,
                    u.err_estimate,
                    g.value,
                    g.err_estimate,
                    marginal_density(theta, a)?,
                    eta,
                    4.0 * eta,
                    (1.0 - theta).sqrt() * sqrt_8_over_pi(),
                ))?;
            }
        }
    } else {
        let params = KernelParams::new(args.k, args.tail_tol)?;
        w.write_record(["kernel", "t", "theta", "theta_p", "value", "err_bound"])?;
        for r in kernel_table(&args.times, &args.thetas, &params)? {
            w.serialize((&r.kernel, r.t, r.theta, r.theta_p, r.value, r.err_bound))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_initial(path: &Path, grid: &SpaceTimeGrid) -> Result<ScalarField> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let Some(last) = rec.iter().next_back() else { continue };
        match last.trim().parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if values.is_empty() => continue, // header line
            Err(e) => bail!("{}: bad value '{last}': {e}", path.display()),
        }
    }
    if values.len() != grid.n() {
        bail!("{} holds {} values, the grid has {} sites", path.display(), values.len(), grid.n());
    }
    Ok(ScalarField { values })
}

fn ledger_path(args: &SimulateArgs) -> Result<PathBuf> {
    if let Some(p) = &args.ledger {
        return Ok(p.clone());
    }
    match &args.out {
        Some(out) => Ok(out.with_extension("ledger.csv")),
        None => bail!("--process reflected needs --out or --ledger for the ledger CSV"),
    }
}

fn scalar_rows(w: &mut csv::Writer<Box<dyn Write>>, grid: &SpaceTimeGrid, t: f64, f: &ScalarField) -> Result<()> {
    for (i, v) in f.values.iter().enumerate() {
        w.serialize((t, grid.theta(i), v))?;
    }
    Ok(())
}

fn vector_rows(w: &mut csv::Writer<Box<dyn Write>>, grid: &SpaceTimeGrid, t: f64, f: &VectorField3) -> Result<()> {
    for (i, v) in f.values.iter().enumerate() {
        w.serialize((t, grid.theta(i), v[0], v[1], v[2]))?;
    }
    Ok(())
}

fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let grid = SpaceTimeGrid::new(args.n, args.dt, args.horizon)?;
    let mut rng = RngStream::new(args.seed, 0);
    let snaps = args.snapshots.max(1);
    let every = (grid.steps() / snaps).max(1);
    let ledger = if args.process == Process::Reflected {
        Some(ledger_path(args)?)
    } else {
        None
    };
    let mut w = csv::Writer::from_writer(output(&args.out)?);
    match args.process {
        Process::Bridge3 => {
            w.write_record(["t", "theta", "v1", "v2", "v3"])?;
            vector_rows(&mut w, &grid, 0.0, &sample_brownian_bridge_3d(&grid, &mut rng))?;
        }
        Process::Bessel3 => {
            w.write_record(["t", "theta", "value"])?;
            scalar_rows(&mut w, &grid, 0.0, &sample_bessel3_bridge(&grid, &mut rng))?;
        }
        Process::String => {
            // started from the invariant law, advanced in exact transitions
            w.write_record(["t", "theta", "v1", "v2", "v3"])?;
            let mut z = sample_brownian_bridge_3d(&grid, &mut rng);
            vector_rows(&mut w, &grid, 0.0, &z)?;
            let step = args.horizon / snaps as f64;
            for k in 1..=snaps {
                z = string_transition(&z, step, &mut rng)?;
                vector_rows(&mut w, &grid, k as f64 * step, &z)?;
            }
        }
        Process::Convolution => {
            w.write_record(["t", "theta", "value"])?;
            scalar_rows(&mut w, &grid, 0.0, &ScalarField::zeros(grid.n()))?;
            let path = stochastic_convolution_path(&grid, grid.dt(), grid.steps(), &mut rng)?;
            for (k, f) in path.iter().enumerate() {
                let step = k + 1;
                if step % every == 0 || step == path.len() {
                    scalar_rows(&mut w, &grid, step as f64 * grid.dt(), f)?;
                }
            }
        }
        Process::Reflected => {
            let x0 = match args.init {
                InitArg::Zero => ScalarField::zeros(grid.n()),
                InitArg::Bessel3 => sample_bessel3_bridge(&grid, &mut rng),
                InitArg::File => {
                    let p = args.init_file.as_ref().context("--init file needs --init-file")?;
                    read_initial(p, &grid)?
                }
            };
            let scheme = match args.scheme {
                SchemeArg::Lcp => Scheme::Lcp,
                SchemeArg::Penalized => Scheme::Penalized { delta: args.delta },
            };
            let opts = SolveOptions {
                scheme,
                snapshot_every: every,
                ..Default::default()
            };
            let tr = solve_reflected(&x0, &grid, &mut rng, &opts)?;
            w.write_record(["t", "theta", "value"])?;
            for s in &tr.snapshots {
                scalar_rows(&mut w, &grid, s.t, &s.u)?;
            }
            write_ledger(&tr, &ledger.expect("set for reflected"))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_ledger(tr: &Trajectory, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["t", "theta", "eta_density"])?;
    for s in &tr.snapshots {
        for (i, e) in s.eta.density.iter().enumerate() {
            w.serialize((s.t, tr.grid.theta(i), e))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn estimate_cmd(args: &EstimateArgs) -> Result<bool> {
    let mut cfg = match (&args.config, args.experiment) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(e) = args.experiment {
                cfg.experiment = e;
            }
            cfg
        }
        (None, Some(e)) => ExperimentConfig::preset(e),
        (None, None) => bail!("give --experiment or --config"),
    };
    if let Some(v) = args.theta {
        cfg.theta = v;
    }
    if let Some(v) = &args.eps_list {
        cfg.eps_list = v.clone();
    }
    if let Some(v) = &args.a_list {
        cfg.a_list = v.clone();
    }
    if let Some(v) = args.replicas {
        cfg.replicas = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.n {
        cfg.n_sites = v;
    }
    if let Some(v) = args.dt {
        cfg.dt = v;
    }
    if let Some(v) = args.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    cfg.analytic_surrogate |= args.analytic_surrogate;
    cfg.strict_resolution |= args.strict_resolution;
    cfg.output = args.out.clone();
    let results = run_experiment(&cfg)?;
    if cfg.output.is_none() {
        write_estimate_csv(&results, &mut io::stdout().lock())?;
    }
    for r in results.iter().filter(|r| !r.pass) {
        eprintln!(
            "FAIL {} {}: {:.6} (stderr {:.2e}) vs target {:.6}",
            r.experiment, r.param, r.estimate, r.stderr, r.target
        );
    }
    Ok(results.iter().all(|r| r.pass))
}

fn verify_cmd(args: &VerifyArgs) -> Result<bool> {
    let level = match args.level {
        LevelArg::Smoke => Level::Smoke,
        LevelArg::Full => Level::Full,
    };
    let report = match &args.only {
        Some(ids) => {
            let mut criteria = Vec::new();
            for &id in ids {
                let c = verify_criterion(id, level, args.seed)?;
                eprintln!("{}", c.line());
                criteria.push(c);
            }
            VerifyReport {
                level,
                seed: args.seed,
                criteria,
            }
        }
        None => verify_with(level, args.seed, |c| eprintln!("{}", c.line()))?,
    };
    write_verify_outputs(&report, &args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::KernelTable(a) => kernel_table_cmd(a).map(|_| true),
        Command::Simulate(a) => simulate_cmd(a).map(|_| true),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Verify(a) => verify_cmd(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
