mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eigsur::bounds::BoundPolicy;
use eigsur::compare::compare;
use eigsur::greedy::{run, GreedyConfig, Grid, SweepMode};
use eigsur::par::Parallelism;
use eigsur::pencil;
use eigsur::problems::Fixture;
use eigsur::surrogate::{audit, PencilSource, Surrogate};
use eigsur::AffinePencil;

#[derive(Parser)]
#[command(name = "eigsur", version, about = "Reduced-basis surrogates for the smallest eigenvalue of parametrized pencils")]
struct Cli {
    /// Worker threads (default: all cores). 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the greedy construction and write the surrogate directory.
    Build(BuildArgs),
    /// Evaluate a surrogate at points or on a grid.
    Eval(EvalArgs),
    /// Compare a surrogate with full eigensolves on a grid.
    Audit(AuditArgs),
    /// Run the four enrichment variants on one problem.
    Compare(CompareArgs),
    /// Built-in test problems.
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// Write a built-in fixture as a pencil file plus Matrix Market terms.
    Export {
        /// One of example1, example1-identity, example3, synthetic, beam, random.
        name: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Pencil definition file (JSON or TOML).
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    pencil: Option<PathBuf>,
    /// Built-in fixture name.
    #[arg(long)]
    fixture: Option<String>,
    /// Fixture size.
    #[arg(long)]
    n: Option<usize>,
    /// Seed for random fixtures and eigensolver start vectors.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundArg {
    Auto,
    Bf,
    Kt,
}

impl From<BoundArg> for BoundPolicy {
    fn from(b: BoundArg) -> Self {
        match b {
            BoundArg::Auto => BoundPolicy::Auto,
            BoundArg::Bf => BoundPolicy::BauerFike,
            BoundArg::Kt => BoundPolicy::KatoTemple,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Skip,
    Exhaustive,
}

#[derive(Args, Clone)]
struct GreedyArgs {
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Eigenvectors added per sample.
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Also add eigenvector derivatives.
    #[arg(long)]
    derivatives: bool,
    /// Points per dimension of the initial grid, e.g. 3,3.
    #[arg(long, value_delimiter = ',')]
    init_grid: Vec<usize>,
    /// Points per dimension of the training grid, e.g. 25,25.
    #[arg(long, value_delimiter = ',')]
    train_grid: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    nmax: usize,
    #[arg(long, value_enum, default_value_t = BoundArg::Auto)]
    bound: BoundArg,
    #[arg(long, value_enum, default_value_t = SweepArg::Skip)]
    sweep: SweepArg,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    greedy: GreedyArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Surrogate directory.
    surrogate: PathBuf,
    /// Parameter point, comma separated; repeatable.
    #[arg(long, value_delimiter = ',', num_args = 1, action = clap::ArgAction::Append, allow_hyphen_values = true)]
    omega: Vec<String>,
    /// Points per dimension of an evaluation grid over the domain.
    #[arg(long, value_delimiter = ',', conflicts_with = "omega")]
    grid: Vec<usize>,
    /// CSV output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extrapolate outside the domain with a warning instead of failing.
    #[arg(long)]
    allow_outside: bool,
}

#[derive(Args)]
struct AuditArgs {
    surrogate: PathBuf,
    /// Audit grid (default: the training grid of the build).
    #[arg(long, value_delimiter = ',')]
    grid: Vec<usize>,
    /// Pencil file to use instead of the one recorded in the manifest.
    #[arg(long)]
    pencil: Option<PathBuf>,
    /// Directory for audit.json and audit.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    greedy: GreedyArgs,
    /// Directory for compare.json and compare.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EIGSUR_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    let par = if cli.threads == Some(1) { Parallelism::Sequential } else { Parallelism::Parallel };
    match cli.command {
        Command::Build(a) => build(a, par),
        Command::Eval(a) => eval(a, par),
        Command::Audit(a) => audit_cmd(a, par),
        Command::Compare(a) => compare_cmd(a, par),
        Command::Fixture(FixtureCommand::Export { name, n, seed, out }) => {
            let spec = Fixture::from_name(&name, n, seed)?.build()?;
            let path = pencil::save(&spec.pencil, &out)?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn resolve_source(a: &SourceArgs) -> Result<(PencilSource, AffinePencil)> {
    let source = match (&a.pencil, &a.fixture) {
        (Some(path), _) => {
            let path = path.canonicalize().with_context(|| format!("{}", path.display()))?;
            PencilSource::File { path }
        }
        (None, Some(name)) => PencilSource::Fixture { fixture: Fixture::from_name(name, a.n, a.seed)? },
        (None, None) => bail!("either --pencil or --fixture is required"),
    };
    let p = source.load()?;
    Ok((source, p))
}

fn greedy_config(g: &GreedyArgs, seed: u64, par: Parallelism) -> GreedyConfig {
    let mut cfg = GreedyConfig {
        m: g.m,
        use_derivatives: g.derivatives,
        tol: g.tol,
        n_max: g.nmax,
        init_grid: g.init_grid.clone(),
        train_grid: g.train_grid.clone(),
        bound_policy: g.bound.into(),
        sweep: match g.sweep {
            SweepArg::Skip => SweepMode::Skip,
            SweepArg::Exhaustive => SweepMode::Exhaustive,
        },
        parallelism: par,
        ..Default::default()
    };
    cfg.eig.seed ^= seed;
    cfg
}

fn build(a: BuildArgs, par: Parallelism) -> Result<ExitCode> {
    let (source, p) = resolve_source(&a.source)?;
    for w in p.validate()? {
        log::warn!("{w}");
    }
    let cfg = greedy_config(&a.greedy, a.source.seed, par);
    let (state, report) = run(&p, &cfg)?;
    let s = Surrogate::from_state(&state, Some(source.clone()), report.converged);
    s.save(&a.out)?;
    let evals = s.evaluate_many(&state.train.points(), par)?;
    output::write_build(&a.out, &source, &p, &cfg, &report, &state.train, &evals)?;
    println!(
        "{}: {} iterations, {} samples, basis dimension {}, final max bound {:.3e}",
        if report.converged { "converged" } else { "stopped at nmax" },
        report.iterations,
        report.sample_count,
        report.basis_dim,
        report.max_bound_trace.last().copied().unwrap_or(0.0)
    );
    Ok(if report.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn parse_points(raw: &[String], d: usize) -> Result<Vec<Vec<f64>>> {
    let values: Vec<f64> =
        raw.iter().map(|s| s.trim().parse::<f64>().with_context(|| format!("bad coordinate `{s}`"))).collect::<Result<_>>()?;
    if !values.len().is_multiple_of(d) {
        bail!("{} coordinates given for d = {d}", values.len());
    }
    Ok(values.chunks(d).map(<[f64]>::to_vec).collect())
}

fn eval(a: EvalArgs, par: Parallelism) -> Result<ExitCode> {
    let mut s = Surrogate::load(&a.surrogate)?;
    if a.allow_outside {
        s = s.with_domain_policy(pencil::DomainPolicy::Warn);
    }
    let points = if !a.grid.is_empty() {
        Grid::new(s.model.domain(), &a.grid)?.points()
    } else if !a.omega.is_empty() {
        parse_points(&a.omega, s.d())?
    } else {
        bail!("give --omega or --grid");
    };
    let evals = s.evaluate_many(&points, par)?;
    output::write_eval(a.out.as_deref(), s.d(), &points, &evals)?;
    Ok(ExitCode::SUCCESS)
}

fn audit_cmd(a: AuditArgs, par: Parallelism) -> Result<ExitCode> {
    let s = Surrogate::load(&a.surrogate)?;
    let p = match &a.pencil {
        Some(path) => pencil::load(path)?,
        None => s.pencil()?,
    };
    let counts = if a.grid.is_empty() { s.config.train_counts(s.d()) } else { a.grid.clone() };
    let points = Grid::new(s.model.domain(), &counts)?.points();
    let report = audit(&s, &p, &points, par)?;
    if let Some(dir) = &a.out {
        output::write_audit(dir, &report)?;
    }
    println!(
        "{} points: max error {:.3e}, tol {:.1e}, {} at or above tol; bound coverage {:.4}, Bauer-Fike coverage {:.4}",
        report.points, report.max_error, report.tol, report.failures, report.bound_coverage, report.bauer_fike_coverage
    );
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn compare_cmd(a: CompareArgs, par: Parallelism) -> Result<ExitCode> {
    let (_, p) = resolve_source(&a.source)?;
    let cfg = greedy_config(&a.greedy, a.source.seed, par);
    let table = compare(&p, &cfg)?;
    print!("{table}");
    if let Some(dir) = &a.out {
        output::write_compare(dir, &table)?;
    }
    Ok(ExitCode::SUCCESS)
}
