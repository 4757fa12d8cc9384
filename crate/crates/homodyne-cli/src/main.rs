mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homodyne::patterns::{Precision, RangeMode};
use homodyne::reconstruct::BetaPolicy;
use homodyne::simulate::StateSpec;
use homodyne::wigner::LambdaMethod;
use homodyne::{Error, Result};

use config::{ErrorMode, EstimatorName, RunConfig};

/// Homodyne tomography: simulate quadrature data, reconstruct density
/// matrices with pattern functions, synthesize Wigner functions.
///
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "homodyne", version)]
struct Cli {
    /// JSON run config; its values override flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker thread cap
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true)]
    precision: Option<Precision>,

    /// extended (default) or plain
    #[arg(long, global = true)]
    range: Option<RangeMode>,

    /// Log more (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw synthetic quadrature samples from a pure state
    Simulate(SimulateArgs),
    /// Estimate the density matrix from a samples file
    Reconstruct(ReconstructArgs),
    /// Wigner function on a polar grid
    Wigner(WignerArgs),
    /// Summarize reconstruction outputs
    Report(ReportArgs),
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum StateKind {
    Cat,
    Coherent,
    Fock,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    state: Option<StateKind>,
    /// Re α for cat and coherent states
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha_im: f64,
    /// Number states of an equal-weight superposition
    #[arg(long, value_delimiter = ',')]
    levels: Vec<usize>,
    #[arg(long, short = 'M')]
    cutoff: Option<usize>,
    #[arg(long)]
    n_phi: Option<usize>,
    /// Samples per phase and block
    #[arg(long)]
    nsamples: Option<usize>,
    #[arg(long)]
    nblks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sampler grid size
    #[arg(long)]
    x_points: Option<usize>,
    /// Output directory
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn parse_beta(s: &str) -> std::result::Result<BetaPolicy, String> {
    if s == "heuristic" {
        return Ok(BetaPolicy::Heuristic);
    }
    match s.parse::<f64>() {
        Ok(b) if b > 0.0 && b <= 1.0 => Ok(BetaPolicy::Fixed(b)),
        _ => Err(format!("expected `heuristic` or a number in (0, 1], got {s:?}")),
    }
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Samples CSV
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, short = 'M')]
    cutoff: Option<usize>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorName>,
    /// Bin counts; several values give one output directory each
    #[arg(long, value_delimiter = ',')]
    n_bin: Vec<usize>,
    /// `heuristic` or a fixed value
    #[arg(long, value_parser = parse_beta)]
    beta: Option<BetaPolicy>,
    /// Error bars from block spread or per-sample variance
    #[arg(long, value_enum)]
    errors: Option<ErrorMode>,
    #[arg(long)]
    seed_floor: Option<usize>,
    /// Accept fewer phases than the cutoff (frequencies alias)
    #[arg(long)]
    allow_phase_aliasing: bool,
    /// True state CSV; adds deviations to the report
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WignerArgs {
    /// Reconstruction directory or state CSV
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Truncate the density matrix
    #[arg(long, short = 'M')]
    cutoff: Option<usize>,
    /// 1, 2 or direct
    #[arg(long)]
    method: Option<LambdaMethod>,
    #[arg(long)]
    n_r: Option<usize>,
    #[arg(long)]
    n_theta: Option<usize>,
    /// Largest radius (default √M)
    #[arg(long)]
    r_max: Option<f64>,
    /// Also write an n × n Cartesian grid
    #[arg(long)]
    cartesian: Option<usize>,
    #[arg(long)]
    cartesian_extent: Option<f64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Reconstruction directory (searched one level deep)
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Summary CSV file
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn some_vec<T>(v: Vec<T>) -> Option<Vec<T>> {
    if v.is_empty() {
        None
    } else {
        Some(v)
    }
}

fn state_spec(a: &SimulateArgs) -> Option<StateSpec> {
    Some(match a.state? {
        StateKind::Cat => StateSpec::Cat {
            re: a.alpha,
            im: a.alpha_im,
        },
        StateKind::Coherent => StateSpec::Coherent {
            re: a.alpha,
            im: a.alpha_im,
        },
        StateKind::Fock => StateSpec::FockSuperposition {
            levels: a.levels.clone(),
        },
    })
}

impl Cli {
    fn flags(&self) -> RunConfig {
        let mut c = RunConfig::new();
        c.threads = self.threads;
        c.precision = self.precision;
        c.range = self.range;
        match &self.command {
            Command::Simulate(a) => {
                c.state = state_spec(a);
                c.cutoff = a.cutoff;
                c.n_phi = a.n_phi;
                c.nsamples = a.nsamples;
                c.nblks = a.nblks;
                c.seed = a.seed;
                c.x_points = a.x_points;
                c.output = a.output.clone();
            }
            Command::Reconstruct(a) => {
                c.input = a.input.clone();
                c.cutoff = a.cutoff;
                c.estimator = a.estimator;
                c.n_bin = some_vec(a.n_bin.clone());
                c.beta = a.beta;
                c.errors = a.errors;
                c.seed_floor = a.seed_floor;
                c.allow_phase_aliasing = a.allow_phase_aliasing.then_some(true);
                c.truth = a.truth.clone();
                c.output = a.output.clone();
            }
            Command::Wigner(a) => {
                c.input = a.input.clone();
                c.cutoff = a.cutoff;
                c.method = a.method;
                c.n_r = a.n_r;
                c.n_theta = a.n_theta;
                c.r_max = a.r_max;
                c.cartesian = a.cartesian;
                c.cartesian_extent = a.cartesian_extent;
                c.output = a.output.clone();
            }
            Command::Report(a) => {
                c.input = a.input.clone();
                c.truth = a.truth.clone();
                c.output = a.output.clone();
            }
        }
        c
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = cli.flags();
    if let Some(path) = &cli.config {
        cfg = cfg.overlay(RunConfig::load(path)?);
    }
    if let Some(n) = cfg.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    log::debug!("effective config: {}", cfg.to_json());
    match cli.command {
        Command::Simulate(_) => commands::cmd_simulate(&cfg),
        Command::Reconstruct(_) => commands::cmd_reconstruct(&cfg),
        Command::Wigner(_) => commands::cmd_wigner(&cfg),
        Command::Report(_) => commands::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
