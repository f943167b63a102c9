use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgm_core::cli::{self, PreprocessConfig, RunConfig};
use kgm_core::montecarlo::MonteCarloConfig;
use kgm_core::pipeline::{Grouping, Method};
use kgm_core::{ErrorKind, KgmError, Result};

#[derive(Parser)]
#[command(name = "kgm", version, about = "Kronecker graphical models for AR Gaussian processes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Frequency grid size (power of two)
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct Dims {
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// AR order n
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a ground-truth model and simulate it: model.json, series.csv
    Simulate {
        #[command(flatten)]
        dims: Dims,
        /// Series length N
        #[arg(long)]
        nobs: Option<usize>,
        /// Fraction of off-diagonal pairs in E1 and E2
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Estimate Σ and the Kronecker support: result.json
    Estimate {
        /// Input series (CSV, one row per sample)
        input: Option<PathBuf>,
        #[command(flatten)]
        dims: Dims,
        #[arg(long)]
        method: Option<Method>,
        /// Input has a header row
        #[arg(long)]
        header: bool,
        /// Also write spectra.csv
        #[arg(long)]
        spectra: bool,
    },
    /// Seeded Monte Carlo comparison: runs.csv, timings.csv, summary.json
    Montecarlo {
        #[arg(long)]
        runs: Option<usize>,
        /// Methods to compare, comma separated
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<Method>>,
        #[arg(long)]
        threads: Option<usize>,
        /// Full-scale study: m1 = m2 = 6, n = 2, N = 1000, η = 0.3, 200 runs
        #[arg(long)]
        full: bool,
    },
    /// Aggregate, normalize/detrend and stack a series: series.csv
    Preprocess {
        input: Option<PathBuf>,
        #[arg(long)]
        header: bool,
        /// Aggregation window
        #[arg(long)]
        window: Option<usize>,
        /// Stacking factor m1
        #[arg(long)]
        stack: Option<usize>,
        /// window = 2, mean/trend removal, unit variance, stacking 12
        #[arg(long)]
        pollution: bool,
    },
    /// Residual cross-spectrum norm for a module or node pair: curve.csv
    EdgeSpectrum {
        /// result.json from `estimate`
        result: Option<PathBuf>,
        #[arg(long)]
        grouping: Option<Grouping>,
        /// Zero-based pair, e.g. 0,2
        #[arg(long, value_delimiter = ',')]
        pair: Option<Vec<usize>>,
    },
    /// Recompute ℓ̃ from result.json and compare with the stored trace
    Verify {
        result: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

fn exit_code(e: &KgmError) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn apply_dims(cfg: &mut RunConfig, dims: &Dims) {
    if let Some(m1) = dims.m1 {
        cfg.simulation.m1 = m1;
        cfg.estimation.m1 = m1;
    }
    if let Some(m2) = dims.m2 {
        cfg.simulation.m2 = m2;
        cfg.estimation.m2 = m2;
    }
    if let Some(n) = dims.order {
        cfg.simulation.n = n;
        cfg.order = Some(n);
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if let Some(g) = c.grid {
        cfg.estimation.grid_points = g;
    }
    match cli.command {
        Command::Simulate { dims, nobs, eta } => {
            apply_dims(&mut cfg, &dims);
            if let Some(n) = nobs {
                cfg.simulation.nobs = n;
            }
            if let Some(e) = eta {
                cfg.simulation.eta1 = e;
                cfg.simulation.eta2 = e;
            }
            let (model, series) = cli::cmd_simulate(&cfg)?;
            println!("{}\n{}", model.display(), series.display());
        }
        Command::Estimate {
            input,
            dims,
            method,
            header,
            spectra,
        } => {
            apply_dims(&mut cfg, &dims);
            if let Some(p) = input {
                cfg.input.path = Some(p);
            }
            if header {
                cfg.input.header = true;
            }
            if let Some(m) = method {
                cfg.estimation.method = m;
            }
            cfg.spectra |= spectra;
            println!("{}", cli::cmd_estimate(&cfg)?.display());
        }
        Command::Montecarlo {
            runs,
            method,
            threads,
            full,
        } => {
            let mut mc = cfg.montecarlo_config();
            if full {
                let preset = MonteCarloConfig::full();
                mc.runs = preset.runs;
                mc.simulation = preset.simulation;
            }
            if let Some(r) = runs {
                mc.runs = r;
            }
            if let Some(m) = method {
                mc.methods = m;
            }
            if let Some(t) = threads {
                mc.threads = t;
            }
            let out = cfg.out_dir();
            let report = cli::cmd_montecarlo(&mc, &out)?;
            cli::print_summary(&report, std::io::stdout())?;
        }
        Command::Preprocess {
            input,
            header,
            window,
            stack,
            pollution,
        } => {
            if pollution {
                cfg.preprocess = PreprocessConfig::pollution();
            }
            if let Some(p) = input {
                cfg.input.path = Some(p);
            }
            if header {
                cfg.input.header = true;
            }
            if let Some(w) = window {
                cfg.preprocess.window = w;
            }
            if let Some(s) = stack {
                cfg.preprocess.stack = s;
            }
            let (path, s) = cli::cmd_preprocess(&cfg)?;
            println!("{} ({} × {})", path.display(), s.len(), s.channels());
        }
        Command::EdgeSpectrum {
            result,
            grouping,
            pair,
        } => {
            if let Some(r) = result {
                cfg.edge.result = Some(r);
            }
            if let Some(g) = grouping {
                cfg.edge.grouping = g;
            }
            if let Some(p) = pair {
                let [a, b] = p[..] else {
                    return Err(KgmError::InvalidArgument("--pair takes two indices".into()));
                };
                cfg.edge.pair = (a, b);
            }
            println!("{}", cli::cmd_edge_spectrum(&cfg, c.grid)?.display());
        }
        Command::Verify { result, tol } => {
            let v = cli::cmd_verify(&result)?;
            println!("stored {:.12e}\nrecomputed {:.12e}", v.stored, v.recomputed);
            if !v.passes(tol) {
                return Err(KgmError::Numerical(format!(
                    "surrogate mismatch {:.3e} exceeds tolerance",
                    (v.stored - v.recomputed).abs()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
