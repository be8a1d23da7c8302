mod config;
mod output;

use std::env;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use erasefl::analysis::{le_cam_check, ErasureProfile};
use erasefl::channel::blocklength;
use erasefl::simulation::seed::{stream_rng, Stream};
use erasefl::simulation::{run_monte_carlo, sweep, DatasetSpec, ExperimentConfig, SweepSpec};

use crate::config::{scheme_label, RunConfig};
use crate::output::{dataset_rows, round_rows, write_csv, BoundsRow, SummaryRow, SweepCsvRow};

/// Below this blocklength the normal approximation is unreliable.
const MIN_RELIABLE_BLOCKLENGTH: u64 = 100;

#[derive(Parser)]
#[command(name = "erasefl", version, about = "Federated learning over erasure channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment for every configured scheme.
    Run(RunArgs),
    /// Sweep rate, SNR and memory depth over the grid in the config.
    Sweep(RunArgs),
    /// Check Le Cam's inequality for a per-user erasure profile.
    Bounds(BoundsArgs),
    /// Write the generated non-IID dataset.
    Dataset(DatasetArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct BoundsArgs {
    /// Comma-separated erasure probabilities, one per user.
    #[arg(long)]
    eps: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct DatasetArgs {
    /// Take users and samples per user from a config file.
    #[arg(long, conflicts_with_all = ["users", "samples_per_user"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    users: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    samples_per_user: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    /// Bad input: exit code 2.
    Input(String),
    /// Failure while running or writing: exit code 1.
    Runtime(String),
}

type CliResult<T> = Result<T, Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Bounds(args) => cmd_bounds(&args),
        Command::Dataset(args) => cmd_dataset(&args),
    });
    match outcome {
        Ok(code) => code,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Honors `ERASEFL_THREADS` by sizing the global rayon pool.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = env::var("ERASEFL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Input(format!("ERASEFL_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn load_config(args: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(&args.config).map_err(Failure::Input)?;
    cfg.apply_overrides(args.seed, args.replicas)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.config.display())))?;
    Ok(cfg)
}

fn warn_short_blocklength(n: u64) {
    if n < MIN_RELIABLE_BLOCKLENGTH {
        eprintln!("warning: blocklength n = {n} is below {MIN_RELIABLE_BLOCKLENGTH}; the erasure model is only approximate");
    }
}

/// `rounds.csv` for a single scheme, otherwise `rounds_<label>.csv`, with the
/// scheme's position appended when two schemes share a label.
fn rounds_file_names(experiments: &[ExperimentConfig]) -> Vec<String> {
    if experiments.len() == 1 {
        return vec!["rounds.csv".to_string()];
    }
    let labels: Vec<String> = experiments.iter().map(|e| scheme_label(&e.scheme)).collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            if labels.iter().filter(|l| *l == label).count() > 1 {
                format!("rounds_{label}_{}.csv", i + 1)
            } else {
                format!("rounds_{label}.csv")
            }
        })
        .collect()
}

fn cmd_run(args: &RunArgs) -> CliResult<ExitCode> {
    let cfg = load_config(args)?;
    warn_short_blocklength(cfg.channel.link.n_symbols());
    let names = rounds_file_names(&cfg.experiments);
    let mut summary = Vec::with_capacity(cfg.experiments.len());
    for (exp, name) in cfg.experiments.iter().zip(&names) {
        let result = run_monte_carlo(exp).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_csv(&args.out, name, round_rows(&result)).map_err(|e| io_failure(&args.out.join(name), e))?;
        summary.push(SummaryRow {
            scheme: exp.scheme.label().to_string(),
            rate: exp.link.rate(),
            gamma0_db: cfg.channel.gamma0_db,
            m: exp.scheme.depth(),
            rounds: result.rounds(),
            final_mse_mean: result.final_mse_mean(),
            final_mse_var: result.final_mse_var(),
        });
    }
    if !args.quiet {
        for row in &summary {
            println!(
                "{}: m={} rounds={} final_mse_mean={} final_mse_var={}",
                row.scheme, row.m, row.rounds, row.final_mse_mean, row.final_mse_var
            );
        }
    }
    write_csv(&args.out, "summary.csv", summary).map_err(|e| io_failure(&args.out.join("summary.csv"), e))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &RunArgs) -> CliResult<ExitCode> {
    let cfg = load_config(args)?;
    let axes = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::Input(format!("{}: config has no \"sweep\" section", args.config.display())))?;
    let mut spec: SweepSpec = axes.to_spec();
    let dropped = spec.dedup();
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} duplicate sweep axis value(s)");
    }
    spec.validate().map_err(|e| Failure::Input(format!("{}: sweep: {e}", args.config.display())))?;
    let base: &ExperimentConfig = &cfg.experiments[0];
    for &rate in &spec.rates {
        if let Ok(n) = blocklength(base.link.k_bits(), rate) {
            warn_short_blocklength(n);
        }
    }
    let rows = sweep(&spec, base).map_err(|e| Failure::Input(format!("{}: sweep: {e}", args.config.display())))?;
    if !args.quiet {
        for r in &rows {
            println!("rate={} gamma0_db={} m={} rounds={} final_mse={}", r.rate, r.gamma0_db, r.m, r.rounds, r.final_mse);
        }
    }
    write_csv(&args.out, "sweep.csv", rows.iter().map(SweepCsvRow::from))
        .map_err(|e| io_failure(&args.out.join("sweep.csv"), e))?;
    Ok(ExitCode::SUCCESS)
}

fn parse_eps(raw: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>().map_err(|_| Failure::Input(format!("--eps: {s:?} is not a number")))
        })
        .collect()
}

fn cmd_bounds(args: &BoundsArgs) -> CliResult<ExitCode> {
    let eps = parse_eps(&args.eps)?;
    let profile = ErasureProfile::new(eps).map_err(|e| Failure::Input(format!("--eps: {e}")))?;
    let r = le_cam_check(&profile);
    if !args.quiet {
        println!("lambda,tv_sum,bound,holds");
        println!("{},{},{},{}", r.lambda, r.tv_sum, r.bound, r.holds);
    }
    if let Some(out) = &args.out {
        let row = BoundsRow { lambda: r.lambda, tv_sum: r.tv_sum, bound: r.bound, holds: r.holds };
        write_csv(out, "bounds.csv", [row]).map_err(|e| io_failure(&out.join("bounds.csv"), e))?;
    }
    Ok(if r.holds { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_dataset(args: &DatasetArgs) -> CliResult<ExitCode> {
    let (spec, mut seed) = match &args.config {
        Some(path) => {
            let cfg = RunConfig::load(path).map_err(Failure::Input)?;
            let exp = &cfg.experiments[0];
            (exp.data, exp.base_seed)
        }
        None => {
            let users = args.users.unwrap_or_default();
            let samples = args.samples_per_user.unwrap_or_default();
            (DatasetSpec::new(users, samples), 0)
        }
    };
    if let Some(s) = args.seed {
        seed = s;
    }
    spec.validate().map_err(|e| Failure::Input(e.to_string()))?;
    // Same stream the simulator draws its datasets from.
    let datasets = spec
        .generate(&mut stream_rng(seed, Stream::Dataset, 0))
        .map_err(|e| Failure::Input(e.to_string()))?;
    let path = write_csv(&args.out, "dataset.csv", dataset_rows(&datasets))
        .map_err(|e| io_failure(&args.out.join("dataset.csv"), e))?;
    if !args.quiet {
        println!("wrote {} samples to {}", datasets.iter().map(|d| d.len()).sum::<usize>(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}
