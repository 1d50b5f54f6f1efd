use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use minhold::config::RunConfig;
use minhold::pipeline::{run_optimize, run_report, run_verify, VerifyOutcome};
use minhold::synth::{generate, write_prices_csv, SynthSpec};
use minhold::Error;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_EMPTY_UNIVERSE: u8 = 3;

#[derive(Parser)]
#[command(name = "minhold", version, about = "Portfolio trajectories under a minimal holding period")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a config file.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (defaults to all cores); output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a trajectory CSV against a holding period.
    Verify {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        hold: usize,
    },
    /// Summarize a frontier CSV.
    Report {
        #[arg(long)]
        frontier: PathBuf,
    },
    /// Write a synthetic price file with planted cluster structure.
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        assets: usize,
        #[arg(long)]
        days: usize,
        #[arg(long)]
        out: PathBuf,
        /// Planted groups (default: min(assets, 7)).
        #[arg(long)]
        groups: Option<usize>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::EmptyUniverse(_) => EXIT_EMPTY_UNIVERSE,
        _ => EXIT_USAGE,
    }
}

fn optimize(config: PathBuf, threads: Option<usize>) -> Result<u8, Error> {
    let cfg = RunConfig::load(&config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config { field: "threads".into(), message: e.to_string() })?;
    let report = pool.install(|| run_optimize(&cfg))?;
    if report.dropped_rows > 0 {
        eprintln!("dropped {} incomplete price rows", report.dropped_rows);
    }
    for p in &report.packages {
        if !p.universe.empty_clusters.is_empty() {
            eprintln!("{}: clusters {:?} had no asset under the cap", p.label, p.universe.empty_clusters);
        }
        if p.realized_vol_warning {
            eprintln!(
                "{}: realized annualized volatility {:.4} exceeds the cap by more than 25%",
                p.label, p.metrics.annualized_volatility
            );
        }
        println!(
            "{}: gamma={} assets={} sharpe={} ann_return={:.4} ann_vol={:.4} fallbacks={}",
            p.label,
            p.gamma,
            p.universe.selected.join("+"),
            p.metrics.sharpe.map_or_else(|| "undefined".into(), |s| format!("{s:.4}")),
            p.metrics.annualized_return,
            p.metrics.annualized_volatility,
            p.metrics.fallback_count
        );
    }
    for path in &report.written {
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn verify(trajectory: PathBuf, hold: usize) -> Result<u8, Error> {
    match run_verify(&trajectory, hold)? {
        VerifyOutcome::Feasible { steps, assets } => {
            println!("ok: {steps} steps x {assets} assets respect a {hold}-step holding period");
            Ok(0)
        }
        VerifyOutcome::Violation { date, asset, purchased } => {
            println!("violation: {asset} sold on {date}, bought on {purchased}");
            Ok(EXIT_VERIFY_FAILED)
        }
    }
}

fn gen_data(seed: u64, assets: usize, days: usize, out: PathBuf, groups: Option<usize>) -> Result<u8, Error> {
    let mut spec = SynthSpec::new(assets, days, seed);
    if let Some(g) = groups {
        spec.n_groups = g;
    }
    let data = generate(&spec)?;
    let file = File::create(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    write_prices_csv(BufWriter::new(file), &data.series)?;
    println!("wrote {} ({assets} assets x {days} days)", out.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Optimize { config, threads } => optimize(config, threads),
        Command::Verify { trajectory, hold } => verify(trajectory, hold),
        Command::Report { frontier } => run_report(&frontier).map(|text| {
            print!("{text}");
            0
        }),
        Command::GenData { seed, assets, days, out, groups } => gen_data(seed, assets, days, out, groups),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
