use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cpb_cli::bench::{run_bench, write_bench_csv, BenchConfig, Protocol};
use cpb_cli::config::{parse_corpus_spec, ExperimentConfig};
use cpb_cli::runner;
use cpb_core::corpus::{generate_synthetic, write_logs};
use cpb_core::psi::GroupChoice;

/// Collaborative predictive blacklisting experiments.
#[derive(Parser)]
#[command(name = "cpb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a key=value config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
    },
    /// Benchmark a protocol over set sizes and organization counts.
    Bench {
        /// psi-ca, psi-dt, or server-aided.
        #[arg(long)]
        protocol: Protocol,
        /// Comma-separated set sizes (events per org for server-aided).
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
        sizes: Vec<usize>,
        /// Comma-separated organization counts.
        #[arg(long, value_delimiter = ',', default_value = "10,50,100,200")]
        orgs: Vec<usize>,
        /// Repeats per cell; medians are reported.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Group setting: ristretto255 (default) or mod2048.
        #[arg(long, default_value = "ristretto255")]
        group: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
    /// Generate a synthetic corpus in the shared log format.
    Gen {
        /// Path to a key=value corpus spec.
        #[arg(long)]
        spec: PathBuf,
        /// Output log file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_group(s: &str) -> Result<GroupChoice> {
    match s.trim().to_ascii_lowercase().as_str() {
        "ristretto255" | "ristretto" => Ok(GroupChoice::Ristretto255),
        "mod2048" => Ok(GroupChoice::Mod2048),
        other => anyhow::bail!("unknown group '{other}' (ristretto255 or mod2048)"),
    }
}

#[cfg(feature = "parallel")]
fn configure_workers() {
    if let Ok(workers) = std::env::var("CPB_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            if n > 0 {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not set worker count: {e}");
                }
            }
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_workers() {}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    configure_workers();
    match Cli::parse().command {
        Command::Run { config } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let config = ExperimentConfig::parse(&text)?;
            let output = runner::run(&config)?;
            println!(
                "{} rows -> {} and {}",
                output.rows.len(),
                output.results_path.display(),
                output.summary_path.display()
            );
        }
        Command::Bench { protocol, sizes, orgs, repeats, group, seed, out } => {
            let config = BenchConfig {
                protocol,
                sizes,
                orgs,
                repeats,
                group: parse_group(&group)?,
                seed,
            };
            let rows = run_bench(&config)?;
            write_bench_csv(&out, &rows, seed)?;
            println!("{} bench rows -> {}", rows.len(), out.display());
        }
        Command::Gen { spec, out } => {
            let text =
                fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec = parse_corpus_spec(&text)?;
            let events = generate_synthetic(&spec)?;
            let epoch = chrono::NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date");
            let file = fs::File::create(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            write_logs(std::io::BufWriter::new(file), &events, epoch)?;
            println!("{} events -> {}", events.len(), out.display());
        }
    }
    Ok(())
}
