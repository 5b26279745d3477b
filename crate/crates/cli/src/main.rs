use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fleetcoord::report::{self, ReportError};
use fleetcoord::sim::{self, OutputFormat, ScenarioConfig, SimError, StrategyId};

#[derive(Parser)]
#[command(name = "fleetcoord", version, about = "Simulate and compare fleet dispatch strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
    /// Run one scenario and write its metrics.
    Run {
        config: PathBuf,
        /// Override the seed in the config.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Run several seeds, e.g. `1,2,3` or `0..10`; each goes to `seed-<n>/`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run several strategies on the same seeds and report the differences.
    Compare {
        /// Required unless `--regenerate` is given.
        config: Option<PathBuf>,
        /// Comma-separated strategy ids; defaults to every strategy of the
        /// scenario kind.
        #[arg(long)]
        strategies: Option<String>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Rebuild the report from the runs already stored in `--out`.
        #[arg(long)]
        regenerate: bool,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c.to_string()),
            SimError::Runtime(m) => Failure::Runtime(m),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Sim(s) => s.into(),
            ReportError::Invalid(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Config(format!("invalid `--seeds` value `{text}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            cfg.density_grids().map_err(|e| Failure::Config(e.to_string()))?;
            println!("ok: {} ({}, {}, {} ticks)", cfg.name, cfg.kind(), cfg.strategy, cfg.ticks());
        }
        Command::Run {
            config,
            seed,
            seeds,
            out,
            format,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let write = |m: &sim::RunMetrics, dir: &Path| m.write_to(dir, format.into()).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())));
            match seeds {
                None => {
                    let m = sim::run(&cfg)?;
                    write(&m, &out)?;
                    print_summary(&m.summary);
                }
                Some(text) => {
                    let seeds = parse_seeds(&text)?;
                    let rep = sim::replicate(&cfg, &seeds)?;
                    for (m, s) in rep.runs.iter().zip(&seeds) {
                        write(m, &out.join(format!("seed-{s}")))?;
                        print_summary(&m.summary);
                    }
                    for ((name, mean), ((_, lo), (_, hi))) in rep.mean.iter().zip(rep.min.iter().zip(&rep.max)) {
                        println!("{name:<24} mean {mean:>14.3}  min {lo:>14.3}  max {hi:>14.3}");
                    }
                }
            }
        }
        Command::Compare {
            config,
            strategies,
            seeds,
            out,
            format,
            regenerate,
        } => {
            let report = if regenerate {
                report::regenerate(&out, format.into())?
            } else {
                let path = config.ok_or_else(|| Failure::Config("a config path is required unless --regenerate is given".into()))?;
                let cfg = load(&path)?;
                let strategies = match strategies {
                    Some(text) => text
                        .split(',')
                        .map(|s| s.trim().parse::<StrategyId>().map_err(Failure::Config))
                        .collect::<Result<Vec<_>, _>>()?,
                    None => cfg.kind().strategies(),
                };
                let seeds = match seeds {
                    Some(text) => parse_seeds(&text)?,
                    None => vec![cfg.seed],
                };
                report::compare(&cfg, &strategies, &seeds, &out, format.into())?
            };
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn print_summary(s: &sim::RunSummary) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", x));
    println!(
        "{} {} seed={} requests={} served={} mean_response_s={} mean_delay_s={} distance_km={:.1} events={}",
        s.name,
        s.strategy,
        s.seed,
        s.requests,
        s.served,
        fmt(s.mean_response_s),
        fmt(s.mean_delay_s),
        s.total_distance_m / 1000.0,
        s.events
    );
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("runtime error: {m}");
            ExitCode::from(3)
        }
    }
}
