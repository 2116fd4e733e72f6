//! `creditsim`: calibrate, simulate and report credit portfolio losses.

mod commands;
mod error;
mod manifest;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use creditsim::sim::LgdMode;
use creditsim::synthetic::SyntheticSpec;

use crate::commands::GenerateOptions;
use crate::error::CliResult;
use crate::manifest::Manifest;

#[derive(Parser)]
#[command(name = "creditsim", version, about = "Credit portfolio loss simulation with stochastic LGD")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the factor model and both LGD models; writes bundles to <out>/calibration.
    Calibrate(RunArgs),
    /// Run one Monte Carlo simulation and write loss statistics.
    Simulate(SimulateArgs),
    /// Run deterministic LGD, model A and model B on common default scenarios.
    Compare(RunArgs),
    /// Write expected potential loss by rating, industry and region.
    Histogram(RunArgs),
    /// Write a synthetic demo data set and manifest.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run manifest (.toml or .json).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; overrides the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<LgdMode>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comma-separated, strictly increasing levels in (0,1).
    #[arg(long, value_delimiter = ',')]
    quantile_levels: Option<Vec<f64>>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write every scenario loss as little-endian f64.
    #[arg(long)]
    dump_losses: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Directory for the generated files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    instruments: usize,
    #[arg(long, default_value_t = 400)]
    firms: u32,
    #[arg(long, default_value_t = 4)]
    industries: u32,
    #[arg(long, default_value_t = 3)]
    regions: u32,
    /// Periods of factor and LGD history.
    #[arg(long, default_value_t = 60)]
    periods: usize,
    #[arg(long, default_value_t = 30)]
    lgd_per_bucket: usize,
    #[arg(long, default_value_t = 40)]
    records_per_cell: usize,
    /// Coupling used to generate default records.
    #[arg(long, default_value_t = 1.0 / 30.0)]
    lambda: f64,
}

fn parse_mode(s: &str) -> Result<LgdMode, String> {
    s.parse().map_err(|e: creditsim::Error| e.to_string())
}

impl RunArgs {
    /// Manifest with flag overrides applied. `--out` moves the calibration
    /// bundles only for `calibrate`.
    fn manifest(&self, calibrating: bool) -> CliResult<Manifest> {
        let mut m = Manifest::load(&self.manifest)?;
        let c = &mut m.config;
        if let Some(v) = self.seed {
            c.master_seed = v;
        }
        if let Some(v) = self.scenarios {
            c.scenarios = v;
        }
        if let Some(v) = self.mode {
            c.lgd_mode = v;
        }
        if let Some(v) = self.threads {
            c.threads = Some(v);
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = &self.quantile_levels {
            c.quantile_levels = v.clone();
        }
        c.validate()?;
        if let Some(out) = &self.out {
            m.set_output_dir(out.clone(), !calibrating);
        }
        Ok(m)
    }
}

fn run(cli: Cli) -> CliResult<commands::Written> {
    match cli.command {
        Command::Calibrate(a) => commands::calibrate(&a.manifest(true)?),
        Command::Simulate(a) => commands::simulate(&a.run.manifest(false)?, a.dump_losses.as_deref()),
        Command::Compare(a) => commands::compare(&a.manifest(false)?),
        Command::Histogram(a) => commands::histogram(&a.manifest(false)?),
        Command::Generate(a) => {
            let opts = GenerateOptions {
                spec: SyntheticSpec {
                    seed: a.seed,
                    industries: a.industries,
                    regions: a.regions,
                    firms: a.firms,
                    instruments: a.instruments,
                    ..Default::default()
                },
                periods: a.periods,
                lgd_per_bucket: a.lgd_per_bucket,
                records_per_cell: a.records_per_cell,
                lambda: a.lambda,
            };
            commands::generate(&a.out, &opts)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
