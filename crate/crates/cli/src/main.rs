use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcnoma::harness::{
    allocate_scenario, cmd_oracle, parse_snr_range, sweep_scenario, timeshare_scenario, OracleSpec, SweepSpec,
};
use mcnoma::pipeline::PipelineConfig;
use mcnoma::scenario::{load_scenario, Scenario};
use mcnoma::schemes::SchemeRegistry;

/// Energy-optimal power-subcarrier allocation and decoding order for uplink
/// multicarrier NOMA.
#[derive(Debug, Parser)]
#[command(name = "mcnoma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimum-energy allocation: allocation.csv, theta_trace.csv, order.txt, summary.txt.
    Allocate(Common),
    /// Allocation plus time-sharing: adds timeshare.csv and power_comparison.csv.
    Timeshare(Common),
    /// Mean sum rate per scheme over a receive-SNR grid: sweep.csv, sweep_gaps.csv.
    Sweep(SweepArgs),
    /// Brute-force grid check of the solver on a tiny scalar scenario: oracle.txt.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario's channel seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// `start:step:stop` in dB, or a single value.
    #[arg(long, default_value = "-5:5:30")]
    snr: String,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Comma-separated scheme names; all registered schemes by default.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Grid step as a fraction of the largest relevant power.
    #[arg(long, default_value_t = 1e-2)]
    resolution: f64,
    /// Largest number of grid evaluations.
    #[arg(long, default_value_t = 1e8)]
    budget: f64,
}

fn load(common: &Common) -> mcnoma::Result<Scenario> {
    let mut s = load_scenario(&common.scenario)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn run(cli: Cli) -> mcnoma::Result<()> {
    let cfg = PipelineConfig::default();
    match cli.command {
        Command::Allocate(c) => {
            let r = allocate_scenario(load(&c)?, &c.out, &cfg)?;
            println!(
                "order {}  weighted energy {} mW",
                r.allocation.order.to_one_based_string(),
                r.allocation.weighted_energy
            );
            print_files(&r.files);
        }
        Command::Timeshare(c) => {
            let r = timeshare_scenario(load(&c)?, &c.out, &cfg)?;
            let ts = &r.pipeline.timeshare;
            println!("{} active order(s), total energy {} mW", ts.solution.support_size(), r.pipeline.total_energy());
            print_files(&r.files);
        }
        Command::Sweep(a) => {
            let s = load(&a.common)?;
            let schemes = a
                .schemes
                .unwrap_or_else(|| SchemeRegistry::with_defaults().names().into_iter().map(String::from).collect());
            let spec = SweepSpec {
                snr_points_db: parse_snr_range(&a.snr)?,
                trials_per_point: a.trials,
                schemes,
                seed: a.common.seed.unwrap_or(s.seed),
            };
            let out = a.common.out.join("sweep.csv");
            let report = sweep_scenario(&s, &spec, &out, &cfg)?;
            let failures: usize = report.rows.iter().map(|r| r.failures).sum();
            if failures > 0 {
                eprintln!("warning: {failures} scheme evaluation(s) failed and were skipped");
            }
            println!("wrote {}", out.display());
        }
        Command::Oracle(a) => {
            let s = load(&a.common)?;
            let spec = OracleSpec { resolution: a.resolution, budget: a.budget };
            let r = cmd_oracle(&s, &spec, Some(&a.common.out), &cfg)?;
            print!("{}", r.to_text());
            print_files(&[a.common.out.join("oracle.txt")]);
        }
    }
    Ok(())
}

fn print_files(files: &[impl AsRef<Path>]) {
    for f in files {
        println!("wrote {}", f.as_ref().display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
