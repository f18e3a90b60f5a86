use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mfbo::data::{estimate_demand, parse_trips, save_distribution, Discretiser};
use mfbo::runner::experiment::{aggregate_dir, write_plots};
use mfbo::runner::{brute_force_optimum, run_experiment, ExperimentConfig, RunnerError};

/// Mean-field Bayesian optimisation experiments.
#[derive(Parser)]
#[command(name = "mfbo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and seed, writing CSVs and plots.
    Run { config: PathBuf },
    /// Recompute aggregate CSVs from the run files in a directory.
    Aggregate { dir: PathBuf },
    /// Estimate a demand distribution from trip data.
    Demand { trips: PathBuf, config: PathBuf },
    /// Brute-force the optimal distribution of a tiny instance.
    Oracle { config: PathBuf },
    /// Redraw the SVG plots of a results directory.
    Plot { dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Aggregate { dir } => cmd_aggregate(&dir),
        Command::Demand { trips, config } => cmd_demand(&trips, &config),
        Command::Oracle { config } => cmd_oracle(&config),
        Command::Plot { dir } => write_plots(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn cmd_run(path: &Path) -> Result<(), RunnerError> {
    let cfg = ExperimentConfig::load(path)?;
    let summary = run_experiment(&cfg)?;
    println!("results in {}", summary.output_dir.display());
    println!("{:<22} {:>16} {:>12}", "algorithm", "final mean best", "stderr");
    for (algo, agg) in &summary.aggregates {
        println!("{:<22} {:>16.6} {:>12.6}", algo.tag(), agg.final_mean(), agg.final_stderr());
    }
    Ok(())
}

fn cmd_aggregate(dir: &Path) -> Result<(), RunnerError> {
    for (algo, agg) in aggregate_dir(dir)? {
        println!("{:<22} {:>16.6} {:>12.6}", algo.tag(), agg.final_mean(), agg.final_stderr());
    }
    Ok(())
}

fn cmd_demand(trips: &Path, config: &Path) -> Result<(), RunnerError> {
    let cfg = ExperimentConfig::load(config)?;
    let ingest = cfg.demand.as_ref().ok_or_else(|| RunnerError::Config("config has no [demand] section".into()))?;
    let file =
        std::fs::File::open(trips).map_err(|e| RunnerError::Io { path: trips.display().to_string(), source: e })?;
    let parsed = parse_trips(std::io::BufReader::new(file), &ingest.columns)?;
    let discretiser = match cfg.environment.grid {
        Some(g) => Discretiser::Grid(g),
        None => Discretiser::stations_from(&parsed.records),
    };
    let est = estimate_demand(&parsed.records, &ingest.filter, &discretiser)?;
    let out = cfg.resolve_path(&ingest.output);
    save_distribution(&out, &est.labels, &est.demand)?;
    println!(
        "{} trips parsed ({} skipped), {} dates used, {} actions kept; wrote {}",
        parsed.records.len(),
        parsed.skipped,
        est.dates.len(),
        est.demand.len(),
        out.display()
    );
    Ok(())
}

fn cmd_oracle(path: &Path) -> Result<(), RunnerError> {
    let cfg = ExperimentConfig::load(path)?;
    let spec = cfg.build_environment()?;
    let (xi, g) = brute_force_optimum(&spec, cfg.oracle.resolution)?;
    println!("g* = {g}");
    for (c, row) in xi.rows().iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|p| format!("{p}")).collect();
        println!("context {c}: [{}]", cells.join(", "));
    }
    Ok(())
}
