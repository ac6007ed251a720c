use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mnl_lab::harness::{read_summary_csv, run_experiment, write_outputs, ExperimentConfig};
use mnl_lab::rates::{rates_from_summary, read_coverage_samples};

#[derive(Parser)]
#[command(
    name = "mnl-lab",
    version,
    about = "MNL-bandit assortment simulation lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit rates from a summary table.
    Rates {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Confidence parameter for the coverage check.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> mnl_lab::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            workers,
            seed,
        } => {
            let mut cfg = ExperimentConfig::from_json_file(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if workers == Some(0) {
                return Err(mnl_lab::Error::Config("workers must be at least 1".into()));
            }
            let dir = out_dir
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| mnl_lab::Error::Config("no output directory given".into()))?;
            let out = run_experiment(&cfg, workers)?;
            write_outputs(&out, &dir)?;
            for run in &out.runs {
                if let Some(row) = out.final_summary(&run.label, run.alpha) {
                    let alpha = run.alpha.map(|a| format!(" alpha={a}")).unwrap_or_default();
                    println!(
                        "{}{alpha}: final regret {:.3} (sd {:.3})",
                        run.label, row.mean_cum_regret, row.sd_cum_regret
                    );
                }
            }
            if !out.failures.is_empty() {
                eprintln!(
                    "warning: {} trial(s) failed, see manifest.json",
                    out.failures.len()
                );
            }
            println!("wrote {} in {:.1}s", dir.display(), out.wall_clock_secs);
            Ok(())
        }
        Command::Rates { input, out, delta } => {
            let rows = read_summary_csv(&input)?;
            let dir = input.parent().map(PathBuf::from).unwrap_or_default();
            let coverage = read_coverage_samples(&dir)?;
            let report = rates_from_summary(&rows, &coverage, delta);
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            for s in &report.series {
                let alpha = s.alpha.map(|a| format!(" alpha={a}")).unwrap_or_default();
                let slope = s
                    .regret_fit
                    .as_ref()
                    .map(|f| format!("{:.3}", f.slope))
                    .unwrap_or("-".into());
                println!("{}{alpha}: regret slope {slope}", s.policy);
            }
            Ok(())
        }
    }
}
