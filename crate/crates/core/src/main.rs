use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sgmcmc::harness::{self, ExperimentConfig};
use sgmcmc::models;

#[derive(Parser)]
#[command(name = "sgmcmc", version, about = "Stochastic-gradient MCMC benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of the experiment grid and write CSV metrics.
    Run {
        /// JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker pool size (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Load the config and datasets, check everything, run nothing.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic regression dataset in LIBSVM format, plus a JSON
    /// sidecar recording the seed and the ground-truth parameter.
    GenSynth {
        /// Number of data points.
        #[arg(long)]
        n: usize,
        /// Feature dimension.
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        seed: u64,
        /// Output path for the LIBSVM file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> sgmcmc::Result<()> {
    match cli.command {
        Command::Run { config, out, jobs, seed } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let results = harness::run_experiment(&cfg, jobs)?;
            for r in &results {
                let status = match r.diverged_at_step {
                    Some(step) => format!("diverged at step {step}"),
                    None => "ok".to_string(),
                };
                let metric = r
                    .final_w2
                    .map(|v| format!("final_w2={v}"))
                    .or_else(|| r.final_log_loss.map(|v| format!("final_log_loss={v}")))
                    .unwrap_or_else(|| "no final metric".to_string());
                println!(
                    "{} h={} A={}: {metric} ({status})",
                    r.spec.sampler, r.spec.stepsize, r.spec.friction
                );
            }
            println!(
                "wrote {} cell files + summary.csv to {}",
                results.len(),
                cfg.out_dir.display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let prep = harness::prepare(&cfg)?;
            print!("{}", harness::experiment::describe(&prep));
            println!("config ok");
            Ok(())
        }
        Command::GenSynth { n, dim, seed, out } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (data, theta_true) = models::synth_linreg(n, dim, &mut rng)?;
            harness::libsvm::write_libsvm(&data, &out)?;
            let meta = serde_json::json!({
                "n": n,
                "dim": dim,
                "seed": seed,
                "theta_true": theta_true,
            });
            let meta_path = PathBuf::from(format!("{}.meta.json", out.display()));
            std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("json"))?;
            println!("wrote {} rows to {} (metadata: {})", n, out.display(), meta_path.display());
            Ok(())
        }
    }
}
