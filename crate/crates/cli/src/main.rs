use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use fraud_rl_cli::{
    cmd_compare, cmd_eval, cmd_sweep_beta, cmd_synth, cmd_train, error_line, RunConfig, TrainReport,
};

#[derive(Parser)]
#[command(name = "fraud-rl", version, about = "Fraud detection with a deep Q-network agent")]
struct Cli {
    /// JSON run configuration; defaults apply to every omitted field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset CSV.
    Synth,
    /// Train the configured model and save a checkpoint.
    Train,
    /// Evaluate a checkpoint on the test split.
    Eval {
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate several configs into one table. Without config
    /// files, runs DQNR, DQNR', DQNR'' and NN derived from --config.
    Compare {
        configs: Vec<PathBuf>,
    },
    /// Train and evaluate the combined-reward agent for each beta.
    SweepBeta {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 3.0])]
        betas: Vec<f64>,
    },
}

fn load(cli: &Cli, path: Option<&PathBuf>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth => {
            let path = cmd_synth(&load(cli, cli.config.as_ref())?)?;
            println!("{}", path.display());
        }
        Command::Train => {
            let outcome = cmd_train(&load(cli, cli.config.as_ref())?)?;
            match outcome.report {
                TrainReport::Dqn(log) => println!("trained {} episodes", log.episodes.len()),
                TrainReport::Nn { threshold, validation_f1, .. } => {
                    println!("threshold {threshold} validation F1 {validation_f1:.4}")
                }
            }
        }
        Command::Eval { checkpoint } => {
            let outcome = cmd_eval(&load(cli, cli.config.as_ref())?, checkpoint.as_deref())?;
            println!("{}", outcome.report.to_json_pretty()?);
        }
        Command::Compare { configs } => {
            let base = load(cli, cli.config.as_ref())?;
            let runs = if configs.is_empty() {
                base.comparison_set()
            } else {
                configs.iter().map(|p| load(cli, Some(p))).collect::<Result<Vec<_>>>()?
            };
            let rows = cmd_compare(&runs, &base.output_dir)?;
            println!("model,precision,recall,f1,app_pct,fraud_bps");
            for r in rows {
                println!("{},{:.4},{:.4},{:.4},{:.3},{:.3}", r.model, r.precision, r.recall, r.f1, r.app_pct, r.fraud_bps);
            }
        }
        Command::SweepBeta { betas } => {
            let rows = cmd_sweep_beta(&load(cli, cli.config.as_ref())?, betas)?;
            println!("beta,app_pct,fraud_bps,f1");
            for r in rows {
                println!("{},{:.3},{:.3},{:.4}", r.beta, r.app_pct, r.fraud_bps, r.f1);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
