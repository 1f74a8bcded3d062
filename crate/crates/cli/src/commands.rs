use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fraud_rl::agent::DqnAgent;
use fraud_rl::baseline::{predict_baseline, train_baseline, tune_threshold, EpochRecord};
use fraud_rl::data::{load_and_prepare, synth_generate, write_synthetic_csv_file, PreparedData, SourceKind};
use fraud_rl::environment::{Environment, Transaction};
use fraud_rl::metrics::{episode_trace, write_trace_csv, EpisodeTraceRow, MetricsReport};
use fraud_rl::neuralnet::{Checkpoint, Head};
use fraud_rl::rewards::{imbalance_ratio, RewardFn};
use fraud_rl::{Action, Error, Label};
use serde::Serialize;

use crate::config::{ModelKind, RunConfig};

pub const DATASET_FILE: &str = "dataset.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const ACTIONS_FILE: &str = "actions.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const SWEEP_FILE: &str = "sweep_beta.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// Writes the generator output for `config.dataset.synth` to `<out>/dataset.csv`.
pub fn cmd_synth(config: &RunConfig) -> Result<PathBuf> {
    let cfg = config.resolved()?;
    if cfg.dataset.source != SourceKind::Synthetic {
        bail!(Error::InvalidConfig("synth needs dataset.source = synthetic".into()));
    }
    let data = synth_generate(&cfg.dataset.synth)?;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(DATASET_FILE);
    write_synthetic_csv_file(&data, &path)?;
    log::info!("wrote {} synthetic transactions to {}", data.len(), path.display());
    Ok(path)
}

/// Resolved config, preprocessed splits and the class ratio of the training split.
pub struct RunContext {
    pub config: RunConfig,
    pub data: PreparedData,
    pub rho: f64,
}

impl RunContext {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let mut config = config.resolved()?;
        let data = load_and_prepare(&config.dataset)?;
        let rho = imbalance_ratio(&data.splits.train)?.ratio;
        if config.reward.lambda_prime.is_none() {
            config.reward.lambda_prime = Some(rho);
        }
        config.agent = config.agent.resolve_for_pass(data.splits.train.len());
        log::info!(
            "prepared {} train / {} validation / {} test rows, {} features, rho {rho:.6}",
            data.splits.train.len(),
            data.splits.validation.len(),
            data.splits.test.len(),
            data.feature_len()
        );
        Ok(Self { config, data, rho })
    }

    pub fn reward_fn(&self) -> Result<RewardFn> {
        Ok(RewardFn::new(self.config.reward.kind, &self.config.reward.params(), self.rho)?)
    }

    fn write_resolved(&self) -> Result<()> {
        ensure_dir(&self.config.output_dir)?;
        write_text(
            &self.config.output_dir.join(RESOLVED_CONFIG_FILE),
            &self.config.to_json_pretty()?,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainReport {
    Dqn(fraud_rl::agent::TrainLog),
    Nn { curve: Vec<EpochRecord>, threshold: f64, validation_f1: f64 },
}

pub struct TrainOutcome {
    pub config: RunConfig,
    pub rho: f64,
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome> {
    let ctx = RunContext::new(config)?;
    train_in(&ctx)
}

fn train_in(ctx: &RunContext) -> Result<TrainOutcome> {
    let cfg = &ctx.config;
    ctx.write_resolved()?;
    let splits = &ctx.data.splits;
    let (checkpoint, report) = match cfg.model {
        ModelKind::Dqn => {
            let mut env = Environment::new(&splits.train, cfg.env)?;
            let mut agent = DqnAgent::new(env.state_len(), cfg.agent.clone())?;
            let log = agent.train(&mut env, &ctx.reward_fn()?)?;
            log.write_csv(create(&cfg.output_dir.join(TRAIN_LOG_FILE))?)?;
            log::info!(
                "{} trained for {} episodes ({} target syncs)",
                cfg.model_name(),
                log.episodes.len(),
                log.target_syncs.len()
            );
            (agent.to_checkpoint(), TrainReport::Dqn(log))
        }
        ModelKind::Nn => {
            let trained = train_baseline(&splits.train, &splits.validation, &cfg.baseline)?;
            let (threshold, validation_f1) = tune_threshold(&trained.net, &splits.validation, cfg.baseline.threshold_grid)?;
            write_rows(&cfg.output_dir.join(TRAIN_LOG_FILE), &trained.curve)?;
            log::info!(
                "baseline best epoch {}, threshold {threshold}, validation F1 {validation_f1:.4}",
                trained.best_epoch
            );
            let ckpt = Checkpoint {
                net: trained.net,
                adam: None,
                head: Head::Sigmoid,
                threshold: Some(threshold),
            };
            (
                ckpt,
                TrainReport::Nn {
                    curve: trained.curve,
                    threshold,
                    validation_f1,
                },
            )
        }
    };
    checkpoint.save(cfg.output_dir.join(CHECKPOINT_FILE))?;
    Ok(TrainOutcome {
        config: cfg.clone(),
        rho: ctx.rho,
        checkpoint,
        report,
    })
}

pub struct EvalOutcome {
    pub report: MetricsReport,
    pub trace: Vec<EpisodeTraceRow>,
    pub actions: Vec<Action>,
}

#[derive(Serialize)]
struct ActionRow {
    index: usize,
    time: f64,
    amount: f64,
    label: usize,
    action: usize,
}

/// Evaluates a checkpoint (default `<out>/checkpoint.json`) on the test split.
pub fn cmd_eval(config: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalOutcome> {
    let ctx = RunContext::new(config)?;
    let path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.config.output_dir.join(CHECKPOINT_FILE));
    let ckpt = Checkpoint::load(&path)?;
    eval_in(&ctx, ckpt)
}

fn eval_in(ctx: &RunContext, ckpt: Checkpoint) -> Result<EvalOutcome> {
    let cfg = &ctx.config;
    let test: &[Transaction] = &ctx.data.splits.test;
    let labels: Vec<Label> = test.iter().map(|t| t.label).collect();
    let amounts: Vec<f64> = test.iter().map(|t| t.amount).collect();
    let (actions, trace) = match (cfg.model, ckpt.head) {
        (ModelKind::Dqn, Head::Linear) => {
            let agent = DqnAgent::from_checkpoint(ckpt, cfg.agent.clone())?;
            let ev = agent.evaluate(test, cfg.env)?;
            (ev.actions, ev.trace)
        }
        (ModelKind::Nn, Head::Sigmoid) => {
            let threshold = ckpt
                .threshold
                .ok_or_else(|| Error::Checkpoint("classifier checkpoint has no threshold".into()))?;
            let actions = predict_baseline(&ckpt.net, threshold, test)?;
            let trace = episode_trace(&actions, &labels, &cfg.env)?;
            (actions, trace)
        }
        (model, head) => bail!(Error::Checkpoint(format!(
            "checkpoint head {head:?} does not match model {model:?}"
        ))),
    };
    let report = MetricsReport::compute(&actions, &labels, &amounts, cfg.metrics.fraud_bps_denominator)?;

    ctx.write_resolved()?;
    let out = &cfg.output_dir;
    write_text(&out.join(METRICS_FILE), &report.to_json_pretty()?)?;
    write_trace_csv(&trace, create(&out.join(TRACE_FILE))?)?;
    let rows: Vec<ActionRow> = test
        .iter()
        .zip(&actions)
        .map(|(t, a)| ActionRow {
            index: t.index,
            time: t.time,
            amount: t.amount,
            label: t.label.index(),
            action: a.index(),
        })
        .collect();
    write_rows(&out.join(ACTIONS_FILE), &rows)?;
    log::info!(
        "{}: precision {:.4} recall {:.4} F1 {:.4} App% {:.3} F(bps) {:.3}",
        cfg.model_name(),
        report.precision,
        report.recall,
        report.f1,
        report.approval_pct,
        report.fraud_bps
    );
    Ok(EvalOutcome { report, trace, actions })
}

/// Train then evaluate in one go, sharing the prepared data.
pub fn train_and_eval(config: &RunConfig) -> Result<(TrainOutcome, EvalOutcome)> {
    let ctx = RunContext::new(config)?;
    let trained = train_in(&ctx)?;
    let eval = eval_in(&ctx, trained.checkpoint.clone())?;
    Ok((trained, eval))
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub model: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub app_pct: f64,
    pub fraud_bps: f64,
    pub genuine_approved: f64,
    pub genuine_declined: f64,
    pub fraud_approved: f64,
    pub fraud_declined: f64,
}

impl CompareRow {
    pub fn new(model: impl Into<String>, r: &MetricsReport) -> Self {
        Self {
            model: model.into(),
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            app_pct: r.approval_pct,
            fraud_bps: r.fraud_bps,
            genuine_approved: r.money.genuine_approved,
            genuine_declined: r.money.genuine_declined,
            fraud_approved: r.money.fraud_approved,
            fraud_declined: r.money.fraud_declined,
        }
    }
}

fn slug(name: &str) -> String {
    let base = name.to_ascii_lowercase();
    let primes = base.chars().filter(|&c| c == '\'').count();
    let stem: String = base.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    match primes {
        0 => stem,
        1 => format!("{stem}_prime"),
        _ => format!("{stem}_double"),
    }
}

/// Trains and evaluates every config, each under `<out>/<model>/`, and writes `<out>/compare.csv`.
pub fn cmd_compare(configs: &[RunConfig], out: &Path) -> Result<Vec<CompareRow>> {
    if configs.is_empty() {
        bail!(Error::InvalidConfig("compare needs at least one config".into()));
    }
    for c in configs {
        c.resolved()?;
    }
    ensure_dir(out)?;
    let mut used: Vec<String> = Vec::new();
    let mut rows = Vec::with_capacity(configs.len());
    for c in configs {
        let mut dir = slug(c.model_name());
        let n = used.iter().filter(|u| u.starts_with(&dir)).count();
        if n > 0 {
            dir = format!("{dir}_{}", n + 1);
        }
        used.push(dir.clone());
        let run = RunConfig {
            output_dir: out.join(&dir),
            ..c.clone()
        };
        let (_, eval) = train_and_eval(&run)?;
        rows.push(CompareRow::new(c.model_name(), &eval.report));
    }
    write_rows(&out.join(COMPARE_FILE), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub app_pct: f64,
    pub fraud_bps: f64,
    pub genuine_approved: f64,
    pub genuine_declined: f64,
    pub fraud_approved: f64,
    pub fraud_declined: f64,
}

/// Trains and evaluates the combined-reward agent once per β, all with the
/// config's seed, under `<out>/beta_<β>/`; writes `<out>/sweep_beta.csv`.
pub fn cmd_sweep_beta(config: &RunConfig, betas: &[f64]) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        bail!(Error::InvalidConfig("sweep-beta needs at least one beta".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        bail!(Error::InvalidConfig(format!("beta must be > 0, got {b}")));
    }
    let base = RunConfig {
        model: ModelKind::Dqn,
        reward: crate::config::RewardSelection {
            kind: fraud_rl::rewards::RewardKind::Combined,
            ..config.reward
        },
        ..config.clone()
    };
    base.resolved()?;
    let out = base.output_dir.clone();
    ensure_dir(&out)?;
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut run = base.clone();
        run.reward.beta = beta;
        run.output_dir = out.join(format!("beta_{beta}"));
        let (_, eval) = train_and_eval(&run)?;
        let r = CompareRow::new("DQNR", &eval.report);
        rows.push(SweepRow {
            beta,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            app_pct: r.app_pct,
            fraud_bps: r.fraud_bps,
            genuine_approved: r.genuine_approved,
            genuine_declined: r.genuine_declined,
            fraud_approved: r.fraud_approved,
            fraud_declined: r.fraud_declined,
        });
    }
    write_rows(&out.join(SWEEP_FILE), &rows)?;
    Ok(rows)
}
