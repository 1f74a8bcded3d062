//! Classification and business metrics over a vector of decisions.
//!
//! Declining is the positive prediction and fraud the positive class, so a
//! declined fraud is a true positive and an approved fraud a false negative.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::{EnvConfig, RateTracker, WindowMode};
use crate::{Action, Error, Label, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// Dollar sums of raw amounts split by class and decision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MoneyBreakdown {
    pub genuine_approved: f64,
    pub genuine_declined: f64,
    pub fraud_approved: f64,
    pub fraud_declined: f64,
}

/// What the approved-fraud basis points are measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FraudBpsDenominator {
    #[default]
    AllDecisions,
    Approvals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub decisions: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub approval_pct: f64,
    pub fraud_bps: f64,
    pub money: MoneyBreakdown,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn compute(
        actions: &[Action],
        labels: &[Label],
        amounts: &[f64],
        denominator: FraudBpsDenominator,
    ) -> Result<Self> {
        let cls = classification_report(actions, labels)?;
        let money = monetary_breakdown(actions, labels, amounts)?;
        Ok(Self {
            decisions: actions.len(),
            precision: cls.precision,
            recall: cls.recall,
            f1: cls.f1,
            approval_pct: approval_pct(actions),
            fraud_bps: fraud_bps_with(actions, labels, denominator)?,
            money,
            confusion: cls.confusion,
        })
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!("{what}: {a} decisions but {b} entries")));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(actions: &[Action], labels: &[Label]) -> Result<Confusion> {
    check_len("labels", actions.len(), labels.len())?;
    let mut c = Confusion::default();
    for (&a, &l) in actions.iter().zip(labels) {
        match (a, l) {
            (Action::Decline, Label::Fraud) => c.tp += 1,
            (Action::Decline, Label::Genuine) => c.fp += 1,
            (Action::Approve, Label::Genuine) => c.tn += 1,
            (Action::Approve, Label::Fraud) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Precision, recall and F1 with zero-denominator cases mapped to 0.
pub fn classification_report(actions: &[Action], labels: &[Label]) -> Result<ClassificationReport> {
    let c = confusion(actions, labels)?;
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ClassificationReport {
        precision,
        recall,
        f1,
        confusion: c,
    })
}

/// Approvals per 100 decisions; 0 for no decisions.
pub fn approval_pct(actions: &[Action]) -> f64 {
    let approved = actions.iter().filter(|&&a| a == Action::Approve).count();
    100.0 * ratio(approved, actions.len())
}

/// Approved frauds per 10,000 decisions.
pub fn fraud_bps(actions: &[Action], labels: &[Label]) -> Result<f64> {
    fraud_bps_with(actions, labels, FraudBpsDenominator::AllDecisions)
}

pub fn fraud_bps_with(actions: &[Action], labels: &[Label], denominator: FraudBpsDenominator) -> Result<f64> {
    let c = confusion(actions, labels)?;
    let den = match denominator {
        FraudBpsDenominator::AllDecisions => c.total(),
        FraudBpsDenominator::Approvals => c.tn + c.fn_,
    };
    Ok(10_000.0 * ratio(c.fn_, den))
}

pub fn monetary_breakdown(actions: &[Action], labels: &[Label], amounts: &[f64]) -> Result<MoneyBreakdown> {
    check_len("labels", actions.len(), labels.len())?;
    check_len("amounts", actions.len(), amounts.len())?;
    let mut m = MoneyBreakdown::default();
    for ((&a, &l), &amt) in actions.iter().zip(labels).zip(amounts) {
        let slot = match (l, a) {
            (Label::Genuine, Action::Approve) => &mut m.genuine_approved,
            (Label::Genuine, Action::Decline) => &mut m.genuine_declined,
            (Label::Fraud, Action::Approve) => &mut m.fraud_approved,
            (Label::Fraud, Action::Decline) => &mut m.fraud_declined,
        };
        *slot += amt;
    }
    Ok(m)
}

/// Rates at the close of one test episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTraceRow {
    /// One-based.
    pub episode: usize,
    pub dr: f64,
    pub fr: f64,
    /// Actual frauds among the episode's transactions.
    pub fraud_count: usize,
    pub steps: usize,
    /// Trailing episode shorter than the configured length.
    pub partial: bool,
}

/// Replays the decision stream through the environment's rate window.
pub fn episode_trace(actions: &[Action], labels: &[Label], env: &EnvConfig) -> Result<Vec<EpisodeTraceRow>> {
    check_len("labels", actions.len(), labels.len())?;
    env.validate()?;
    let mut tracker = RateTracker::new(env.rate_window);
    let mut rows = Vec::with_capacity(env.episodes_for(actions.len()));
    for (chunk_a, chunk_l) in actions.chunks(env.episode_length).zip(labels.chunks(env.episode_length)) {
        if env.window_mode == WindowMode::PerEpisodeReset {
            tracker.clear();
        }
        for (&a, &l) in chunk_a.iter().zip(chunk_l) {
            tracker.record(a, l);
        }
        rows.push(EpisodeTraceRow {
            episode: rows.len() + 1,
            dr: tracker.dr(),
            fr: tracker.fr(),
            fraud_count: chunk_l.iter().filter(|l| l.is_fraud()).count(),
            steps: chunk_a.len(),
            partial: chunk_a.len() < env.episode_length,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct TraceCsvRow {
    episode: usize,
    dr: f64,
    fr: f64,
    fraud_count: usize,
    partial: u8,
}

/// CSV with columns `episode,dr,fr,fraud_count,partial`.
pub fn write_trace_csv<W: Write>(rows: &[EpisodeTraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(TraceCsvRow {
            episode: r.episode,
            dr: r.dr,
            fr: r.fr,
            fraud_count: r.fraud_count,
            partial: r.partial as u8,
        })?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}
