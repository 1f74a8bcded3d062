//! Reward functions.
//!
//! * [`reward_monetary`]: issuer revenue model. Approving a genuine payment
//!   earns a small cut `α·ln(amount)`, approving a fraud loses `ln(amount)`;
//!   declines earn the mirror image.
//! * [`reward_balance`]: scaled F-beta style harmonic mean of `1 - dr` and
//!   `1 - fr`. Larger `beta` weighs the fraud rate more.
//! * [`reward_combined`]: the sum of the two, evaluated with the rates after the
//!   current decision is recorded.
//! * [`reward_prime`]: class-weighted ±1/±λ reward. With `λ = ρ` (fraud over
//!   genuine count) it is the "R′" comparison reward; with `λ = 0.1` it is "R″".

use serde::{Deserialize, Serialize};

use crate::environment::Transaction;
use crate::{Action, Error, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    /// λ of the R′ reward. `None` means "use ρ of the training split".
    pub lambda_prime: Option<f64>,
    pub lambda_double: f64,
    pub balance_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            beta: 0.5,
            lambda_prime: None,
            lambda_double: 0.1,
            balance_scale: 0.125,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", Some(self.alpha)),
            ("beta", Some(self.beta)),
            ("lambda_prime", self.lambda_prime),
            ("lambda_double", Some(self.lambda_double)),
            ("balance_scale", Some(self.balance_scale)),
        ];
        for (name, value) in positive {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidConfig(format!("reward {name} must be > 0, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Which reward drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    /// Monetary plus balance reward.
    #[default]
    Combined,
    /// Class-weighted reward with λ = ρ.
    Rprime,
    /// Class-weighted reward with λ = 0.1.
    Rdouble,
}

impl RewardKind {
    /// Row label used in comparison tables.
    pub fn model_name(self) -> &'static str {
        match self {
            RewardKind::Combined => "DQNR",
            RewardKind::Rprime => "DQNR'",
            RewardKind::Rdouble => "DQNR''",
        }
    }
}

/// A fully resolved reward function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardFn {
    Combined { alpha: f64, beta: f64, scale: f64 },
    ClassWeighted { lambda: f64 },
}

impl RewardFn {
    /// Resolves `kind` against `config`. `rho` fills in an unset R′ λ.
    pub fn new(kind: RewardKind, config: &RewardConfig, rho: f64) -> Result<Self> {
        config.validate()?;
        let f = match kind {
            RewardKind::Combined => RewardFn::Combined {
                alpha: config.alpha,
                beta: config.beta,
                scale: config.balance_scale,
            },
            RewardKind::Rprime => RewardFn::ClassWeighted {
                lambda: config.lambda_prime.unwrap_or(rho),
            },
            RewardKind::Rdouble => RewardFn::ClassWeighted {
                lambda: config.lambda_double,
            },
        };
        if let RewardFn::ClassWeighted { lambda } = f {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidConfig(format!("reward lambda must be > 0, got {lambda}")));
            }
        }
        Ok(f)
    }

    /// `dr`/`fr` are the rates after this decision was recorded.
    pub fn evaluate(&self, action: Action, label: Label, amount: f64, dr: f64, fr: f64) -> Result<f64> {
        match *self {
            RewardFn::Combined { alpha, beta, scale } => {
                Ok(reward_monetary(action, label, amount, alpha)? + reward_balance(dr, fr, beta, scale)?)
            }
            RewardFn::ClassWeighted { lambda } => Ok(reward_prime(action, label, lambda)),
        }
    }
}

/// Natural log of the amount, floored at `ln 1 = 0` for sub-unit amounts.
fn log_amount(amount: f64) -> Result<f64> {
    if !(amount >= 0.0) || !amount.is_finite() {
        return Err(Error::InvalidInput(format!("amount must be finite and >= 0, got {amount}")));
    }
    Ok(amount.max(1.0).ln())
}

pub fn reward_monetary(action: Action, label: Label, amount: f64, alpha: f64) -> Result<f64> {
    let l = log_amount(amount)?;
    Ok(match (action, label) {
        (Action::Approve, Label::Genuine) => alpha * l,
        (Action::Decline, Label::Genuine) => -(alpha * l),
        (Action::Approve, Label::Fraud) => -l,
        (Action::Decline, Label::Fraud) => l,
    })
}

pub fn reward_balance(dr: f64, fr: f64, beta: f64, scale: f64) -> Result<f64> {
    for (name, v) in [("dr", dr), ("fr", fr)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let keep_genuine = 1.0 - dr;
    let stop_fraud = 1.0 - fr;
    let b2 = beta * beta;
    let denom = b2 * keep_genuine + stop_fraud;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(scale * (1.0 + b2) * keep_genuine * stop_fraud / denom)
}

pub fn reward_combined(
    action: Action,
    label: Label,
    amount: f64,
    dr: f64,
    fr: f64,
    config: &RewardConfig,
) -> Result<f64> {
    Ok(reward_monetary(action, label, amount, config.alpha)?
        + reward_balance(dr, fr, config.beta, config.balance_scale)?)
}

pub fn reward_prime(action: Action, label: Label, lambda: f64) -> f64 {
    let correct = action.index() == label.index();
    let magnitude = match label {
        Label::Fraud => 1.0,
        Label::Genuine => lambda,
    };
    if correct {
        magnitude
    } else {
        -magnitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceStats {
    pub fraud_count: usize,
    pub genuine_count: usize,
    pub ratio: f64,
}

impl ImbalanceStats {
    pub fn from_counts(fraud_count: usize, genuine_count: usize) -> Result<Self> {
        if genuine_count == 0 {
            return Err(Error::InvalidInput(
                "class imbalance ratio needs at least one genuine transaction".into(),
            ));
        }
        Ok(Self {
            fraud_count,
            genuine_count,
            ratio: fraud_count as f64 / genuine_count as f64,
        })
    }
}

/// Fraud count over genuine count. Pass the training split only.
pub fn imbalance_ratio(data: &[Transaction]) -> Result<ImbalanceStats> {
    let fraud = data.iter().filter(|t| t.label.is_fraud()).count();
    ImbalanceStats::from_counts(fraud, data.len() - fraud)
}
