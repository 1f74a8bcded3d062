//! Seeded synthetic transaction streams.
//!
//! Genuine feature vectors are `N(0, std²)` per feature; fraud vectors are
//! shifted by `mean_separation · std` on every feature. Amounts are log-normal
//! per class and inter-arrival times exponential. An optional drift adds a
//! further offset to the fraud mean from a given index on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::environment::Transaction;
use crate::{Error, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drift {
    pub at_index: usize,
    /// Added to every fraud feature mean, in units of `feature_std`.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_transactions: usize,
    pub fraud_rate: f64,
    pub n_features: usize,
    /// Per-feature distance between class means, in units of `feature_std`.
    pub mean_separation: f64,
    pub feature_std: f64,
    pub genuine_amount: LogNormalParams,
    pub fraud_amount: LogNormalParams,
    pub mean_interarrival: f64,
    pub drift: Option<Drift>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_transactions: 10_000,
            fraud_rate: 0.02,
            n_features: 8,
            mean_separation: 3.0,
            feature_std: 1.0,
            genuine_amount: LogNormalParams { mu: 3.5, sigma: 1.2 },
            fraud_amount: LogNormalParams { mu: 3.5, sigma: 1.2 },
            mean_interarrival: 1.0,
            drift: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.n_transactions == 0 {
            return fail("n_transactions must be positive".into());
        }
        if !(self.fraud_rate > 0.0 && self.fraud_rate < 1.0) {
            return fail(format!("fraud_rate must lie in (0, 1), got {}", self.fraud_rate));
        }
        if self.n_features == 0 {
            return fail("n_features must be positive".into());
        }
        if !(self.feature_std > 0.0 && self.feature_std.is_finite()) {
            return fail(format!("feature_std must be > 0, got {}", self.feature_std));
        }
        if !self.mean_separation.is_finite() {
            return fail("mean_separation must be finite".into());
        }
        for (name, p) in [("genuine_amount", self.genuine_amount), ("fraud_amount", self.fraud_amount)] {
            if !(p.mu.is_finite() && p.sigma >= 0.0 && p.sigma.is_finite()) {
                return fail(format!("{name} needs finite mu and sigma >= 0"));
            }
        }
        if !(self.mean_interarrival > 0.0 && self.mean_interarrival.is_finite()) {
            return fail(format!("mean_interarrival must be > 0, got {}", self.mean_interarrival));
        }
        if let Some(d) = self.drift {
            if !d.offset.is_finite() {
                return fail("drift offset must be finite".into());
            }
        }
        Ok(())
    }

    /// Fraud feature mean (before multiplying by `feature_std`) at stream position `index`.
    pub fn fraud_mean_at(&self, index: usize) -> f64 {
        match self.drift {
            Some(d) if index >= d.at_index => self.mean_separation + d.offset,
            _ => self.mean_separation,
        }
    }
}

/// Generates a time-ordered stream. Features are raw (unscaled); `time` strictly increases.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<Transaction>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let amount_dist = |p: LogNormalParams| {
        LogNormal::new(p.mu, p.sigma).map_err(|e| Error::InvalidConfig(format!("amount distribution: {e}")))
    };
    let genuine_amount = amount_dist(config.genuine_amount)?;
    let fraud_amount = amount_dist(config.fraud_amount)?;
    let gaps = Exp::new(1.0 / config.mean_interarrival)
        .map_err(|e| Error::InvalidConfig(format!("inter-arrival distribution: {e}")))?;

    let mut time = 0.0;
    let mut out = Vec::with_capacity(config.n_transactions);
    for index in 0..config.n_transactions {
        let fraud = rng.random_bool(config.fraud_rate);
        let mean = if fraud { config.fraud_mean_at(index) } else { 0.0 };
        let features = (0..config.n_features)
            .map(|_| config.feature_std * (mean + unit.sample(&mut rng)))
            .collect();
        let mut amount = if fraud {
            fraud_amount.sample(&mut rng)
        } else {
            genuine_amount.sample(&mut rng)
        };
        if amount <= 0.0 {
            amount = f64::MIN_POSITIVE;
        }
        time += gaps.sample(&mut rng).max(f64::EPSILON);
        out.push(Transaction {
            index,
            time,
            features,
            amount,
            label: if fraud { Label::Fraud } else { Label::Genuine },
        });
    }
    Ok(out)
}
