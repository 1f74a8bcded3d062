//! Episodic transaction-stream environment.
//!
//! Transactions are visited exactly once, in dataset order. After each
//! decision the environment records `(action, label)` in a [`RateTracker`] and
//! hands back the next transaction together with the updated decline rate
//! (`dr`, share of genuine transactions declined) and fraud rate (`fr`, share
//! of frauds approved). Episodes are consecutive blocks of `episode_length`
//! decisions; the last block may be shorter.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Action, Error, Label, Result};

/// One time-ordered payment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    /// Position after time sorting.
    pub index: usize,
    pub time: f64,
    /// Scaled features.
    pub features: Vec<f64>,
    /// Raw, unscaled amount used by the monetary reward.
    pub amount: f64,
    pub label: Label,
}

/// Agent-facing state: transaction features followed by `dr` and `fr`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub features: Vec<f64>,
    pub dr: f64,
    pub fr: f64,
}

impl EnvState {
    pub fn len(&self) -> usize {
        self.features.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.features);
        v.push(self.dr);
        v.push(self.fr);
        v
    }

    /// Writes the state into `out`, which must have length [`EnvState::len`].
    pub fn write_into(&self, out: &mut [f64]) {
        let n = self.features.len();
        out[..n].copy_from_slice(&self.features);
        out[n] = self.dr;
        out[n + 1] = self.fr;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Last `rate_window` decisions, across episode boundaries.
    #[default]
    Rolling,
    /// As `Rolling`, but the window is emptied at the start of every episode.
    PerEpisodeReset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub episode_length: usize,
    pub rate_window: usize,
    pub window_mode: WindowMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_length: 500,
            rate_window: 4000,
            window_mode: WindowMode::Rolling,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_length == 0 {
            return Err(Error::InvalidConfig("episode_length must be >= 1".into()));
        }
        if self.rate_window == 0 {
            return Err(Error::InvalidConfig("rate_window must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of episodes needed to cover `n` transactions, counting a trailing partial one.
    pub fn episodes_for(&self, n: usize) -> usize {
        n.div_ceil(self.episode_length)
    }
}

/// FIFO window of recent decisions with running counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTracker {
    window: VecDeque<(Action, Label)>,
    capacity: usize,
    declined_genuine: usize,
    genuine: usize,
    approved_fraud: usize,
    fraud: usize,
}

impl RateTracker {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "rate window must be positive");
        Self {
            window: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
            declined_genuine: 0,
            genuine: 0,
            approved_fraud: 0,
            fraud: 0,
        }
    }

    fn count(&mut self, action: Action, label: Label, sign: isize) {
        let bump = |c: &mut usize| *c = c.checked_add_signed(sign).expect("rate counts stay non-negative");
        match label {
            Label::Genuine => {
                bump(&mut self.genuine);
                if action == Action::Decline {
                    bump(&mut self.declined_genuine);
                }
            }
            Label::Fraud => {
                bump(&mut self.fraud);
                if action == Action::Approve {
                    bump(&mut self.approved_fraud);
                }
            }
        }
    }

    pub fn record(&mut self, action: Action, label: Label) {
        if self.window.len() == self.capacity {
            let (old_action, old_label) = self.window.pop_front().unwrap();
            self.count(old_action, old_label, -1);
        }
        self.window.push_back((action, label));
        self.count(action, label, 1);
    }

    pub fn clear(&mut self) {
        self.window.clear();
        self.declined_genuine = 0;
        self.genuine = 0;
        self.approved_fraud = 0;
        self.fraud = 0;
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn window(&self) -> impl Iterator<Item = &(Action, Label)> {
        self.window.iter()
    }

    /// `(declined_genuine, genuine, approved_fraud, fraud)`.
    pub fn counts(&self) -> (usize, usize, usize, usize) {
        (self.declined_genuine, self.genuine, self.approved_fraud, self.fraud)
    }

    pub fn dr(&self) -> f64 {
        compute_dr(self)
    }

    pub fn fr(&self) -> f64 {
        compute_fr(self)
    }
}

/// Declined genuine over genuine in the window; 0 with no genuine transactions.
pub fn compute_dr(tracker: &RateTracker) -> f64 {
    if tracker.genuine == 0 {
        0.0
    } else {
        tracker.declined_genuine as f64 / tracker.genuine as f64
    }
}

/// Approved fraud over fraud in the window; 0 with no frauds.
pub fn compute_fr(tracker: &RateTracker) -> f64 {
    if tracker.fraud == 0 {
        0.0
    } else {
        tracker.approved_fraud as f64 / tracker.fraud as f64
    }
}

/// Result of one [`Environment::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub label: Label,
    pub amount: f64,
    /// Rates after recording this decision, before any episode reset.
    pub dr: f64,
    pub fr: f64,
    /// State for the next transaction. At the end of the stream there is no
    /// next transaction; this then repeats the last features with the final rates.
    pub next_state: EnvState,
    pub episode_done: bool,
    pub stream_done: bool,
    /// Set on the step closing a trailing episode shorter than `episode_length`.
    pub partial_episode: bool,
}

pub struct Environment<'a> {
    data: &'a [Transaction],
    config: EnvConfig,
    tracker: RateTracker,
    cursor: usize,
    steps_in_episode: usize,
    episode: usize,
}

impl<'a> Environment<'a> {
    pub fn new(data: &'a [Transaction], config: EnvConfig) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidInput("environment needs at least one transaction".into()));
        }
        let width = data[0].features.len();
        if let Some(t) = data.iter().find(|t| t.features.len() != width) {
            return Err(Error::Shape(format!(
                "transaction {} has {} features, expected {width}",
                t.index,
                t.features.len()
            )));
        }
        Ok(Self {
            data,
            config,
            tracker: RateTracker::new(config.rate_window),
            cursor: 0,
            steps_in_episode: 0,
            episode: 0,
        })
    }

    /// Rewinds to the first transaction with `dr = fr = 0`.
    pub fn reset(&mut self) -> EnvState {
        self.tracker.clear();
        self.cursor = 0;
        self.steps_in_episode = 0;
        self.episode = 0;
        self.state_at(0)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn tracker(&self) -> &RateTracker {
        &self.tracker
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state_len(&self) -> usize {
        self.data[0].features.len() + 2
    }

    pub fn num_episodes(&self) -> usize {
        self.config.episodes_for(self.data.len())
    }

    /// Zero-based index of the episode the next step belongs to.
    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.data.len()
    }

    /// Transaction awaiting a decision.
    pub fn current(&self) -> Option<&'a Transaction> {
        self.data.get(self.cursor)
    }

    pub fn current_state(&self) -> Option<EnvState> {
        (!self.is_done()).then(|| self.state_at(self.cursor))
    }

    fn state_at(&self, i: usize) -> EnvState {
        EnvState {
            features: self.data[i].features.clone(),
            dr: self.tracker.dr(),
            fr: self.tracker.fr(),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let Some(tx) = self.current() else {
            return Err(Error::Sequencing("step called after the stream was exhausted".into()));
        };
        self.tracker.record(action, tx.label);
        let (dr, fr) = (self.tracker.dr(), self.tracker.fr());
        self.cursor += 1;
        self.steps_in_episode += 1;

        let stream_done = self.is_done();
        let full_episode = self.steps_in_episode == self.config.episode_length;
        let episode_done = full_episode || stream_done;
        let partial_episode = stream_done && !full_episode;
        if episode_done {
            self.steps_in_episode = 0;
            self.episode += 1;
            if !stream_done && self.config.window_mode == WindowMode::PerEpisodeReset {
                self.tracker.clear();
            }
        }
        let next_state = if stream_done {
            EnvState {
                features: tx.features.clone(),
                dr,
                fr,
            }
        } else {
            self.state_at(self.cursor)
        };
        Ok(StepOutcome {
            label: tx.label,
            amount: tx.amount,
            dr,
            fr,
            next_state,
            episode_done,
            stream_done,
            partial_episode,
        })
    }
}
