//! Deep Q-network agent.
//!
//! The online network maps a state (features, `dr`, `fr`) to one Q-value per
//! action. Training makes a single pass over the training stream: every
//! decision is ε-greedy, is stored in a FIFO replay pool, and is followed by
//! one Huber/Adam update on a uniformly sampled mini-batch against targets from
//! a delayed copy of the network. The copy is refreshed every
//! `target_sync_episodes` episodes. Evaluation is purely greedy and never
//! touches the pool or the weights.

mod replay;

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use replay::{Experience, ReplayMemory};

use crate::environment::{EnvConfig, EnvState, Environment, Transaction};
use crate::metrics::EpisodeTraceRow;
use crate::neuralnet::{huber_loss, AdamState, Checkpoint, Head, Mlp};
use crate::rewards::RewardFn;
use crate::{Action, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Linear decrement of ε per environment step.
    pub epsilon_decay: f64,
    /// When set, [`AgentConfig::resolve_for_pass`] replaces `epsilon_decay` so
    /// that ε reaches `epsilon_min` after this fraction of the training pass.
    pub epsilon_anneal_fraction: Option<f64>,
    pub target_sync_episodes: usize,
    pub replay_capacity: usize,
    pub hidden_layers: Vec<usize>,
    pub huber_delta: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 32,
            learning_rate: 0.005,
            epsilon_start: 1.0,
            epsilon_min: 0.01,
            epsilon_decay: 8e-6,
            epsilon_anneal_fraction: None,
            target_sync_episodes: 25,
            replay_capacity: 75_000,
            hidden_layers: vec![128, 128],
            huber_delta: 1.0,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.epsilon_min > 0.0 && self.epsilon_min <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return fail(format!(
                "need 0 < epsilon_min <= epsilon_start <= 1, got {} and {}",
                self.epsilon_min, self.epsilon_start
            ));
        }
        if !(self.epsilon_decay >= 0.0 && self.epsilon_decay.is_finite()) {
            return fail(format!("epsilon_decay must be >= 0, got {}", self.epsilon_decay));
        }
        if let Some(f) = self.epsilon_anneal_fraction {
            if !(f > 0.0 && f.is_finite()) {
                return fail(format!("epsilon_anneal_fraction must be > 0, got {f}"));
            }
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.target_sync_episodes == 0 {
            return fail("target_sync_episodes must be >= 1".into());
        }
        if self.replay_capacity == 0 {
            return fail("replay_capacity must be >= 1".into());
        }
        if self.hidden_layers.contains(&0) {
            return fail(format!("hidden layer sizes must be positive, got {:?}", self.hidden_layers));
        }
        if !(self.huber_delta > 0.0) {
            return fail(format!("huber_delta must be > 0, got {}", self.huber_delta));
        }
        Ok(())
    }

    /// Fixes `epsilon_decay` for a training stream of `train_len` steps when
    /// `epsilon_anneal_fraction` is set; otherwise returns the config unchanged.
    pub fn resolve_for_pass(&self, train_len: usize) -> AgentConfig {
        let mut c = self.clone();
        if let Some(f) = c.epsilon_anneal_fraction.take() {
            let steps = (f * train_len as f64).max(1.0);
            c.epsilon_decay = (c.epsilon_start - c.epsilon_min) / steps;
        }
        c
    }

    /// Q-network shape for a given state length.
    pub fn layer_sizes(&self, state_len: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(state_len);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(Action::ALL.len());
        sizes
    }
}

/// `max(epsilon_min, epsilon_start - epsilon_decay * step)`.
pub fn epsilon(step: u64, config: &AgentConfig) -> f64 {
    (config.epsilon_start - config.epsilon_decay * step as f64).max(config.epsilon_min)
}

/// Greedy choice between two Q-values; ties approve.
pub fn argmax_action(q: &[f64]) -> Action {
    if q[1] > q[0] {
        Action::Decline
    } else {
        Action::Approve
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    /// One-based.
    pub episode: usize,
    pub steps: usize,
    pub reward_sum: f64,
    /// `None` when no replay update ran during the episode.
    pub mean_loss: Option<f64>,
    pub dr: f64,
    pub fr: f64,
    /// ε used for the last decision of the episode.
    pub epsilon: f64,
    pub partial: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeLog>,
    /// Episode numbers after which the target network was synced.
    pub target_syncs: Vec<usize>,
    pub total_steps: u64,
}

#[derive(Serialize)]
struct TrainLogRow {
    episode: usize,
    reward_sum: f64,
    mean_loss: Option<f64>,
    dr: f64,
    fr: f64,
    epsilon: f64,
}

impl TrainLog {
    /// CSV with columns `episode,reward_sum,mean_loss,dr,fr,epsilon`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.episodes {
            w.serialize(TrainLogRow {
                episode: e.episode,
                reward_sum: e.reward_sum,
                mean_loss: e.mean_loss,
                dr: e.dr,
                fr: e.fr,
                epsilon: e.epsilon,
            })?;
        }
        w.flush().map_err(|e| Error::io("<train log>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Greedy decisions on a test stream plus the per-episode rate trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub actions: Vec<Action>,
    pub trace: Vec<EpisodeTraceRow>,
}

pub struct DqnAgent {
    online: Mlp,
    adam: AdamState,
    target: Mlp,
    memory: ReplayMemory,
    config: AgentConfig,
    rng: ChaCha8Rng,
    steps: u64,
    episodes: usize,
    syncs: usize,
}

impl DqnAgent {
    pub fn new(state_len: usize, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        let online = Mlp::new(&config.layer_sizes(state_len), config.seed)?;
        Ok(Self::with_network(online, None, config))
    }

    /// Rebuilds an agent around a saved Q-network.
    pub fn from_checkpoint(checkpoint: Checkpoint, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        if checkpoint.head != Head::Linear || checkpoint.net.output_size() != Action::ALL.len() {
            return Err(Error::Checkpoint(
                "not a Q-network checkpoint (needs a linear head with 2 outputs)".into(),
            ));
        }
        Ok(Self::with_network(checkpoint.net, checkpoint.adam, config))
    }

    fn with_network(online: Mlp, adam: Option<AdamState>, config: AgentConfig) -> Self {
        let adam = adam.unwrap_or_else(|| AdamState::new(&online));
        // separate stream from the weight initialisation
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5DEE_CE66_D1CE_4E5B);
        Self {
            target: online.clone(),
            memory: ReplayMemory::new(config.replay_capacity),
            online,
            adam,
            rng,
            config,
            steps: 0,
            episodes: 0,
            syncs: 0,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    /// Direct access to the online network, e.g. to script its weights.
    pub fn online_mut(&mut self) -> &mut Mlp {
        &mut self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn sync_count(&self) -> usize {
        self.syncs
    }

    pub fn state_len(&self) -> usize {
        self.online.input_size()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            net: self.online.clone(),
            adam: Some(self.adam.clone()),
            head: Head::Linear,
            threshold: None,
        }
    }

    fn check_state(&self, state: &EnvState) -> Result<()> {
        if state.len() != self.state_len() {
            return Err(Error::Shape(format!(
                "state has length {}, Q-network expects {}",
                state.len(),
                self.state_len()
            )));
        }
        Ok(())
    }

    pub fn q_values(&self, state: &EnvState) -> Result<[f64; 2]> {
        self.check_state(state)?;
        let q = self.online.predict_one(&state.to_vec())?;
        Ok([q[0], q[1]])
    }

    pub fn greedy_action(&self, state: &EnvState) -> Result<Action> {
        Ok(argmax_action(&self.q_values(state)?))
    }

    /// ε-greedy: uniform random action with probability `epsilon`, else greedy.
    pub fn select_action(&mut self, state: &EnvState, epsilon: f64) -> Result<Action> {
        self.check_state(state)?;
        if self.rng.random::<f64>() < epsilon {
            Ok(if self.rng.random_bool(0.5) {
                Action::Decline
            } else {
                Action::Approve
            })
        } else {
            self.greedy_action(state)
        }
    }

    pub fn remember(&mut self, experience: Experience) -> Result<()> {
        self.check_state(&experience.state)?;
        self.check_state(&experience.next_state)?;
        if !experience.reward.is_finite() {
            return Err(Error::NonFinite(format!("reward {}", experience.reward)));
        }
        self.memory.push(experience);
        Ok(())
    }

    /// One update on a uniformly sampled batch. `None` until the pool holds a full batch.
    pub fn replay_update(&mut self) -> Result<Option<f64>> {
        if self.memory.len() < self.config.batch_size {
            return Ok(None);
        }
        let batch: Vec<Experience> = self
            .memory
            .sample(self.config.batch_size, &mut self.rng)
            .into_iter()
            .cloned()
            .collect();
        self.update_on_batch(&batch).map(Some)
    }

    /// Huber regression of `Q(s, a)` toward `r + γ·max Q_target(s', ·)`
    /// (just `r` for terminal transitions), followed by one Adam step.
    pub fn update_on_batch(&mut self, batch: &[Experience]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty replay batch".into()));
        }
        let width = self.state_len();
        let rows = batch.len();
        let mut states = Array2::<f64>::zeros((rows, width));
        let mut next_states = Array2::<f64>::zeros((rows, width));
        for (i, e) in batch.iter().enumerate() {
            self.check_state(&e.state)?;
            self.check_state(&e.next_state)?;
            e.state.write_into(states.row_mut(i).as_slice_mut().unwrap());
            e.next_state.write_into(next_states.row_mut(i).as_slice_mut().unwrap());
        }

        let next_q = self.target.predict(next_states.view())?;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if e.terminal {
                    e.reward
                } else {
                    e.reward + self.config.gamma * next_q[[i, 0]].max(next_q[[i, 1]])
                }
            })
            .collect();

        let (q, cache) = self.online.forward(states.view())?;
        let taken: Vec<f64> = batch.iter().enumerate().map(|(i, e)| q[[i, e.action.index()]]).collect();
        let (loss, grad) = huber_loss(&taken, &targets, self.config.huber_delta)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("Q-learning loss {loss}")));
        }
        let mut output_grad = Array2::<f64>::zeros(q.raw_dim());
        for (i, e) in batch.iter().enumerate() {
            output_grad[[i, e.action.index()]] = grad[i];
        }
        let grads = self.online.backward(&cache, output_grad.view())?;
        self.adam.step(&mut self.online, &grads, self.config.learning_rate)?;
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target
            .copy_params_from(&self.online)
            .expect("online and target networks share a shape");
        self.syncs += 1;
    }

    /// One pass over the environment's stream.
    pub fn train(&mut self, env: &mut Environment<'_>, reward_fn: &RewardFn) -> Result<TrainLog> {
        if env.state_len() != self.state_len() {
            return Err(Error::Shape(format!(
                "environment states have length {}, Q-network expects {}",
                env.state_len(),
                self.state_len()
            )));
        }
        let mut log = TrainLog::default();
        let mut state = env.reset();
        let (mut reward_sum, mut loss_sum, mut updates, mut steps) = (0.0, 0.0, 0usize, 0usize);
        loop {
            let eps = epsilon(self.steps, &self.config);
            let action = self.select_action(&state, eps)?;
            let out = env.step(action)?;
            let reward = reward_fn.evaluate(action, out.label, out.amount, out.dr, out.fr)?;
            self.remember(Experience {
                state,
                action,
                reward,
                next_state: out.next_state.clone(),
                terminal: out.stream_done,
            })?;
            self.steps += 1;
            log.total_steps += 1;
            if let Some(loss) = self.replay_update()? {
                loss_sum += loss;
                updates += 1;
            }
            reward_sum += reward;
            steps += 1;

            if out.episode_done {
                self.episodes += 1;
                log.episodes.push(EpisodeLog {
                    episode: self.episodes,
                    steps,
                    reward_sum,
                    mean_loss: (updates > 0).then(|| loss_sum / updates as f64),
                    dr: out.dr,
                    fr: out.fr,
                    epsilon: eps,
                    partial: out.partial_episode,
                });
                if self.episodes.is_multiple_of(self.config.target_sync_episodes) {
                    self.sync_target();
                    log.target_syncs.push(self.episodes);
                }
                log::debug!(
                    "episode {} reward {:.3} dr {:.4} fr {:.4} eps {:.4}",
                    self.episodes,
                    reward_sum,
                    out.dr,
                    out.fr,
                    eps
                );
                (reward_sum, loss_sum, updates, steps) = (0.0, 0.0, 0, 0);
            }
            if out.stream_done {
                break;
            }
            state = out.next_state;
        }
        Ok(log)
    }

    /// Greedy pass over `data`; no exploration, no memory writes, no updates.
    pub fn evaluate(&self, data: &[Transaction], env_config: EnvConfig) -> Result<Evaluation> {
        let mut env = Environment::new(data, env_config)?;
        if env.state_len() != self.state_len() {
            return Err(Error::Shape(format!(
                "test states have length {}, Q-network expects {}",
                env.state_len(),
                self.state_len()
            )));
        }
        let mut state = env.reset();
        let mut actions = Vec::with_capacity(data.len());
        let mut trace = Vec::with_capacity(env.num_episodes());
        let mut frauds = 0;
        let mut steps = 0;
        loop {
            let action = self.greedy_action(&state)?;
            let out = env.step(action)?;
            actions.push(action);
            frauds += out.label.is_fraud() as usize;
            steps += 1;
            if out.episode_done {
                trace.push(EpisodeTraceRow {
                    episode: trace.len() + 1,
                    dr: out.dr,
                    fr: out.fr,
                    fraud_count: frauds,
                    steps,
                    partial: out.partial_episode,
                });
                frauds = 0;
                steps = 0;
            }
            if out.stream_done {
                break;
            }
            state = out.next_state;
        }
        Ok(Evaluation { actions, trace })
    }
}
