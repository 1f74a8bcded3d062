//! Supervised feed-forward classifier used as the comparison baseline.
//!
//! Same architecture as the Q-network but with a single logit output, trained
//! with binary cross-entropy on the feature vector alone (no decline or fraud
//! rates). Training stops early on validation loss and the decision threshold
//! is chosen on the validation split to maximise F1.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::Transaction;
use crate::metrics::classification_report;
use crate::neuralnet::{bce_with_logits, sigmoid, AdamState, Mlp};
use crate::{Action, Error, Label, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Number of evenly spaced thresholds strictly inside (0, 1).
    pub threshold_grid: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![128, 128],
            learning_rate: 0.0002,
            batch_size: 64,
            max_epochs: 100,
            patience: 5,
            threshold_grid: 999,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("baseline learning_rate must be > 0");
        }
        if self.patience == 0 {
            return fail("baseline patience must be >= 1");
        }
        if self.batch_size == 0 {
            return fail("baseline batch_size must be positive");
        }
        if self.threshold_grid == 0 {
            return fail("baseline threshold_grid must be positive");
        }
        if self.hidden_layers.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, input: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(&self.hidden_layers);
        sizes.push(1);
        sizes
    }
}

/// Loss after each epoch; epoch 0 is the untrained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBaseline {
    /// Parameters from the epoch with the lowest validation loss.
    pub net: Mlp,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn feature_matrix(data: &[Transaction]) -> Result<Array2<f64>> {
    let width = data.first().map_or(0, |t| t.features.len());
    let mut m = Array2::zeros((data.len(), width));
    for (mut row, t) in m.outer_iter_mut().zip(data) {
        if t.features.len() != width {
            return Err(Error::Shape(format!(
                "transaction {} has {} features, expected {width}",
                t.index,
                t.features.len()
            )));
        }
        row.iter_mut().zip(&t.features).for_each(|(r, &f)| *r = f);
    }
    Ok(m)
}

fn targets(data: &[Transaction]) -> Vec<f64> {
    data.iter().map(|t| t.label.index() as f64).collect()
}

/// Mean cross-entropy of `net` over `data`.
pub fn bce_on(net: &Mlp, data: &[Transaction]) -> Result<f64> {
    let logits = net.predict(feature_matrix(data)?.view())?;
    let (loss, _) = bce_with_logits(logits.as_slice().expect("contiguous"), &targets(data))?;
    Ok(loss)
}

pub fn train_baseline(train: &[Transaction], validation: &[Transaction], config: &BaselineConfig) -> Result<TrainedBaseline> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidInput("baseline needs non-empty train and validation splits".into()));
    }
    let x = feature_matrix(train)?;
    let y = targets(train);
    let mut net = Mlp::new(&config.layer_sizes(x.ncols()), config.seed)?;
    let mut adam = AdamState::new(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xB45E_11FE);

    let check = |loss: f64, epoch: usize, what: &str| {
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::NonFinite(format!("{what} loss {loss} at epoch {epoch}")))
        }
    };
    let initial = check(bce_on(&net, validation)?, 0, "validation")?;
    let mut curve = vec![EpochRecord {
        epoch: 0,
        train_loss: None,
        validation_loss: initial,
    }];
    let mut best = (initial, 0, net.clone());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(ndarray::Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (logits, cache) = net.forward(xb.view())?;
            let (loss, grad) = bce_with_logits(logits.as_slice().expect("contiguous"), &yb)?;
            check(loss, epoch, "training")?;
            total += loss * chunk.len() as f64;
            let grad = Array2::from_shape_vec((chunk.len(), 1), grad).expect("one logit per row");
            let grads = net.backward(&cache, grad.view())?;
            adam.step(&mut net, &grads, config.learning_rate)?;
        }
        let val = check(bce_on(&net, validation)?, epoch, "validation")?;
        curve.push(EpochRecord {
            epoch,
            train_loss: Some(total / train.len() as f64),
            validation_loss: val,
        });
        log::debug!("baseline epoch {epoch}: validation loss {val:.6}");
        if val < best.0 {
            best = (val, epoch, net.clone());
        } else if epoch - best.1 >= config.patience {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    Ok(TrainedBaseline {
        net: best.2,
        curve,
        best_epoch: best.1,
        stopped_early,
    })
}

/// Fraud probability per transaction.
pub fn scores(net: &Mlp, data: &[Transaction]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let logits = net.predict(feature_matrix(data)?.view())?;
    Ok(logits.iter().map(|&z| sigmoid(z)).collect())
}

/// Grid point `i` (1-based) of `n` is `i / (n + 1)`.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

fn f1_from_counts(tp: usize, declined: usize, positives: usize) -> f64 {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let (p, r) = (ratio(tp, declined), ratio(tp, positives));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// F1-maximising grid threshold for fixed scores; the lowest wins a tie.
pub fn best_threshold(scores: &[f64], labels: &[Label], grid: usize) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let positives = labels.iter().filter(|l| l.is_fraud()).count();
    // descending scores; sweeping thresholds upward drops rows off the tail
    let mut ranked: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(&s, l)| (s, l.is_fraud())).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut declined = ranked.len();
    let mut tp = positives;
    let mut best = (f64::NAN, -1.0);
    for t in threshold_grid(grid) {
        while declined > 0 && ranked[declined - 1].0 < t {
            declined -= 1;
            tp -= ranked[declined].1 as usize;
        }
        let f1 = f1_from_counts(tp, declined, positives);
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    Ok(best)
}

/// Returns the chosen threshold and its validation F1.
pub fn tune_threshold(net: &Mlp, validation: &[Transaction], grid: usize) -> Result<(f64, f64)> {
    let labels: Vec<Label> = validation.iter().map(|t| t.label).collect();
    best_threshold(&scores(net, validation)?, &labels, grid)
}

/// Decline exactly when the fraud score reaches the threshold.
pub fn predict_baseline(net: &Mlp, threshold: f64, data: &[Transaction]) -> Result<Vec<Action>> {
    Ok(scores(net, data)?
        .into_iter()
        .map(|s| if s >= threshold { Action::Decline } else { Action::Approve })
        .collect())
}

/// F1 of thresholding `scores` at `t`, computed through the metrics module.
pub fn f1_at(scores: &[f64], labels: &[Label], t: f64) -> Result<f64> {
    let actions: Vec<Action> = scores
        .iter()
        .map(|&s| if s >= t { Action::Decline } else { Action::Approve })
        .collect();
    Ok(classification_report(&actions, labels)?.f1)
}
