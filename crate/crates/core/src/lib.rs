//! Payment fraud detection framed as a sequential decision problem.
//!
//! Transactions are served one at a time, in time order, by an episodic
//! [`environment::Environment`]. A [`agent::DqnAgent`] approves or declines
//! each one and is rewarded by one of the functions in [`rewards`]. The
//! state seen by the agent is the transaction's scaled feature vector plus the
//! recent decline rate (genuine transactions declined) and fraud rate (frauds
//! approved).
//!
//! The crate also carries the pieces needed to run that end to end:
//!
//! - [`neuralnet`]: a small dense network with manual backprop, Huber and
//!   cross-entropy losses, Adam and a JSON checkpoint format.
//! - [`data`]: CSV ingestion, min-max scaling, target encoding, the
//!   time-ordered 70/10/20 split and a synthetic transaction generator.
//! - [`baseline`]: a supervised network classifier with early stopping and
//!   F1-tuned decision threshold.
//! - [`metrics`]: precision/recall/F1, approval percentage, approved fraud in
//!   basis points, dollar breakdowns and per-episode rate traces.

pub mod agent;
pub mod baseline;
pub mod data;
pub mod environment;
mod error;
pub mod metrics;
pub mod neuralnet;
pub mod rewards;

pub use error::{Error, Result};

/// Decision taken on a transaction. Declining is the positive prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Approve = 0,
    Decline = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Approve, Action::Decline];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Action::Approve),
            1 => Some(Action::Decline),
            _ => None,
        }
    }
}

/// Ground-truth class of a transaction. Fraud is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine = 0,
    Fraud = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Genuine),
            1 => Some(Label::Fraud),
            _ => None,
        }
    }

    pub fn is_fraud(self) -> bool {
        self == Label::Fraud
    }
}
