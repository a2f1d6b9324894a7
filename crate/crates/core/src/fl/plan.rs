use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::partition::PartitionPolicy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Avg,
    Prox,
    Per,
    Rep,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Sgd,
        Algorithm::Avg,
        Algorithm::Prox,
        Algorithm::Per,
        Algorithm::Rep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Avg => "avg",
            Algorithm::Prox => "prox",
            Algorithm::Per => "per",
            Algorithm::Rep => "rep",
        }
    }

    /// FedPer and FedRep keep client-resident personal segments.
    pub fn is_personalized(self) -> bool {
        matches!(self, Algorithm::Per | Algorithm::Rep)
    }

    /// Whether clients may be subsampled; the other procedures activate
    /// every client.
    pub fn allows_partial_participation(self) -> bool {
        matches!(self, Algorithm::Avg | Algorithm::Prox)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix("fed").unwrap_or(&t);
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == t)
            .ok_or_else(|| {
                Error::param(
                    "algorithm",
                    format!("unknown algorithm {s:?} (sgd, avg, prox, per, rep)"),
                )
            })
    }
}

/// Reference point of the FedProx penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Global weights of the previous round (`w0` in round 1).
    PreviousGlobal,
    /// The weights the client received at the start of this round.
    Received,
}

impl FromStr for AnchorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "previous_global" => Ok(AnchorMode::PreviousGlobal),
            "received" => Ok(AnchorMode::Received),
            _ => Err(Error::param(
                "anchor",
                format!("unknown anchor mode {s:?} (previous_global, received)"),
            )),
        }
    }
}

impl fmt::Display for AnchorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnchorMode::PreviousGlobal => "previous_global",
            AnchorMode::Received => "received",
        })
    }
}

/// Client-side update used by FedPer and FedRep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMode {
    /// `E` epochs of Adam mini-batch steps, as in FedAvg.
    Epochs,
    /// One full-batch gradient step with the server rate.
    SingleStep,
}

impl FromStr for LocalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "epochs" => Ok(LocalMode::Epochs),
            "single_step" => Ok(LocalMode::SingleStep),
            _ => Err(Error::param(
                "local_mode",
                format!("unknown local mode {s:?} (epochs, single_step)"),
            )),
        }
    }
}

impl fmt::Display for LocalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocalMode::Epochs => "epochs",
            LocalMode::SingleStep => "single_step",
        })
    }
}

/// Hyperparameters shared by every round of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub algorithm: Algorithm,
    /// Gradient step size for FedSGD and single-step personalization.
    pub server_lr: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Fraction of clients sampled per round (FedAvg/FedProx only).
    pub participation: f64,
    pub mu: f64,
    pub anchor: AnchorMode,
    pub policy: PartitionPolicy,
    pub local_mode: LocalMode,
}

impl Default for RoundPlan {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Avg,
            server_lr: 0.05,
            local_epochs: 5,
            batch_size: 70,
            participation: 1.0,
            mu: 0.01,
            anchor: AnchorMode::PreviousGlobal,
            policy: PartitionPolicy::Default,
            local_mode: LocalMode::Epochs,
        }
    }
}

impl RoundPlan {
    pub fn validate(&self, n_clients: usize) -> Result<()> {
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::param("participation", "must lie in (0, 1]"));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::param("mu", "must be finite and >= 0"));
        }
        if !(self.server_lr > 0.0) || !self.server_lr.is_finite() {
            return Err(Error::param("server_lr", "must be finite and > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if n_clients == 0 {
            return Err(Error::param("clients", "need at least one client"));
        }
        if self.participants(n_clients) == 0 {
            return Err(Error::param("participation", "selects no client"));
        }
        Ok(())
    }

    /// Clients taking part in a round: `ceil(phi * n)`, or all of them for
    /// procedures without a subset step.
    pub fn participants(&self, n: usize) -> usize {
        if !self.algorithm.allows_partial_participation() {
            return n;
        }
        // The small slack keeps e.g. 0.3 * 10 from rounding up to 4.
        let k = (self.participation * n as f64 - 1e-9).ceil();
        (k.max(0.0) as usize).min(n)
    }
}
