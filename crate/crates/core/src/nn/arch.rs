use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::N_FEATURES;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Ann,
    Gru,
    Lstm,
}

impl ArchKind {
    /// Segment-name prefix of hidden layers.
    pub fn layer_prefix(self) -> &'static str {
        match self {
            ArchKind::Ann => "dense",
            ArchKind::Gru => "gru",
            ArchKind::Lstm => "lstm",
        }
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, ArchKind::Ann)
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::Ann => "ann",
            ArchKind::Gru => "gru",
            ArchKind::Lstm => "lstm",
        })
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ann" => Ok(ArchKind::Ann),
            "gru" => Ok(ArchKind::Gru),
            "lstm" => Ok(ArchKind::Lstm),
            other => Err(Error::param("arch", format!("unknown kind `{other}`"))),
        }
    }
}

/// Network shape: three tanh hidden layers with dropout between them and a
/// scalar dense head.
///
/// Recurrent kinds consume the window step by step and read the last hidden
/// state of the top layer; the ANN flattens the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ArchKind,
    /// Steps per input window.
    pub window_len: usize,
    pub n_features: usize,
    pub hidden: Vec<usize>,
    /// Dropout rate after each hidden layer except the last.
    pub dropout: Vec<f64>,
    /// Fixed multiplier on the dense head output (not trained).
    pub output_scale: f64,
}

impl ArchSpec {
    /// Default profile: hidden `[40, 32, 16]`, dropout `[0.10, 0.20]`.
    pub fn new(kind: ArchKind, window_len: usize) -> Self {
        Self {
            kind,
            window_len,
            n_features: N_FEATURES,
            hidden: vec![40, 32, 16],
            dropout: vec![0.10, 0.20],
            output_scale: 1.0,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_dropout(mut self, dropout: Vec<f64>) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn without_dropout(mut self) -> Self {
        self.dropout = vec![0.0; self.hidden.len().saturating_sub(1)];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.n_features == 0 {
            return Err(Error::param(
                "arch",
                "window length and feature count must be >= 1",
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param(
                "arch.hidden",
                "needs at least one non-empty layer",
            ));
        }
        if self.dropout.len() + 1 != self.hidden.len() {
            return Err(Error::param(
                "arch.dropout",
                format!(
                    "{} rates given for {} hidden layers (expected one fewer)",
                    self.dropout.len(),
                    self.hidden.len()
                ),
            ));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::param("arch.dropout", "rates must lie in [0, 1)"));
        }
        if !self.output_scale.is_finite() || self.output_scale == 0.0 {
            return Err(Error::param(
                "arch.output_scale",
                "must be finite and non-zero",
            ));
        }
        Ok(())
    }

    /// Name of hidden layer `l` (0-based), e.g. `lstm3` for `l = 2`.
    pub fn layer_name(&self, l: usize) -> String {
        format!("{}{}", self.kind.layer_prefix(), l + 1)
    }

    /// Input width of the first hidden layer.
    pub fn input_width(&self) -> usize {
        match self.kind {
            ArchKind::Ann => self.window_len * self.n_features,
            _ => self.n_features,
        }
    }
}
