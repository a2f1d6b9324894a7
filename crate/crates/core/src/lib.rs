//! Privacy-aware energy-consumption modeling for battery electric vehicles.
//!
//! The crate is organized bottom-up:
//!
//! - [`battery`]: RC-equivalent cell model, road-load surrogate and synthetic
//!   trip generation.
//! - [`data`]: trip records, feature engineering, windowing, splits and
//!   standardization.
//! - [`nn`]: from-scratch ANN/GRU/LSTM regressors with BPTT, Adam and the
//!   local training loop.
//! - [`fl`]: FedSGD, FedAvg, FedProx, FedPer and FedRep round procedures.
//! - [`topology`]: centralized and decentralized multi-round runners and
//!   experiment reports.
//! - [`experiment`]: configuration, sweeps and report rendering behind the
//!   `evfl` command-line tool.

pub mod battery;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod nn;
pub mod seed;
pub mod topology;

pub use error::{Error, Result};
