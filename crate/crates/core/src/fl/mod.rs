//! Federated optimization: FedSGD, FedAvg, FedProx, FedPer and FedRep rounds
//! over sample-count-weighted clients.
//!
//! Only parameter vectors, gradients and window counts cross the client
//! boundary; the round functions take nothing else from a client.

mod aggregate;
mod client;
mod partition;
mod plan;
mod rounds;

pub use aggregate::{aggregation_weights, weighted_average, weighted_average_into};
pub use client::Client;
pub use partition::{make_partition, PartitionPolicy, SharedPersonalSplit};
pub use plan::{Algorithm, AnchorMode, LocalMode, RoundPlan};
pub use rounds::{
    fedavg_round, fedsgd_round, personalized_round, sample_participants, server_sgd_step,
    RoundContext,
};
