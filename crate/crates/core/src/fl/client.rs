use crate::data::WindowedDataset;
use crate::nn::{AdamState, ParamVector};
use crate::seed;

/// One vehicle in the federation.
///
/// The training windows never leave the client; round procedures read only
/// `params` and `n()`.
#[derive(Debug, Clone)]
pub struct Client {
    pub id: String,
    /// Position in the fleet; orders summation and seeds the client stream.
    pub index: usize,
    pub train: WindowedDataset,
    /// Current local model. For FedPer/FedRep this is the composite of the
    /// latest shared segments and the client's personal segments.
    pub params: ParamVector,
    pub adam: AdamState,
    /// Local epochs run so far; continues the shuffle and dropout streams.
    pub epochs_done: u64,
    pub seed: u64,
}

impl Client {
    pub fn new(
        id: impl Into<String>,
        index: usize,
        train: WindowedDataset,
        params: ParamVector,
        run_seed: u64,
    ) -> Self {
        let adam = AdamState::new(params.len());
        Self {
            id: id.into(),
            index,
            train,
            params,
            adam,
            epochs_done: 0,
            seed: Self::stream_seed(run_seed, index),
        }
    }

    /// Seed of the client's local training stream.
    pub fn stream_seed(run_seed: u64, index: usize) -> u64 {
        seed::derive(run_seed, "client", &[index as u64])
    }

    /// Number of training windows `n_v`.
    pub fn n(&self) -> usize {
        self.train.len()
    }
}
