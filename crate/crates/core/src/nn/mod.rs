//! From-scratch regressors (dense, GRU, LSTM stacks) with MAE loss,
//! backpropagation through time, a finite-difference oracle, Adam and the
//! local mini-batch training loop.

mod act;
mod adam;
mod arch;
mod checkpoint;
mod gradcheck;
mod loss;
mod net;
mod params;
mod train;

pub use adam::AdamState;
pub use arch::{ArchKind, ArchSpec};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
};
pub use gradcheck::{finite_diff_gradient, relative_error};
pub use loss::mae_loss;
pub use net::{dropout_in_place, Dropout, Mode, Model};
pub use params::{init_model, LayerPartition, ParamVector, Segment};
pub use train::{evaluate, predict, run_local_epochs, train_local, Proximal, TrainConfig};
