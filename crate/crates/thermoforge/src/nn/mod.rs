//! The surrogate network: a stacked LSTM with a sigmoid output head,
//! trained with hand-rolled backpropagation through time and Adam, plus an
//! hour-wise feed-forward baseline. Everything runs in 64-bit floats so the
//! analytic gradients can be checked against central finite differences.

mod adam;
mod ffn;
mod io;
mod lstm;
mod metamodel;
mod train;

pub use adam::AdamState;
pub use ffn::FfnWeights;
pub use io::{load_network, save_network, NetworkKind, SavedNetwork};
pub use lstm::{lstm_cell, LstmLayerWeights};
pub use metamodel::{loss, loss_grad, MetamodelGrads, MetamodelWeights, NetLayout};
pub use train::{
    normalized_targets, output_channels, prepare_tensors, train, EpochStats, TrainHistory,
    TrainableNet,
};
