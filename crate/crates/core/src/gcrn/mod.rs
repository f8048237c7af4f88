//! Graph-convolutional recurrent forecaster and its training loop.

mod cell;
mod checkpoint;
mod model;
mod train;

pub use cell::{aggregate_conv, gcgru_step, graph_conv, GCGRUCell, GraphConvParams};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, FORMAT_VERSION, MAGIC,
};
pub use model::{forward, operators_for, GCRNModel, ModelDims, SampleInput};
pub use train::{
    dataset_loss, evaluate, forecast_metrics, loss_and_gradients, mae_loss, train, Adam,
    EpochRecord, EvalGraphMode, ForecastMetrics, TrainConfig, TrainHistory, TrainOutcome,
};
