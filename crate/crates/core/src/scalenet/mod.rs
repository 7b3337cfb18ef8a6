//! The layer scaling network, its baselines, training and model files.

mod baseline;
mod interpret;
mod layer;
mod model;
mod network;
mod train;

pub use baseline::ConvBaseline;
pub use interpret::{
    argmax_interpret, interpret, tile_rarity_order, CellOverride, ProbabilityMap, DEFAULT_THRESHOLD,
};
pub use layer::{ScaleLayer, ScaleTrace, TrainingHead, LAYER_INPUT_CHANNELS, PROCESSED_CHANNELS};
pub use model::{
    load_model, save_model, Architecture, Model, ModelHeader, ModelInfo, TensorEntry,
    MODEL_FORMAT_VERSION,
};
pub use network::{LayerScalingNetwork, ScaleOutputs};
pub use train::{
    base_train, greedy_layer_train, split_indices, train_architecture, train_conv_baseline,
    train_softmax, GreedyReport, LayerFineTune, LossHistory, TrainOutcome, TrainProgress,
    TrainingConfig,
};

use crate::error::Result;
use crate::tensor::{Parameter, Real, Tensor};

/// A network trained end to end against a 7-channel softmax.
pub trait SoftmaxModel<F: Real> {
    fn input_size(&self) -> usize;
    /// Inference-mode probabilities, `[n, 7, 2s, 2s]`.
    fn predict(&self, user: &Tensor<F>) -> Result<Tensor<F>>;
    /// Training-mode probabilities; records what `backward` needs.
    fn forward_train(&mut self, user: &Tensor<F>) -> Result<Tensor<F>>;
    fn backward(&mut self, loss_grad: &Tensor<F>) -> Result<()>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<F>>;
}
