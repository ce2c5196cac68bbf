//! Convolutional sentence classifier: embedding lookup, parallel filter banks
//! of several widths with ReLU, max-over-time pooling, dropout, and a softmax
//! output layer, trained by hand-written backpropagation and RMSProp.

mod classifier;
mod config;
mod layers;
mod model;
mod network;
mod optim;
mod scalar;
mod train;

pub use classifier::{Classifier, Prediction};
pub use config::CnnConfig;
pub use layers::{argmax, conv_feature_map, max_pool, relu, softmax};
pub use model::{CnnModel, CnnParams, Tensor};
pub use network::{
    backward, batch_loss, forward, l2_penalty, loss, predict_classes, predict_proba, ForwardTrace, LossValue,
    SampleTrace, PROB_FLOOR,
};
pub use optim::{rmsprop_step, OptimizerState};
pub use scalar::Real;
pub use train::{accuracy, train, train_with, EncodedSet, EpochRecord, TrainOutcome};
