//! Feedforward and convolutional networks with hand-written backward passes,
//! trained by minibatch SGD with momentum and weight decay.

pub mod arch;
mod conv;
mod gradcheck;
mod gradnorm;
mod layer;
mod model;
mod optim;
mod propagate;
mod train;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use gradnorm::{grad_norm_by_level, LevelNorms};
pub use layer::LayerSpec;
pub use model::{Gradients, Model, Params};
pub use optim::sgd_momentum_step;
pub use propagate::{ForwardPass, Mode};
pub use train::{evaluate, train, EpochRecord, Evaluation, History, TrainConfig, TrainError};
