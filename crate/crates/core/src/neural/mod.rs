//! Trainable transform codes: MLPs, the relaxed Lagrangian with hand-written
//! gradients, and the training loop.

mod loss;
mod mlp;
mod params;
mod sawbridge;
mod train;

pub use loss::{surrogate_loss, surrogate_loss_and_gradient, BatchInput, Gradients, Relaxation, SurrogateTerms};
pub use mlp::{mlp_forward, Dense, MlpGrads, MlpTransform, Tape};
pub use params::{parameter_names, parameters_mut};
pub use sawbridge::sawbridge_loss_and_gradient;
pub use train::{
    init_code, latent_dimension_usage, refit_entropy_model, train, Adam, CodeFamily, DimensionUsage, TracePoint, TrainConfig, TrainOutcome,
    TrainTrace,
};
