//! Dense feed-forward regressor trained with manual backpropagation on the
//! MAE loss and Adam updates, with per-layer freezing for fine-tuning.

mod adam;
mod backprop;
mod mlp;
mod model_file;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backprop::{backward, Gradients, LayerGrad};
pub use mlp::{freeze_layers, init_mlp, mae_loss, Activation, Dense, Mlp, DEFAULT_WIDTHS};
pub use model_file::{
    fingerprint, load_model, model_from_json, model_to_json, save_model, ModelBundle,
    MODEL_FORMAT_VERSION,
};
pub use train::{train, LossHistory, TrainConfig};
