pub mod convnet;
pub mod gru;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod seq2seq;

pub use convnet::{ConvNetClassifier, ConvNetConfig, IMAGE_PIXELS, IMAGE_SIDE};
pub use gru::{BoundGru, GruCell};
pub use loss::{entropy_of, entropy_regularized_loss, mean_entropy};
pub use mlp::{MlpClassifier, MlpConfig};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use seq2seq::{attention_weights, AttentionMode, Seq2SeqConfig, Seq2SeqModel};
