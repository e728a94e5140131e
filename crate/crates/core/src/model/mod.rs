//! Architectures: the prosody teacher, the acoustic student, the plain
//! attention-pooling baseline and the local-concat LSTM baseline, plus
//! checkpoint serialization.

mod align;
mod checkpoint;
mod config;
mod net;
mod sap;

pub use align::{align_attention, align_frames};
pub use checkpoint::{CheckpointMeta, ModelCheckpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{
    Architecture, EncoderConfig, EncoderKind, FeatureMask, KeySource, ModelConfig, ModelDims, SapConfig,
};
pub(crate) use net::argmax;
pub use net::{build_model, expected_shapes, standardize_mel, Features, ForwardOut, Model, ParamMode};
pub use sap::sap_forward;
