//! The bimodal network: multi-scale convolutions per modality, statistical
//! pooling, audio-context attention over text positions, and the fused
//! classifier head.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use config::ModelConfig;
pub use forward::{
    attention_forward, check_bundle, fuse_and_classify, model_forward, mscnn_forward,
    predict_probs, spu_forward, Attention, Classified, ForwardOutput, FusionInputs, ParamVars,
};
pub use params::{init_parameters, ConvBank, ModelParameters};
