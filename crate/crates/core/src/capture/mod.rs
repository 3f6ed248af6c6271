//! Toy pretrained networks with LoRA attachment points, activation capture,
//! and the on-disk tensor container.

mod dump;
mod model;

pub use dump::{
    decode, decode_dump, encode, encode_dump, read_dump, read_weights, write_dump, write_weights,
    Entry, ACTIVATION_MAGIC, FORMAT_VERSION, WEIGHT_MAGIC,
};
pub use model::{
    build_toy_model, gaussian, ActivationBatch, Architecture, AttachmentPoint, Nonlinearity,
    TaskData, ToyModel, ToyModelConfig,
};
