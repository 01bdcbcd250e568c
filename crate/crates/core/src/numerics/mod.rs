//! Dense math: positional encoding, the field MLP with its backward pass,
//! and the optimizer.

mod adam;
mod encoding;
mod mlp;
mod real;

pub use adam::{adam_update_slice, lr_log_anneal, AdamConfig, AdamState};
pub use encoding::{encode_into, pe_encode, EncoderConfig};
pub use mlp::{
    sigmoid, softplus, Dense, DensityActivation, FieldModel, FieldOutput, ForwardCache,
    Gradients, IntensityActivation, MlpConfig, OutputActivations, SPATIAL_DIM,
};
pub use real::Real;
