//! The learned scene representation.

pub mod encoding;
pub mod model;

pub use encoding::{encode_batch, encoded_dim, positional_encoding};
pub use model::{FieldConfig, FieldModel, MlpOut, ModelBinding, NetKind, ParamTensor};
