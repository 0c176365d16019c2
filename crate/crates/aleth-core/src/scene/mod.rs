//! Scene ingestion, image I/O, synthetic scene generation and degradation.

pub mod image;
pub mod manifest;
pub mod srgb;
pub mod synth;
