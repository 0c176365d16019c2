//! Volume-rendering engine that trains a radiance field jointly with local and
//! global concealing fields from adverse-light multi-view images, then renders
//! normal-light novel views by removing (low light) or adding (over-exposure)
//! the concealment at test time.
//!
//! The crate is organised around the training pipeline:
//!
//! - [`autodiff`]: reverse-mode tape over dense 2-D tensors, Adam, LR schedule
//! - [`scene`]: manifest + image I/O, synthetic scene generation, degradation
//! - [`sampling`]: pinhole rays, stratified and importance depth sampling
//! - [`fields`]: positional encoding and the learned field model
//! - [`render`]: transmittance, volume rendering, dual adverse/normal renders
//! - [`losses`]: inverse-tone MSE plus the unsupervised lightness losses
//! - [`metrics`]: PSNR / SSIM and the concealing-vs-density correlation
//! - [`train`]: configuration, training loop, render/eval/analyze commands

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod fields;
pub mod geom;
pub mod losses;
pub mod metrics;
pub mod render;
pub mod sampling;
pub mod scene;
pub mod train;

pub use error::{AlethError, Result};
