//! End-to-end orchestration: configuration, the training loop, and the
//! render / eval / analyze commands behind the CLI.

mod outputs;
mod run;

pub use outputs::{analyze, eval_dirs, render_split, render_view, EvalRecord, RenderedView};
pub use run::{build_step_graph, train, StepGraph, TrainOutcome};

use crate::error::{AlethError, Result};
use crate::fields::FieldConfig;
use crate::losses::{LossWeights, CONTRAST_ETA, DEGREE_TARGET, LAMBDA_COLOR, LAMBDA_CONTRAST, LAMBDA_DEGREE};
use crate::scene::manifest::Lighting;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Lighting,
    /// Rays per iteration; triplet-aligned (divisible by 3).
    pub batch_rays: usize,
    pub total_iters: u64,
    pub lr0: f64,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub depth: usize,
    pub width: usize,
    pub skip_layer: usize,
    pub l_pos: usize,
    pub l_dir: usize,
    pub conceal_kernel: usize,
    /// Target mean value of the exposure-corrected render (e).
    pub degree_target: f64,
    /// Contrast scale factor (eta); low light uses e * eta, over-exposure
    /// pins e * eta to 0.5.
    pub contrast_eta: f64,
    pub lambda_degree: f64,
    pub lambda_contrast: f64,
    pub lambda_color: f64,
    pub seed: u64,
    pub checkpoint_interval: u64,
    pub log_interval: u64,
}

impl TrainConfig {
    /// Full-scale settings. The source batch size of 4096 is rounded down
    /// to the nearest multiple of three so contrast triplets tile exactly.
    pub fn full(mode: Lighting) -> Self {
        TrainConfig {
            mode,
            batch_rays: 4095,
            total_iters: 62_500,
            lr0: 5e-4,
            n_coarse: 64,
            n_fine: 128,
            depth: 8,
            width: 256,
            skip_layer: 4,
            l_pos: 10,
            l_dir: 4,
            conceal_kernel: 7,
            degree_target: DEGREE_TARGET,
            contrast_eta: CONTRAST_ETA,
            lambda_degree: LAMBDA_DEGREE,
            lambda_contrast: LAMBDA_CONTRAST,
            lambda_color: LAMBDA_COLOR,
            seed: 42,
            checkpoint_interval: 12_500,
            log_interval: 100,
        }
    }

    /// CPU-scale settings used by the bundled synthetic experiments.
    pub fn desk(mode: Lighting) -> Self {
        TrainConfig {
            batch_rays: 576,
            total_iters: 3_000,
            n_coarse: 16,
            n_fine: 16,
            depth: 4,
            width: 48,
            skip_layer: 2,
            checkpoint_interval: 1_500,
            log_interval: 50,
            ..Self::full(mode)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_rays == 0 || self.batch_rays % 3 != 0 {
            return Err(AlethError::InvalidArgument(format!(
                "batch_rays must be a positive multiple of 3, got {}",
                self.batch_rays
            )));
        }
        if self.total_iters == 0 {
            return Err(AlethError::InvalidArgument("total_iters must be > 0".into()));
        }
        if self.lr0 <= 0.0 {
            return Err(AlethError::InvalidArgument("lr0 must be > 0".into()));
        }
        if !(self.degree_target > 0.0 && self.degree_target < 1.0) {
            return Err(AlethError::InvalidArgument(format!(
                "degree target must lie in (0, 1), got {}",
                self.degree_target
            )));
        }
        for (name, v) in [
            ("lambda_degree", self.lambda_degree),
            ("lambda_contrast", self.lambda_contrast),
            ("lambda_color", self.lambda_color),
            ("contrast_eta", self.contrast_eta),
        ] {
            if v < 0.0 {
                return Err(AlethError::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.n_coarse < 2 || self.n_fine < 1 {
            return Err(AlethError::InvalidArgument(
                "need at least 2 coarse and 1 fine samples".into(),
            ));
        }
        if self.depth == 0 || self.width == 0 || self.skip_layer >= self.depth {
            return Err(AlethError::InvalidArgument("invalid network shape".into()));
        }
        if self.checkpoint_interval == 0 || self.log_interval == 0 {
            return Err(AlethError::InvalidArgument("intervals must be > 0".into()));
        }
        Ok(())
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig {
            depth: self.depth,
            width: self.width,
            skip_layer: self.skip_layer,
            l_pos: self.l_pos,
            l_dir: self.l_dir,
            n_coarse: self.n_coarse,
            n_fine: self.n_fine,
            conceal_kernel: self.conceal_kernel,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_degree: self.lambda_degree,
            lambda_contrast: self.lambda_contrast,
            lambda_color: self.lambda_color,
        }
    }

    /// Effective contrast scale: e * eta, pinned to 0.5 in over-exposure.
    pub fn contrast_scale(&self) -> f64 {
        match self.mode {
            Lighting::Overexposure => crate::losses::OVEREXPOSURE_CONTRAST_SCALE,
            _ => self.degree_target * self.contrast_eta,
        }
    }
}

/// Partial configuration overlay loaded from a JSON file; unset fields keep
/// the preset values.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfigPatch {
    pub mode: Option<Lighting>,
    pub batch_rays: Option<usize>,
    pub total_iters: Option<u64>,
    pub lr0: Option<f64>,
    pub n_coarse: Option<usize>,
    pub n_fine: Option<usize>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub skip_layer: Option<usize>,
    pub l_pos: Option<usize>,
    pub l_dir: Option<usize>,
    pub conceal_kernel: Option<usize>,
    pub degree_target: Option<f64>,
    pub contrast_eta: Option<f64>,
    pub lambda_degree: Option<f64>,
    pub lambda_contrast: Option<f64>,
    pub lambda_color: Option<f64>,
    pub seed: Option<u64>,
    pub checkpoint_interval: Option<u64>,
    pub log_interval: Option<u64>,
}

impl TrainConfigPatch {
    pub fn apply(&self, base: TrainConfig) -> TrainConfig {
        let mut cfg = base;
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        overlay!(
            mode, batch_rays, total_iters, lr0, n_coarse, n_fine, depth, width, skip_layer,
            l_pos, l_dir, conceal_kernel, degree_target, contrast_eta, lambda_degree,
            lambda_contrast, lambda_color, seed, checkpoint_interval, log_interval
        );
        cfg
    }
}
