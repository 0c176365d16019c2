//! The learned scene representation: density and color MLPs for a coarse and
//! a fine network, the width-7 convolution head producing the local
//! concealing factor, and the per-sample-index global concealing parameters
//! shared by both networks.

use crate::autodiff::{Scalar, Tape, TensorId};
use crate::checkpoint::NamedTensor;
use crate::error::{AlethError, Result};
use crate::fields::encoding::{encode_batch, encoded_dim};
use crate::scene::manifest::Lighting;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldConfig {
    pub depth: usize,
    pub width: usize,
    /// Trunk layer whose input is re-concatenated with the encoded position.
    pub skip_layer: usize,
    pub l_pos: usize,
    pub l_dir: usize,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub conceal_kernel: usize,
}

impl FieldConfig {
    /// Full-scale configuration.
    pub fn full() -> Self {
        FieldConfig {
            depth: 8,
            width: 256,
            skip_layer: 4,
            l_pos: 10,
            l_dir: 4,
            n_coarse: 64,
            n_fine: 128,
            conceal_kernel: 7,
        }
    }

    /// Small configuration for CPU-scale runs.
    pub fn desk() -> Self {
        FieldConfig {
            depth: 4,
            width: 48,
            skip_layer: 2,
            l_pos: 10,
            l_dir: 4,
            n_coarse: 16,
            n_fine: 16,
            conceal_kernel: 7,
        }
    }

    pub fn pos_dim(&self) -> usize {
        encoded_dim(3, self.l_pos)
    }

    pub fn dir_dim(&self) -> usize {
        encoded_dim(3, self.l_dir)
    }

    /// Length of the global concealing vector: one entry per merged sample
    /// index.
    pub fn theta_len(&self) -> usize {
        self.n_coarse + self.n_fine
    }

    pub fn color_hidden(&self) -> usize {
        (self.width / 2).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetKind {
    Coarse,
    Fine,
}

impl NetKind {
    fn prefix(self) -> &'static str {
        match self {
            NetKind::Coarse => "coarse",
            NetKind::Fine => "fine",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamTensor<S: Scalar> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<S>,
}

/// Indices into `FieldModel::params` for one network.
#[derive(Clone, Debug)]
struct NetLayout {
    trunk: Vec<(usize, usize)>,
    sigma: (usize, usize),
    feature: (usize, usize),
    color_hidden: (usize, usize),
    color_out: (usize, usize),
    conceal: (usize, usize),
}

/// Tape ids of the registered parameters, aligned with
/// `FieldModel::params`.
pub struct ModelBinding {
    pub ids: Vec<TensorId>,
}

pub struct MlpOut {
    /// [points, 1], ReLU-activated.
    pub sigma: TensorId,
    /// [points, width] feature vector feeding the color and concealing heads.
    pub hidden: TensorId,
    /// [points, 3], sigmoid-activated.
    pub rgb: TensorId,
}

pub struct FieldModel<S: Scalar> {
    pub cfg: FieldConfig,
    /// Lighting condition the model is trained for; decides which render
    /// branch is concealed.
    pub mode: Lighting,
    pub params: Vec<ParamTensor<S>>,
    coarse: NetLayout,
    fine: NetLayout,
    theta_idx: usize,
}

fn mode_code(mode: Lighting) -> f32 {
    match mode {
        Lighting::Normal => 0.0,
        Lighting::Lowlight => 1.0,
        Lighting::Overexposure => 2.0,
    }
}

fn mode_from_code(code: f32) -> Result<Lighting> {
    match code as i64 {
        0 => Ok(Lighting::Normal),
        1 => Ok(Lighting::Lowlight),
        2 => Ok(Lighting::Overexposure),
        other => Err(AlethError::Checkpoint(format!("unknown mode code {other}"))),
    }
}

impl<S: Scalar> FieldModel<S> {
    /// Fan-in uniform init for the MLPs; the concealing kernel, its bias and
    /// the raw global parameters start at zero so both concealing factors
    /// begin at exactly 0.5 through the sigmoid.
    pub fn init(cfg: FieldConfig, mode: Lighting, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut params = Vec::new();
        let coarse = Self::init_net(&cfg, NetKind::Coarse, &mut params, &mut rng);
        let fine = Self::init_net(&cfg, NetKind::Fine, &mut params, &mut rng);
        let theta_idx = params.len();
        params.push(ParamTensor {
            name: "theta_raw".into(),
            rows: cfg.theta_len(),
            cols: 1,
            values: vec![S::zero(); cfg.theta_len()],
        });
        FieldModel { cfg, mode, params, coarse, fine, theta_idx }
    }

    fn init_net(
        cfg: &FieldConfig,
        kind: NetKind,
        params: &mut Vec<ParamTensor<S>>,
        rng: &mut StdRng,
    ) -> NetLayout {
        let p = kind.prefix();
        let mut linear = |name: String, rows: usize, cols: usize| -> (usize, usize) {
            let bound = 1.0 / (rows as f64).sqrt();
            let w: Vec<S> = (0..rows * cols)
                .map(|_| S::from_f64(rng.gen_range(-bound..bound)))
                .collect();
            let b: Vec<S> = (0..cols).map(|_| S::from_f64(rng.gen_range(-bound..bound))).collect();
            let wi = params.len();
            params.push(ParamTensor { name: format!("{name}.weight"), rows, cols, values: w });
            params.push(ParamTensor { name: format!("{name}.bias"), rows: 1, cols, values: b });
            (wi, wi + 1)
        };

        let mut trunk = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let in_dim = if i == 0 {
                cfg.pos_dim()
            } else if i == cfg.skip_layer {
                cfg.width + cfg.pos_dim()
            } else {
                cfg.width
            };
            trunk.push(linear(format!("{p}.density.layer{i}"), in_dim, cfg.width));
        }
        let sigma = linear(format!("{p}.sigma"), cfg.width, 1);
        let feature = linear(format!("{p}.feature"), cfg.width, cfg.width);
        let color_hidden = linear(
            format!("{p}.color.hidden"),
            cfg.width + cfg.dir_dim(),
            cfg.color_hidden(),
        );
        let color_out = linear(format!("{p}.color.out"), cfg.color_hidden(), 3);

        // zero-initialised concealing head: omega starts at sigmoid(0) = 0.5
        let ki = params.len();
        params.push(ParamTensor {
            name: format!("{p}.conceal.kernel"),
            rows: cfg.conceal_kernel,
            cols: cfg.width,
            values: vec![S::zero(); cfg.conceal_kernel * cfg.width],
        });
        params.push(ParamTensor {
            name: format!("{p}.conceal.bias"),
            rows: 1,
            cols: 1,
            values: vec![S::zero()],
        });

        NetLayout { trunk, sigma, feature, color_hidden, color_out, conceal: (ki, ki + 1) }
    }

    fn layout(&self, kind: NetKind) -> &NetLayout {
        match kind {
            NetKind::Coarse => &self.coarse,
            NetKind::Fine => &self.fine,
        }
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            if p.values.iter().any(|v| !v.is_finite()) {
                return Err(AlethError::NonFinite(format!("parameter '{}'", p.name)));
            }
        }
        Ok(())
    }

    /// Register every parameter as a differentiable leaf on the tape.
    pub fn register(&self, tape: &mut Tape<S>) -> ModelBinding {
        let ids = self
            .params
            .iter()
            .map(|p| tape.param(p.rows, p.cols, p.values.clone()))
            .collect();
        ModelBinding { ids }
    }

    fn apply_linear(
        &self,
        tape: &mut Tape<S>,
        binding: &ModelBinding,
        pair: (usize, usize),
        x: TensorId,
    ) -> TensorId {
        let z = tape.matmul(x, binding.ids[pair.0]);
        tape.add_row_bias(z, binding.ids[pair.1])
    }

    /// Density trunk plus heads for one network. `enc_pos` is
    /// [points, pos_dim], `enc_dir` [points, dir_dim].
    pub fn forward_net(
        &self,
        tape: &mut Tape<S>,
        binding: &ModelBinding,
        kind: NetKind,
        enc_pos: TensorId,
        enc_dir: TensorId,
    ) -> MlpOut {
        let net = self.layout(kind);
        let mut x = enc_pos;
        for (i, pair) in net.trunk.iter().enumerate() {
            if i == self.cfg.skip_layer && i > 0 {
                x = tape.concat_cols(x, enc_pos);
            }
            x = self.apply_linear(tape, binding, *pair, x);
            x = tape.relu(x);
        }
        let sigma_pre = self.apply_linear(tape, binding, net.sigma, x);
        let sigma = tape.relu(sigma_pre);
        let hidden = self.apply_linear(tape, binding, net.feature, x);
        let joint = tape.concat_cols(hidden, enc_dir);
        let ch = self.apply_linear(tape, binding, net.color_hidden, joint);
        let ch = tape.relu(ch);
        let rgb_pre = self.apply_linear(tape, binding, net.color_out, ch);
        let rgb = tape.sigmoid(rgb_pre);
        MlpOut { sigma, hidden, rgb }
    }

    /// Local concealing factor: width-7 convolution over the hidden features
    /// along the per-ray sample axis, sigmoid-activated into (0, 1).
    pub fn forward_omega(
        &self,
        tape: &mut Tape<S>,
        binding: &ModelBinding,
        kind: NetKind,
        hidden: TensorId,
        samples_per_ray: usize,
    ) -> TensorId {
        let net = self.layout(kind);
        let conv = tape.conv1d_segments(
            hidden,
            binding.ids[net.conceal.0],
            binding.ids[net.conceal.1],
            samples_per_ray,
        );
        tape.sigmoid(conv)
    }

    /// Global concealing factors for sample indices 0..samples_per_ray,
    /// tiled across `rays`: result [rays * samples_per_ray, 1].
    pub fn forward_theta(
        &self,
        tape: &mut Tape<S>,
        binding: &ModelBinding,
        samples_per_ray: usize,
        rays: usize,
    ) -> TensorId {
        assert!(
            samples_per_ray <= self.cfg.theta_len(),
            "sample count {samples_per_ray} exceeds configured maximum {}",
            self.cfg.theta_len()
        );
        let idx: Vec<usize> = (0..samples_per_ray).collect();
        let raw = tape.gather_rows(binding.ids[self.theta_idx], &idx);
        let theta = tape.sigmoid(raw);
        tape.tile_segments(theta, rays)
    }

    // ----- standalone evaluation (tests, analysis, spec-level ops) -------

    /// Encode positions and run the density trunk: returns sigma per point
    /// and the hidden features (row-major [points, width]).
    pub fn eval_density(&self, kind: NetKind, points: &[[f64; 3]]) -> Result<(Vec<S>, Vec<S>)> {
        self.check_finite()?;
        let flat: Vec<S> = points
            .iter()
            .flat_map(|p| p.iter().map(|&v| S::from_f64(v)))
            .collect();
        let enc = encode_batch(&flat, 3, self.cfg.l_pos);
        let mut tape = Tape::new();
        let binding = self.register(&mut tape);
        let enc_pos = tape.constant(points.len(), self.cfg.pos_dim(), enc);
        // direction input unused by the density trunk; zero stand-in
        let enc_dir = tape.constant(points.len(), self.cfg.dir_dim(), vec![S::zero(); points.len() * self.cfg.dir_dim()]);
        let out = self.forward_net(&mut tape, &binding, kind, enc_pos, enc_dir);
        Ok((tape.values(out.sigma).to_vec(), tape.values(out.hidden).to_vec()))
    }

    /// Color head on externally supplied hidden features and view directions.
    pub fn eval_color(&self, kind: NetKind, hidden: &[S], dirs: &[[f64; 3]]) -> Result<Vec<[S; 3]>> {
        let w = self.cfg.width;
        if hidden.len() != dirs.len() * w {
            return Err(AlethError::ShapeMismatch(format!(
                "{} hidden values for {} directions at width {w}",
                hidden.len(),
                dirs.len()
            )));
        }
        let flat: Vec<S> = dirs
            .iter()
            .flat_map(|d| d.iter().map(|&v| S::from_f64(v)))
            .collect();
        let enc = encode_batch(&flat, 3, self.cfg.l_dir);
        let mut tape = Tape::new();
        let binding = self.register(&mut tape);
        let h = tape.constant(dirs.len(), w, hidden.to_vec());
        let d = tape.constant(dirs.len(), self.cfg.dir_dim(), enc);
        let net = self.layout(kind);
        let joint = tape.concat_cols(h, d);
        let ch = self.apply_linear(&mut tape, &binding, net.color_hidden, joint);
        let ch = tape.relu(ch);
        let rgb_pre = self.apply_linear(&mut tape, &binding, net.color_out, ch);
        let rgb = tape.sigmoid(rgb_pre);
        let vals = tape.values(rgb);
        Ok(vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    /// Local concealing over one ray's ordered hidden features
    /// (row-major [samples, width]).
    pub fn eval_local_concealing(&self, kind: NetKind, hidden_seq: &[S]) -> Result<Vec<S>> {
        let w = self.cfg.width;
        if hidden_seq.is_empty() || hidden_seq.len() % w != 0 {
            return Err(AlethError::ShapeMismatch(format!(
                "hidden sequence of {} values is not a multiple of width {w}",
                hidden_seq.len()
            )));
        }
        let samples = hidden_seq.len() / w;
        let mut tape = Tape::new();
        let binding = self.register(&mut tape);
        let h = tape.constant(samples, w, hidden_seq.to_vec());
        let omega = self.forward_omega(&mut tape, &binding, kind, h, samples);
        Ok(tape.values(omega).to_vec())
    }

    /// Global concealing factor for one sample index.
    pub fn eval_global_concealing(&self, i: usize) -> Result<S> {
        let theta = &self.params[self.theta_idx];
        if i >= theta.values.len() {
            return Err(AlethError::InvalidArgument(format!(
                "sample index {i} out of range for {} global concealing entries",
                theta.values.len()
            )));
        }
        let raw = theta.values[i];
        Ok(S::one() / (S::one() + (-raw).exp()))
    }

    // ----- checkpoint bridging -------------------------------------------

    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        let cfg = &self.cfg;
        let mut out = Vec::with_capacity(self.params.len() + 1);
        out.push(NamedTensor::new(
            "meta.arch",
            vec![10],
            vec![
                cfg.depth as f32,
                cfg.width as f32,
                cfg.skip_layer as f32,
                cfg.l_pos as f32,
                cfg.l_dir as f32,
                cfg.n_coarse as f32,
                cfg.n_fine as f32,
                cfg.theta_len() as f32,
                cfg.conceal_kernel as f32,
                mode_code(self.mode),
            ],
        ));
        for p in &self.params {
            out.push(NamedTensor::new(
                p.name.clone(),
                vec![p.rows, p.cols],
                p.values.iter().map(|v| v.into_f64() as f32).collect(),
            ));
        }
        out
    }

    pub fn from_named_tensors(tensors: &[NamedTensor]) -> Result<FieldModel<S>> {
        let meta = tensors
            .iter()
            .find(|t| t.name == "meta.arch")
            .ok_or_else(|| AlethError::Checkpoint("missing meta.arch entry".into()))?;
        if meta.data.len() != 10 {
            return Err(AlethError::Checkpoint("meta.arch has wrong length".into()));
        }
        let cfg = FieldConfig {
            depth: meta.data[0] as usize,
            width: meta.data[1] as usize,
            skip_layer: meta.data[2] as usize,
            l_pos: meta.data[3] as usize,
            l_dir: meta.data[4] as usize,
            n_coarse: meta.data[5] as usize,
            n_fine: meta.data[6] as usize,
            conceal_kernel: meta.data[8] as usize,
        };
        if cfg.theta_len() != meta.data[7] as usize {
            return Err(AlethError::Checkpoint("inconsistent sample counts in meta.arch".into()));
        }
        let mode = mode_from_code(meta.data[9])?;
        let mut model = FieldModel::init(cfg, mode, 0);
        for p in model.params.iter_mut() {
            let t = tensors
                .iter()
                .find(|t| t.name == p.name)
                .ok_or_else(|| AlethError::Checkpoint(format!("missing tensor '{}'", p.name)))?;
            if t.dims != vec![p.rows, p.cols] {
                return Err(AlethError::Checkpoint(format!(
                    "tensor '{}' has dims {:?}, expected [{}, {}]",
                    p.name, t.dims, p.rows, p.cols
                )));
            }
            p.values = t.data.iter().map(|&v| S::from_f64(v as f64)).collect();
        }
        Ok(model)
    }
}
