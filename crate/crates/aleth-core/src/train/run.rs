//! The training loop and the per-iteration computation graph it shares with
//! the gradient tests.

use super::TrainConfig;
use crate::autodiff::{adam_step, cosine_lr, AdamEntry, AdamState, Scalar, Tape, TensorId};
use crate::checkpoint::save_checkpoint;
use crate::error::{AlethError, Result};
use crate::fields::{encode_batch, FieldModel, ModelBinding, NetKind};
use crate::geom::{Pose, Vec3};
use crate::losses::{
    color_constancy_on_tape, contrast_loss_on_tape, degree_loss_on_tape, it_mse_on_tape,
    total_loss_on_tape, LossReport,
};
use crate::render::{render_batch_on_tape, ConcealOverride, RenderScheme};
use crate::sampling::{
    generate_rays, hierarchical_samples, merge_sorted, sample_deltas, stratified_samples, RayBatch,
};
use crate::scene::image::ImageBuffer;
use crate::scene::manifest::{Lighting, SceneManifest, Split};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::io::Write;
use std::path::{Path, PathBuf};

pub(crate) fn scheme_for(mode: Lighting) -> RenderScheme {
    match mode {
        Lighting::Normal => RenderScheme::Normal,
        Lighting::Lowlight => RenderScheme::Lowlight,
        Lighting::Overexposure => RenderScheme::Overexposure,
    }
}

/// Flatten per-ray sample positions o + t d and encode them together with
/// the per-sample view directions.
pub(crate) fn encode_samples<S: Scalar>(
    tape: &mut Tape<S>,
    model: &FieldModel<S>,
    origins: &[Vec3],
    dirs: &[Vec3],
    depths: &[f64],
    samples_per_ray: usize,
) -> (TensorId, TensorId) {
    let rays = origins.len();
    let p = rays * samples_per_ray;
    debug_assert_eq!(depths.len(), p);
    let mut pos = Vec::with_capacity(p * 3);
    let mut dir = Vec::with_capacity(p * 3);
    for r in 0..rays {
        let (o, d) = (origins[r], dirs[r]);
        for s in 0..samples_per_ray {
            let t = depths[r * samples_per_ray + s];
            pos.push(S::from_f64(o.x + d.x * t));
            pos.push(S::from_f64(o.y + d.y * t));
            pos.push(S::from_f64(o.z + d.z * t));
            dir.push(S::from_f64(d.x));
            dir.push(S::from_f64(d.y));
            dir.push(S::from_f64(d.z));
        }
    }
    let enc_pos = encode_batch(&pos, 3, model.cfg.l_pos);
    let enc_dir = encode_batch(&dir, 3, model.cfg.l_dir);
    let pos_id = tape.constant(p, model.cfg.pos_dim(), enc_pos);
    let dir_id = tape.constant(p, model.cfg.dir_dim(), enc_dir);
    (pos_id, dir_id)
}

/// Per-sample depth spacings for a flattened batch.
pub(crate) fn batch_deltas(depths: &[f64], samples_per_ray: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(depths.len());
    for ray in depths.chunks_exact(samples_per_ray) {
        out.extend(sample_deltas(ray));
    }
    out
}

/// One network level rendered over a flattened sample batch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn level_render<S: Scalar>(
    tape: &mut Tape<S>,
    model: &FieldModel<S>,
    binding: &ModelBinding,
    kind: NetKind,
    origins: &[Vec3],
    dirs: &[Vec3],
    depths: &[f64],
    samples_per_ray: usize,
    scheme: RenderScheme,
    conceal_override: ConcealOverride,
) -> crate::render::BatchRender {
    let rays = origins.len();
    let (enc_pos, enc_dir) = encode_samples(tape, model, origins, dirs, depths, samples_per_ray);
    let out = model.forward_net(tape, binding, kind, enc_pos, enc_dir);
    let needs_conceal =
        !(matches!(scheme, RenderScheme::Normal) && matches!(conceal_override, ConcealOverride::None))
            && !matches!(conceal_override, ConcealOverride::ForceOff);
    let (omega, theta) = if needs_conceal {
        let omega = model.forward_omega(tape, binding, kind, out.hidden, samples_per_ray);
        let theta = model.forward_theta(tape, binding, samples_per_ray, rays);
        (Some(omega), Some(theta))
    } else {
        (None, None)
    };
    let tvals: Vec<S> = depths.iter().map(|&t| S::from_f64(t)).collect();
    let deltas: Vec<S> = batch_deltas(depths, samples_per_ray)
        .into_iter()
        .map(S::from_f64)
        .collect();
    render_batch_on_tape(
        tape,
        out.sigma,
        out.rgb,
        omega,
        theta,
        &tvals,
        &deltas,
        samples_per_ray,
        scheme,
        conceal_override,
    )
}

/// Products of one training-step graph.
pub struct StepGraph {
    pub total: TensorId,
    pub report: LossReport,
    /// Merged fine depths actually used, flattened [rays * (nc + nf)].
    pub fine_depths: Vec<f64>,
}

/// Build the full per-iteration graph: coarse render, importance-sampled
/// fine render, and the training losses on both levels (regression on the
/// adverse branch, lightness losses on the exposure-corrected branch).
///
/// `fine_depths`, when given, bypasses the weight-driven resampling; the
/// gradient tests use this to hold sample positions fixed while parameters
/// are perturbed (resampling is not differentiated).
#[allow(clippy::too_many_arguments)]
pub fn build_step_graph<S: Scalar>(
    tape: &mut Tape<S>,
    model: &FieldModel<S>,
    binding: &ModelBinding,
    rays: &RayBatch,
    gt_rgb: &[S],
    coarse_depths: &[f64],
    fine_depths: Option<&[f64]>,
    cfg: &TrainConfig,
    rng: &mut StdRng,
) -> Result<StepGraph> {
    let r = rays.len();
    let nc = cfg.n_coarse;
    let nm = cfg.n_coarse + cfg.n_fine;
    if gt_rgb.len() != r * 3 {
        return Err(AlethError::ShapeMismatch(format!(
            "{} ground-truth values for {r} rays",
            gt_rgb.len()
        )));
    }
    if coarse_depths.len() != r * nc {
        return Err(AlethError::ShapeMismatch(format!(
            "{} coarse depths for {r} rays of {nc}",
            coarse_depths.len()
        )));
    }
    let scheme = scheme_for(cfg.mode);
    let weights = cfg.loss_weights();

    let coarse = level_render(
        tape,
        model,
        binding,
        NetKind::Coarse,
        &rays.origins,
        &rays.dirs,
        coarse_depths,
        nc,
        scheme,
        ConcealOverride::None,
    );

    let merged: Vec<f64> = match fine_depths {
        Some(d) => {
            if d.len() != r * nm {
                return Err(AlethError::ShapeMismatch(format!(
                    "{} fine depths for {r} rays of {nm}",
                    d.len()
                )));
            }
            d.to_vec()
        }
        None => {
            let w_vals = tape.values(coarse.weights);
            let mut merged = Vec::with_capacity(r * nm);
            for ray in 0..r {
                let lo = ray * nc;
                let cd = &coarse_depths[lo..lo + nc];
                let wv: Vec<f64> = (lo..lo + nc).map(|i| w_vals[i].into_f64().max(0.0)).collect();
                let fine = hierarchical_samples(cd, &wv, cfg.n_fine, rng)?;
                merged.extend(merge_sorted(cd, &fine));
            }
            merged
        }
    };

    let fine = level_render(
        tape,
        model,
        binding,
        NetKind::Fine,
        &rays.origins,
        &rays.dirs,
        &merged,
        nm,
        scheme,
        ConcealOverride::None,
    );

    let gt = tape.constant(r, 3, gt_rgb.to_vec());
    let mut it = it_mse_on_tape(tape, coarse.rgb_adverse, gt);
    let it_f = it_mse_on_tape(tape, fine.rgb_adverse, gt);
    it = tape.add(it, it_f);

    let (degree, contrast, cc) = if cfg.mode == Lighting::Normal {
        let zero = tape.scalar_constant(S::zero());
        (zero, zero, zero)
    } else {
        let scale = cfg.contrast_scale();
        let e = cfg.degree_target;
        let mut de = degree_loss_on_tape(tape, coarse.rgb_normal, e);
        let de_f = degree_loss_on_tape(tape, fine.rgb_normal, e);
        de = tape.add(de, de_f);
        let mut co = contrast_loss_on_tape(tape, coarse.rgb_normal, gt, scale);
        let co_f = contrast_loss_on_tape(tape, fine.rgb_normal, gt, scale);
        co = tape.add(co, co_f);
        let mut cc = color_constancy_on_tape(tape, coarse.rgb_normal);
        let cc_f = color_constancy_on_tape(tape, fine.rgb_normal);
        cc = tape.add(cc, cc_f);
        (de, co, cc)
    };

    let total = total_loss_on_tape(tape, it, degree, contrast, cc, weights);
    let report = LossReport::new(
        tape.scalar(it).into_f64(),
        tape.scalar(degree).into_f64(),
        tape.scalar(contrast).into_f64(),
        tape.scalar(cc).into_f64(),
        weights,
    )?;
    Ok(StepGraph { total, report, fine_depths: merged })
}

struct LoadedFrame {
    pose: Pose,
    image: ImageBuffer,
}

fn sample_triplet_batch(
    manifest: &SceneManifest,
    frames: &[LoadedFrame],
    batch_rays: usize,
    rng: &mut StdRng,
) -> Result<(RayBatch, Vec<f32>)> {
    let view = rng.gen_range(0..frames.len());
    let frame = &frames[view];
    let (w, h) = (manifest.intrinsics.width, manifest.intrinsics.height);
    let triplets = batch_rays / 3;
    let mut pixels = Vec::with_capacity(batch_rays);
    for _ in 0..triplets {
        let y = rng.gen_range(0..h);
        let xc = rng.gen_range(1..w - 1);
        for dx in [-1i64, 0, 1] {
            pixels.push(((xc as i64 + dx) as f64, y as f64));
        }
    }
    let mut batch = generate_rays(&manifest.intrinsics, &frame.pose, &pixels)?;
    for (i, g) in batch.groups.iter_mut().enumerate() {
        *g = i / 3;
    }
    let mut gt = Vec::with_capacity(batch_rays * 3);
    for &(x, y) in &pixels {
        let px = frame.image.pixel(x as usize, y as usize);
        gt.extend_from_slice(&px);
    }
    Ok((batch, gt))
}

pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    pub final_report: LossReport,
    pub iterations: u64,
}

/// Train a field model on the manifest's training split.
///
/// Writes `loss_log.csv` (one row per iteration), periodic checkpoints, a
/// validation render per checkpoint interval, and the final `checkpoint.alnf`
/// into `out_dir`.
pub fn train(manifest: &SceneManifest, cfg: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.mode != Lighting::Normal && manifest.lighting != cfg.mode {
        return Err(AlethError::Contract(format!(
            "config mode {} does not match manifest lighting {}",
            cfg.mode, manifest.lighting
        )));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut frames = Vec::new();
    for (_, frame) in manifest.frames_in(Split::Train) {
        frames.push(LoadedFrame {
            pose: manifest.pose(frame)?,
            image: ImageBuffer::load_png(&manifest.image_path(frame))?,
        });
    }
    if frames.is_empty() {
        return Err(AlethError::Manifest("manifest has no training frames".into()));
    }
    let val_frame = manifest.frames_in(Split::Val).next().map(|(_, f)| f.clone());

    let mut model: FieldModel<f32> = FieldModel::init(cfg.field_config(), cfg.mode, cfg.seed);
    let mut adam: AdamState<f32> = AdamState::new();
    let mut rng = StdRng::seed_from_u64(cfg.seed);

    let log_path = out_dir.join("loss_log.csv");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    writeln!(log, "iter,lr,it_mse,degree,contrast,cc,total")?;

    let mut final_report = None;
    for iter in 0..cfg.total_iters {
        let lr = cosine_lr(iter, cfg.total_iters, cfg.lr0)?;
        let (batch, gt) = sample_triplet_batch(manifest, &frames, cfg.batch_rays, &mut rng)?;
        let coarse_depths = {
            let mut d = Vec::with_capacity(batch.len() * cfg.n_coarse);
            for _ in 0..batch.len() {
                d.extend(stratified_samples(manifest.near, manifest.far, cfg.n_coarse, true, &mut rng)?);
            }
            d
        };

        let mut tape: Tape<f32> = Tape::new();
        let binding = model.register(&mut tape);
        let step = build_step_graph(
            &mut tape,
            &model,
            &binding,
            &batch,
            &gt,
            &coarse_depths,
            None,
            cfg,
            &mut rng,
        )
        .map_err(|e| AlethError::NonFinite(format!("aborting at iteration {iter}: {e}")))?;
        if !step.report.total.is_finite() {
            return Err(AlethError::NonFinite(format!(
                "aborting at iteration {iter}: loss is {}",
                step.report.total
            )));
        }
        tape.backward(step.total)?;

        let grads: Vec<Vec<f32>> = binding.ids.iter().map(|&id| tape.grad_or_zeros(id)).collect();
        {
            let mut entries: Vec<AdamEntry<'_, f32>> = model
                .params
                .iter_mut()
                .zip(grads.iter())
                .map(|(p, g)| AdamEntry { name: p.name.as_str(), values: &mut p.values, grad: g })
                .collect();
            adam_step(&mut adam, lr as f32, &mut entries)
                .map_err(|e| AlethError::NonFinite(format!("aborting at iteration {iter}: {e}")))?;
        }

        let r = &step.report;
        writeln!(
            log,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            iter, lr, r.it_mse, r.degree, r.contrast, r.color_constancy, r.total
        )?;
        if (iter + 1) % cfg.log_interval == 0 {
            log.flush()?;
        }

        if (iter + 1) % cfg.checkpoint_interval == 0 && iter + 1 < cfg.total_iters {
            let path = out_dir.join(format!("checkpoint_{:06}.alnf", iter + 1));
            save_checkpoint(&path, &model.to_named_tensors())?;
            if let Some(frame) = &val_frame {
                let pose = manifest.pose(frame)?;
                let view = super::render_view(
                    &model,
                    &manifest.intrinsics,
                    &pose,
                    manifest.near,
                    manifest.far,
                    ConcealOverride::None,
                )?;
                view.normal.save_png(&out_dir.join(format!("val_{:06}.png", iter + 1)))?;
            }
        }
        final_report = Some(*r);
    }
    log.flush()?;

    let checkpoint_path = out_dir.join("checkpoint.alnf");
    save_checkpoint(&checkpoint_path, &model.to_named_tensors())?;
    Ok(TrainOutcome {
        checkpoint_path,
        log_path,
        final_report: final_report.expect("at least one iteration ran"),
        iterations: cfg.total_iters,
    })
}
