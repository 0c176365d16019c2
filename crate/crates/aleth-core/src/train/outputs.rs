//! Rendering, evaluation and analysis commands on trained models.

use super::run::{level_render, scheme_for};
use crate::autodiff::Tape;
use crate::error::{AlethError, Result};
use crate::fields::{FieldModel, NetKind};
use crate::geom::Pose;
use crate::metrics::{concealing_density_correlation, psnr, save_heatmap, ssim, GridSpec};
use crate::render::ConcealOverride;
use crate::sampling::{generate_rays, hierarchical_samples, merge_sorted, stratified_samples};
use crate::scene::image::{save_depth_png, ImageBuffer};
use crate::scene::manifest::{Intrinsics, SceneManifest, Split};
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Seed for the (deterministic) importance draws used at render time.
const RENDER_SEED: u64 = 0x414c_4e46; // "ALNF"

/// Rows rendered per tape to bound peak memory.
const ROW_CHUNK: usize = 8;

pub struct RenderedView {
    pub adverse: ImageBuffer,
    pub normal: ImageBuffer,
    pub depth: Vec<f64>,
}

/// Render one full view with the fine network (coarse pass drives the
/// importance sampling). Deterministic: midpoint coarse depths and a fixed
/// seed for the importance draws.
pub fn render_view(
    model: &FieldModel<f32>,
    intrinsics: &Intrinsics,
    pose: &Pose,
    near: f64,
    far: f64,
    conceal_override: ConcealOverride,
) -> Result<RenderedView> {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let nc = model.cfg.n_coarse;
    let nm = model.cfg.n_coarse + model.cfg.n_fine;
    let scheme = scheme_for(model.mode);
    let mut rng = StdRng::seed_from_u64(RENDER_SEED);

    let mut adverse = ImageBuffer::new(w, h);
    let mut normal = ImageBuffer::new(w, h);
    let mut depth = vec![0.0f64; w * h];

    let coarse_one = stratified_samples(near, far, nc, false, &mut rng)?;
    for row0 in (0..h).step_by(ROW_CHUNK) {
        let rows = ROW_CHUNK.min(h - row0);
        let pixels: Vec<(f64, f64)> = (0..rows)
            .flat_map(|dy| (0..w).map(move |x| (x as f64, (row0 + dy) as f64)))
            .collect();
        let batch = generate_rays(intrinsics, pose, &pixels)?;
        let r = batch.len();

        let mut coarse_depths = Vec::with_capacity(r * nc);
        for _ in 0..r {
            coarse_depths.extend_from_slice(&coarse_one);
        }

        let mut tape: Tape<f32> = Tape::new();
        let binding = model.register(&mut tape);
        let coarse = level_render(
            &mut tape,
            model,
            &binding,
            NetKind::Coarse,
            &batch.origins,
            &batch.dirs,
            &coarse_depths,
            nc,
            scheme,
            conceal_override,
        );
        let w_vals = tape.values(coarse.weights).to_vec();
        let mut merged = Vec::with_capacity(r * nm);
        for ray in 0..r {
            let lo = ray * nc;
            let cd = &coarse_depths[lo..lo + nc];
            let wv: Vec<f64> = (lo..lo + nc).map(|i| (w_vals[i] as f64).max(0.0)).collect();
            let fine = hierarchical_samples(cd, &wv, model.cfg.n_fine, &mut rng)?;
            merged.extend(merge_sorted(cd, &fine));
        }
        let fine = level_render(
            &mut tape,
            model,
            &binding,
            NetKind::Fine,
            &batch.origins,
            &batch.dirs,
            &merged,
            nm,
            scheme,
            conceal_override,
        );

        let adv = tape.values(fine.rgb_adverse);
        let nor = tape.values(fine.rgb_normal);
        let dep = tape.values(fine.depth);
        for (i, &(x, y)) in pixels.iter().enumerate() {
            let (x, y) = (x as usize, y as usize);
            adverse.set_pixel(x, y, [adv[i * 3], adv[i * 3 + 1], adv[i * 3 + 2]]);
            normal.set_pixel(x, y, [nor[i * 3], nor[i * 3 + 1], nor[i * 3 + 2]]);
            depth[y * w + x] = dep[i] as f64;
        }
    }
    Ok(RenderedView { adverse, normal, depth })
}

/// Render every frame of a split; images are named after the manifest's
/// adverse/normal references so rendered directories can be compared
/// against scene directories by filename.
pub fn render_split(
    model: &FieldModel<f32>,
    manifest: &SceneManifest,
    split: Split,
    conceal_override: ConcealOverride,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut rendered_any = false;
    for (idx, frame) in manifest.frames_in(split) {
        rendered_any = true;
        let pose = manifest.pose(frame)?;
        let view = render_view(
            model,
            &manifest.intrinsics,
            &pose,
            manifest.near,
            manifest.far,
            conceal_override,
        )?;
        let adverse_path = out_dir.join(&frame.image);
        let normal_path = out_dir.join(&frame.normal_image);
        view.adverse.save_png(&adverse_path)?;
        if adverse_path != normal_path {
            view.normal.save_png(&normal_path)?;
        }
        let depth_path = out_dir.join(format!("view_{idx:03}_depth.png"));
        save_depth_png(
            &depth_path,
            &view.depth,
            manifest.intrinsics.width,
            manifest.intrinsics.height,
            manifest.near,
            manifest.far,
        )?;
        written.push(adverse_path);
        written.push(normal_path);
        written.push(depth_path);
    }
    if !rendered_any {
        return Err(AlethError::InvalidArgument(format!("no frames in split {split:?}")));
    }
    written.sort();
    written.dedup();
    Ok(written)
}

#[derive(Clone, Debug)]
pub struct EvalRecord {
    pub view: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Compare same-named PNG files from two directories and write a CSV of
/// per-view PSNR/SSIM plus a mean summary row.
pub fn eval_dirs(pred_dir: &Path, gt_dir: &Path, out_csv: &Path) -> Result<Vec<EvalRecord>> {
    let mut names: Vec<String> = std::fs::read_dir(pred_dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".png") && gt_dir.join(n).exists())
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(AlethError::InvalidArgument(format!(
            "no matching .png files between {} and {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    let mut records = Vec::with_capacity(names.len());
    for name in &names {
        let pred = ImageBuffer::load_png(&pred_dir.join(name))?;
        let gt = ImageBuffer::load_png(&gt_dir.join(name))?;
        records.push(EvalRecord {
            view: name.clone(),
            psnr: psnr(&pred, &gt)?,
            ssim: ssim(&pred, &gt)?,
        });
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(out_csv)?);
    writeln!(file, "view,psnr,ssim")?;
    for r in &records {
        writeln!(file, "{},{:.6},{:.6}", r.view, r.psnr, r.ssim)?;
    }
    let mean_psnr = records.iter().map(|r| r.psnr).sum::<f64>() / records.len() as f64;
    let mean_ssim = records.iter().map(|r| r.ssim).sum::<f64>() / records.len() as f64;
    writeln!(file, "mean,{:.6},{:.6}", mean_psnr, mean_ssim)?;
    file.flush()?;
    Ok(records)
}

/// Project density and concealing onto the xz and yz planes, write heatmaps
/// and a text report of the Pearson coefficients.
pub fn analyze(
    model: &FieldModel<f32>,
    grid: GridSpec,
    out_dir: &Path,
) -> Result<[crate::metrics::CorrelationReport; 2]> {
    std::fs::create_dir_all(out_dir)?;
    let reports = concealing_density_correlation(model, grid)?;
    let mut text = String::new();
    for r in &reports {
        save_heatmap(&out_dir.join(format!("density_{}.png", r.plane)), &r.density_map, r.res)?;
        save_heatmap(&out_dir.join(format!("conceal_{}.png", r.plane)), &r.conceal_map, r.res)?;
        text.push_str(&format!("plane {}: pearson {:.6}\n", r.plane, r.pearson));
    }
    std::fs::write(out_dir.join("report.txt"), text)?;
    Ok(reports)
}
