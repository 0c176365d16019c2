use aleth_core::scene::synth::*;
use aleth_core::scene::manifest::{Lighting, Split, load_manifest};
use aleth_core::train::{train, TrainConfig, render_split, eval_dirs};
use aleth_core::render::ConcealOverride;
use aleth_core::fields::FieldModel;
use aleth_core::checkpoint::load_checkpoint;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let dir = std::env::temp_dir().join("aleth_probe_train");
    let _ = std::fs::remove_dir_all(&dir);
    let scene_dir = dir.join("scene");
    println!("synthesizing scene...");
    let t0 = Instant::now();
    synth_scene(Preset::Spheres, 10, 64, 64, 7, None, &scene_dir).unwrap();
    println!("synth took {:.1?}", t0.elapsed());
    let manifest = load_manifest(&scene_dir.join("scene.json")).unwrap();

    let mut cfg = TrainConfig::desk(Lighting::Normal);
    cfg.total_iters = iters;
    cfg.checkpoint_interval = iters + 1;
    let t0 = Instant::now();
    let out = train(&manifest, &cfg, &dir.join("run")).unwrap();
    let el = t0.elapsed();
    println!("{} iters took {:.1?} ({:.0} ms/iter), final total={:.5}", iters, el, el.as_secs_f64()*1000.0/iters as f64, out.final_report.total);

    let tensors = load_checkpoint(&out.checkpoint_path).unwrap();
    let model: FieldModel<f32> = FieldModel::from_named_tensors(&tensors).unwrap();
    let t0 = Instant::now();
    render_split(&model, &manifest, Split::Test, ConcealOverride::None, &dir.join("renders")).unwrap();
    println!("render test split took {:.1?}", t0.elapsed());
    let recs = eval_dirs(&dir.join("renders"), &scene_dir, &dir.join("eval.csv")).unwrap();
    for r in &recs { println!("{}: psnr={:.2} ssim={:.4}", r.view, r.psnr, r.ssim); }
}
