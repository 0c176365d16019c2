use aleth_core::scene::synth::*;
use aleth_core::scene::manifest::Lighting;
use aleth_core::metrics;

fn main() {
    let dir = std::env::temp_dir().join("aleth_probe_scene");
    std::fs::create_dir_all(&dir).unwrap();
    for preset in [Preset::Spheres, Preset::Boxes] {
        let m = synth_scene(preset, 10, 64, 64, 7, None, &dir).unwrap();
        let mut means = vec![];
        for f in &m.frames {
            let img = aleth_core::scene::image::ImageBuffer::load_png(&m.image_path(f)).unwrap();
            means.push(img.mean_value());
        }
        let avg: f64 = means.iter().sum::<f64>() / means.len() as f64;
        println!("{preset:?}: per-view means {:?}", means.iter().map(|m| (m*1000.0).round()/1000.0).collect::<Vec<_>>());
        println!("{preset:?}: average mean={avg:.4}");
        // degraded stats
        let img0 = aleth_core::scene::image::ImageBuffer::load_png(&m.image_path(&m.frames[0])).unwrap();
        let dark = degrade(&img0, Lighting::Lowlight, 0.2).unwrap();
        let bright = degrade(&img0, Lighting::Overexposure, 2.5).unwrap();
        println!("  dark mean={:.4} bright mean={:.4}", dark.mean_value(), bright.mean_value());
        let _ = metrics::MAX_SENTINEL_UNUSED;
    }
}
