//! Synthetic oracle scenes and photometric degradation.
//!
//! Scenes are smooth analytic density/emission fields rendered at a high
//! sample count with the same volume renderer the learned model uses, so
//! every ground-truth pixel has an independent closed-form origin. The
//! presets keep the frame mostly covered, which puts the normal-light mean
//! pixel level near the mid-exposure target used by the training losses.

use crate::error::{AlethError, Result};
use crate::geom::{Pose, Vec3};
use crate::render::{volume_render, TransmittanceChoice};
use crate::sampling::generate_rays;
use crate::scene::image::ImageBuffer;
use crate::scene::manifest::{Frame, Intrinsics, Lighting, SceneManifest, Split};
use crate::scene::srgb::{srgb_decode, srgb_encode};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::path::Path;

pub const RING_RADIUS: f64 = 4.0;
pub const NEAR: f64 = 2.0;
pub const FAR: f64 = 6.0;
/// Samples per ray when rendering ground truth from the analytic field.
pub const ORACLE_SAMPLES: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Spheres,
    Boxes,
}

impl std::str::FromStr for Preset {
    type Err = AlethError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spheres" => Ok(Preset::Spheres),
            "boxes" => Ok(Preset::Boxes),
            other => Err(AlethError::InvalidArgument(format!("unknown preset '{other}'"))),
        }
    }
}

/// One smooth blob: density `amplitude / (1 + exp((d - radius) / softness))`
/// where d is the Euclidean (spheres) or Chebyshev (boxes) distance from the
/// center.
#[derive(Clone, Copy, Debug)]
pub struct Blob {
    pub center: Vec3,
    pub radius: f64,
    pub softness: f64,
    pub amplitude: f64,
    pub color: [f64; 3],
    pub chebyshev: bool,
}

#[derive(Clone, Debug)]
pub struct AnalyticField {
    pub blobs: Vec<Blob>,
}

impl AnalyticField {
    pub fn sigma(&self, p: Vec3) -> f64 {
        self.blobs.iter().map(|b| blob_sigma(b, p)).sum()
    }

    /// Density-weighted blend of the blob colors (view-independent).
    pub fn color(&self, p: Vec3) -> [f64; 3] {
        let mut total = 0.0;
        let mut rgb = [0.0; 3];
        for b in &self.blobs {
            let s = blob_sigma(b, p);
            total += s;
            for c in 0..3 {
                rgb[c] += s * b.color[c];
            }
        }
        if total <= 1e-12 {
            return [0.0; 3];
        }
        [rgb[0] / total, rgb[1] / total, rgb[2] / total]
    }

    pub fn preset(preset: Preset) -> AnalyticField {
        match preset {
            Preset::Spheres => AnalyticField {
                blobs: vec![
                    // large matte body filling most of the frame
                    Blob {
                        center: Vec3::new(0.0, 0.0, 0.0),
                        radius: 1.75,
                        softness: 0.07,
                        amplitude: 14.0,
                        color: [0.62, 0.57, 0.53],
                        chebyshev: false,
                    },
                    Blob {
                        center: Vec3::new(1.45, 0.0, 0.55),
                        radius: 0.55,
                        softness: 0.05,
                        amplitude: 14.0,
                        color: [0.9, 0.32, 0.25],
                        chebyshev: false,
                    },
                    Blob {
                        center: Vec3::new(-0.8, 1.25, 0.5),
                        radius: 0.5,
                        softness: 0.05,
                        amplitude: 14.0,
                        color: [0.3, 0.85, 0.38],
                        chebyshev: false,
                    },
                    Blob {
                        center: Vec3::new(-0.55, -1.35, -0.4),
                        radius: 0.5,
                        softness: 0.05,
                        amplitude: 14.0,
                        color: [0.35, 0.45, 0.92],
                        chebyshev: false,
                    },
                ],
            },
            Preset::Boxes => AnalyticField {
                blobs: vec![
                    Blob {
                        center: Vec3::new(0.0, 0.0, 0.0),
                        radius: 1.15,
                        softness: 0.06,
                        amplitude: 14.0,
                        color: [0.6, 0.62, 0.58],
                        chebyshev: true,
                    },
                    Blob {
                        center: Vec3::new(1.35, -0.5, 0.5),
                        radius: 0.45,
                        softness: 0.05,
                        amplitude: 14.0,
                        color: [0.9, 0.75, 0.28],
                        chebyshev: true,
                    },
                    Blob {
                        center: Vec3::new(-1.2, 0.9, -0.35),
                        radius: 0.42,
                        softness: 0.05,
                        amplitude: 14.0,
                        color: [0.35, 0.55, 0.9],
                        chebyshev: true,
                    },
                ],
            },
        }
    }
}

fn blob_sigma(b: &Blob, p: Vec3) -> f64 {
    let d = if b.chebyshev {
        let v = p - b.center;
        v.x.abs().max(v.y.abs()).max(v.z.abs())
    } else {
        (p - b.center).norm()
    };
    b.amplitude / (1.0 + ((d - b.radius) / b.softness).exp())
}

/// Render one view of the analytic field with uniform midpoint sampling.
pub fn render_analytic_view(
    field: &AnalyticField,
    intrinsics: &Intrinsics,
    pose: &Pose,
    samples: usize,
) -> Result<ImageBuffer> {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut img = ImageBuffer::new(w, h);
    let delta = (FAR - NEAR) / samples as f64;
    let tvals: Vec<f64> = (0..samples).map(|i| NEAR + (i as f64 + 0.5) * delta).collect();

    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let pixels: Vec<(f64, f64)> = (0..w).map(|x| (x as f64, y as f64)).collect();
            let rays = generate_rays(intrinsics, pose, &pixels).expect("in-bounds pixels");
            let mut row = Vec::with_capacity(w * 3);
            for r in 0..w {
                let (o, d) = (rays.origins[r], rays.dirs[r]);
                let mut sigmas = Vec::with_capacity(samples);
                let mut colors = Vec::with_capacity(samples);
                for &t in &tvals {
                    let p = o + d * t;
                    sigmas.push(field.sigma(p));
                    colors.push(field.color(p));
                }
                let out = volume_render(&sigmas, &colors, &tvals, delta, TransmittanceChoice::Plain, None)
                    .expect("valid analytic inputs");
                for c in 0..3 {
                    row.push(out.rgb[c].clamp(0.0, 1.0) as f32);
                }
            }
            row
        })
        .collect();
    for (y, row) in rows.into_iter().enumerate() {
        img.data[y * w * 3..(y + 1) * w * 3].copy_from_slice(&row);
    }
    Ok(img)
}

/// Global linear-gain degradation: decode sRGB, scale, clamp, re-encode.
/// Low light requires strength < 1, over-exposure strength > 1.
pub fn degrade(img: &ImageBuffer, mode: Lighting, strength: f64) -> Result<ImageBuffer> {
    match mode {
        Lighting::Lowlight => {
            if !(strength > 0.0 && strength < 1.0) {
                return Err(AlethError::InvalidArgument(format!(
                    "lowlight degradation needs strength in (0, 1), got {strength}"
                )));
            }
        }
        Lighting::Overexposure => {
            if strength <= 1.0 {
                return Err(AlethError::InvalidArgument(format!(
                    "overexposure degradation needs strength > 1, got {strength}"
                )));
            }
        }
        Lighting::Normal => {
            return Err(AlethError::InvalidArgument(
                "degradation mode must be lowlight or overexposure".into(),
            ))
        }
    }
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        let linear = srgb_decode((*v as f64).clamp(0.0, 1.0));
        *v = srgb_encode((linear * strength).clamp(0.0, 1.0)) as f32;
    }
    Ok(out)
}

/// Camera ring: poses at radius [`RING_RADIUS`] in the xy-plane with a small
/// seeded elevation, all looking at the origin (z up).
pub fn ring_poses(num_views: usize, seed: u64) -> Vec<Pose> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..num_views)
        .map(|i| {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / num_views as f64;
            let elevation = rng.gen_range(0.25..0.75);
            let eye = Vec3::new(RING_RADIUS * phi.cos(), RING_RADIUS * phi.sin(), elevation);
            Pose::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0))
        })
        .collect()
}

pub fn default_intrinsics(width: usize, height: usize) -> Intrinsics {
    // tan(half fov) = 0.55 puts the preset bodies just inside the frame
    let focal = 0.5 * width as f64 / 0.55;
    Intrinsics {
        fx: focal,
        fy: focal,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    }
}

/// Generate a synthetic scene: ring cameras, ground-truth normal-light
/// renders, optional degradation, and the manifest tying them together.
/// Splits: the last two views are validation and test, the rest train.
pub fn synth_scene(
    preset: Preset,
    num_views: usize,
    width: usize,
    height: usize,
    seed: u64,
    degrade_spec: Option<(Lighting, f64)>,
    out_dir: &Path,
) -> Result<SceneManifest> {
    if num_views < 4 {
        return Err(AlethError::InvalidArgument(format!(
            "need at least 4 views, got {num_views}"
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let field = AnalyticField::preset(preset);
    let intrinsics = default_intrinsics(width, height);
    let poses = ring_poses(num_views, seed);

    let lighting = degrade_spec.map(|(mode, _)| mode).unwrap_or(Lighting::Normal);
    let mut frames = Vec::with_capacity(num_views);
    for (i, pose) in poses.iter().enumerate() {
        let normal = render_analytic_view(&field, &intrinsics, pose, ORACLE_SAMPLES)?;
        let normal_name = format!("view_{i:03}_normal.png");
        normal.save_png(&out_dir.join(&normal_name))?;

        let image_name = match degrade_spec {
            Some((mode, strength)) => {
                let adverse = degrade(&normal, mode, strength)?;
                let name = format!("view_{i:03}_adverse.png");
                adverse.save_png(&out_dir.join(&name))?;
                name
            }
            None => normal_name.clone(),
        };

        let split = if i + 2 == num_views {
            Split::Val
        } else if i + 1 == num_views {
            Split::Test
        } else {
            Split::Train
        };
        frames.push(Frame {
            image: image_name,
            normal_image: normal_name,
            transform: pose.to_matrix(),
            split,
        });
    }

    let manifest = SceneManifest {
        intrinsics,
        near: NEAR,
        far: FAR,
        lighting,
        seed,
        frames,
        base_dir: out_dir.to_path_buf(),
    };
    crate::scene::manifest::save_manifest(&out_dir.join("scene.json"), &manifest)?;
    Ok(manifest)
}
