//! Scene manifest: posed frames, intrinsics, depth bounds, lighting tag.
//!
//! Stored as JSON next to the referenced PNG images; image paths are
//! interpreted relative to the manifest file's directory. Camera-to-world
//! matrices are row-major; the camera convention is right-handed, looking
//! along -z with y up.

use crate::error::{AlethError, Result};
use crate::geom::Pose;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const ROTATION_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lighting {
    Lowlight,
    Overexposure,
    Normal,
}

impl std::fmt::Display for Lighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lighting::Lowlight => write!(f, "lowlight"),
            Lighting::Overexposure => write!(f, "overexposure"),
            Lighting::Normal => write!(f, "normal"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Frame {
    /// Training image for this view (the adverse-light capture when the
    /// scene is degraded, otherwise the same file as `normal_image`).
    pub image: String,
    /// Normal-light reference for evaluation.
    pub normal_image: String,
    /// Row-major 4x4 camera-to-world matrix.
    pub transform: [[f64; 4]; 4],
    pub split: Split,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneManifest {
    pub intrinsics: Intrinsics,
    pub near: f64,
    pub far: f64,
    pub lighting: Lighting,
    /// Seed the scene was generated with (metadata for reproducibility).
    pub seed: u64,
    pub frames: Vec<Frame>,
    /// Directory the image paths are relative to; set when loaded.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SceneManifest {
    pub fn frames_in(&self, split: Split) -> impl Iterator<Item = (usize, &Frame)> {
        self.frames.iter().enumerate().filter(move |(_, f)| f.split == split)
    }

    pub fn image_path(&self, frame: &Frame) -> PathBuf {
        self.base_dir.join(&frame.image)
    }

    pub fn normal_image_path(&self, frame: &Frame) -> PathBuf {
        self.base_dir.join(&frame.normal_image)
    }

    pub fn pose(&self, frame: &Frame) -> Result<Pose> {
        Pose::from_matrix(&frame.transform, ROTATION_TOL)
    }
}

pub fn save_manifest(path: &Path, manifest: &SceneManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| AlethError::Manifest(format!("serialisation failed: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Parse and validate a manifest; every failure names the offending frame.
pub fn load_manifest(path: &Path) -> Result<SceneManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AlethError::Manifest(format!("cannot read {}: {e}", path.display())))?;
    let mut manifest: SceneManifest = serde_json::from_str(&text)
        .map_err(|e| AlethError::Manifest(format!("malformed manifest {}: {e}", path.display())))?;
    manifest.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    validate(&manifest)?;
    Ok(manifest)
}

fn validate(m: &SceneManifest) -> Result<()> {
    if !(m.near > 0.0 && m.near < m.far) {
        return Err(AlethError::Manifest(format!(
            "invalid depth bounds: near {} must be positive and less than far {}",
            m.near, m.far
        )));
    }
    let it = &m.intrinsics;
    if it.width == 0 || it.height == 0 || it.fx <= 0.0 || it.fy <= 0.0 {
        return Err(AlethError::Manifest("invalid intrinsics".into()));
    }
    if m.frames.is_empty() {
        return Err(AlethError::Manifest("manifest has no frames".into()));
    }
    for (i, frame) in m.frames.iter().enumerate() {
        Pose::from_matrix(&frame.transform, ROTATION_TOL)
            .map_err(|e| AlethError::Manifest(format!("frame {i}: {e}")))?;
        for (tag, rel) in [("image", &frame.image), ("normal_image", &frame.normal_image)] {
            let p = m.base_dir.join(rel);
            let img = crate::scene::image::ImageBuffer::load_png(&p).map_err(|e| {
                AlethError::Manifest(format!("frame {i}: {tag} '{rel}' unreadable: {e}"))
            })?;
            if img.width != it.width || img.height != it.height {
                return Err(AlethError::Manifest(format!(
                    "frame {i}: {tag} '{rel}' is {}x{} but intrinsics say {}x{}",
                    img.width, img.height, it.width, it.height
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::image::ImageBuffer;

    fn write_img(dir: &Path, name: &str, w: usize, h: usize) {
        ImageBuffer::new(w, h).save_png(&dir.join(name)).unwrap();
    }

    fn sample_manifest(dir: &Path, frames: usize) -> SceneManifest {
        for i in 0..frames {
            write_img(dir, &format!("v{i}.png"), 4, 4);
        }
        let id = Pose::identity().to_matrix();
        SceneManifest {
            intrinsics: Intrinsics { fx: 2.0, fy: 2.0, cx: 2.0, cy: 2.0, width: 4, height: 4 },
            near: 2.0,
            far: 6.0,
            lighting: Lighting::Normal,
            seed: 7,
            frames: (0..frames)
                .map(|i| Frame {
                    image: format!("v{i}.png"),
                    normal_image: format!("v{i}.png"),
                    transform: id,
                    split: if i < frames - 2 {
                        Split::Train
                    } else if i == frames - 2 {
                        Split::Val
                    } else {
                        Split::Test
                    },
                })
                .collect(),
            base_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn eight_frame_manifest_round_trips_with_expected_split() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_manifest(dir.path(), 8);
        let p = dir.path().join("scene.json");
        save_manifest(&p, &m).unwrap();
        let loaded = load_manifest(&p).unwrap();
        assert_eq!(loaded.frames.len(), 8);
        assert_eq!(loaded.frames_in(Split::Train).count(), 6);
        assert_eq!(loaded.frames_in(Split::Val).count(), 1);
        assert_eq!(loaded.frames_in(Split::Test).count(), 1);
    }

    #[test]
    fn inverted_depth_bounds_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = sample_manifest(dir.path(), 4);
        m.far = 1.0; // near stays 2.0
        let p = dir.path().join("scene.json");
        save_manifest(&p, &m).unwrap();
        let err = load_manifest(&p).unwrap_err();
        assert!(err.to_string().contains("invalid depth bounds"), "{err}");
    }

    #[test]
    fn image_size_mismatch_names_the_frame() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = sample_manifest(dir.path(), 4);
        write_img(dir.path(), "odd.png", 3, 4);
        m.frames[2].image = "odd.png".into();
        let p = dir.path().join("scene.json");
        save_manifest(&p, &m).unwrap();
        let err = load_manifest(&p).unwrap_err();
        assert!(err.to_string().contains("frame 2"), "{err}");
    }

    #[test]
    fn missing_image_names_the_frame() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = sample_manifest(dir.path(), 4);
        m.frames[1].image = "nope.png".into();
        let p = dir.path().join("scene.json");
        save_manifest(&p, &m).unwrap();
        let err = load_manifest(&p).unwrap_err();
        assert!(err.to_string().contains("frame 1"), "{err}");
    }

    #[test]
    fn skewed_rotation_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = sample_manifest(dir.path(), 4);
        m.frames[0].transform[0][1] = 0.3;
        let p = dir.path().join("scene.json");
        save_manifest(&p, &m).unwrap();
        let err = load_manifest(&p).unwrap_err();
        assert!(err.to_string().contains("orthonormal"), "{err}");
    }
}
