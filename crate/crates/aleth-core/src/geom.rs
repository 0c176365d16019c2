//! Minimal 3-D vector and 4x4 pose helpers.

use crate::error::{AlethError, Result};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Camera-to-world pose: orthonormal rotation plus translation, stored as the
/// upper 3x4 block of a row-major 4x4 matrix with bottom row (0,0,0,1).
#[derive(Clone, Copy, Debug)]
pub struct Pose {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: Vec3::ZERO,
        }
    }

    /// Validates the orthonormality and bottom-row invariants before accepting
    /// a raw matrix (`tol` bounds the max-abs entry of R^T R - I).
    pub fn from_matrix(m: &[[f64; 4]; 4], tol: f64) -> Result<Pose> {
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(AlethError::Manifest(
                "pose bottom row must be (0, 0, 0, 1)".into(),
            ));
        }
        let r = [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ];
        let mut max_dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut v = 0.0;
                for k in 0..3 {
                    v += r[k][i] * r[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((v - target).abs());
            }
        }
        if max_dev >= tol {
            return Err(AlethError::Manifest(format!(
                "pose rotation block is not orthonormal (max deviation {max_dev:.3e})"
            )));
        }
        Ok(Pose {
            rotation: r,
            translation: Vec3::new(m[0][3], m[1][3], m[2][3]),
        })
    }

    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    /// Camera at `eye` looking at `target`; the camera looks along its local
    /// -z with +y roughly aligned to `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Pose {
        let back = (eye - target).normalized();
        let right = up.cross(back).normalized();
        let cam_up = back.cross(right);
        Pose {
            rotation: [
                [right.x, cam_up.x, back.x],
                [right.y, cam_up.y, back.y],
                [right.z, cam_up.z, back.z],
            ],
            translation: eye,
        }
    }
}
