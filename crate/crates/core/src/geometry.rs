//! Rigid transforms and pinhole intrinsics.
//!
//! Camera frame convention: `+z` forward, `+x` right, `+y` down. World frame
//! has `+z` up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Point3;

const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// World ← camera rigid transform. `rotation` is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3] }
    }

    /// A level camera at `position` looking along heading `yaw` (radians,
    /// counter-clockwise from world `+x`).
    pub fn looking_along(position: Point3, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        // Columns are the camera axes expressed in world coordinates.
        let right = [s, -c, 0.0];
        let down = [0.0, 0.0, -1.0];
        let forward = [c, s, 0.0];
        Pose {
            rotation: [
                [right[0], down[0], forward[0]],
                [right[1], down[1], forward[1]],
                [right[2], down[2], forward[2]],
            ],
            translation: [position.x, position.y, position.z],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if !dot.is_finite() || (dot - want).abs() > ORTHONORMAL_TOLERANCE {
                    return Err(Error::invalid("pose rotation is not orthonormal"));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::invalid("pose rotation is a reflection"));
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("pose translation is not finite"));
        }
        Ok(())
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.translation[0], self.translation[1], self.translation[2])
    }

    /// Camera-frame point to world frame.
    pub fn apply(&self, p: [f64; 3]) -> Point3 {
        let r = &self.rotation;
        let t = &self.translation;
        Point3::new(
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        )
    }

    /// World-frame point to camera frame.
    pub fn inverse_apply(&self, p: &Point3) -> [f64; 3] {
        let r = &self.rotation;
        let d = [p.x - self.translation[0], p.y - self.translation[1], p.z - self.translation[2]];
        [
            r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
            r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
            r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
        ]
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Square image with a 90° field of view in both axes.
    pub fn square_fov90(size: u32) -> Self {
        let half = f64::from(size) / 2.0;
        Intrinsics { fx: half, fy: half, cx: half, cy: half, width: size, height: size }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::invalid("intrinsics need positive focal lengths and image size"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(())
    }

    /// Pixel `(u, v)` at `depth` along the optical axis, in camera frame.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        [(u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth]
    }

    /// Camera-frame point to pixel coordinates. `None` behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[2] <= 0.0 {
            return None;
        }
        Some((self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy))
    }
}
