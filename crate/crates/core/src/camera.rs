//! Flat-ground pinhole camera.
//!
//! The camera sits `mount_height` meters above the ground at the vehicle
//! origin, looks along the vehicle x axis and is pitched down by `pitch`.
//! Image columns grow to the right, rows grow downwards.

use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub mount_height: f64,
    pub pitch: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            focal: 260.0,
            cx: 159.5,
            cy: 119.5,
            mount_height: 1.3,
            pitch: 0.06,
        }
    }
}

impl Camera {
    /// Image row of the horizon (rays at or above it never meet the ground).
    pub fn horizon_row(&self) -> f64 {
        self.cy - self.focal * self.pitch.tan()
    }

    /// Projects a ground point (vehicle frame, z = 0) to `(col, row)` image
    /// coordinates. Returns `None` for points behind the image plane.
    pub fn project_ground(&self, p: Vec2) -> Option<(f64, f64)> {
        let (s, c) = self.pitch.sin_cos();
        let h = self.mount_height;
        let xc = -p.y;
        let yc = -p.x * s + h * c;
        let zc = p.x * c + h * s;
        if zc <= 1e-9 {
            return None;
        }
        Some((self.cx + self.focal * xc / zc, self.cy + self.focal * yc / zc))
    }

    /// Projects a point `(x forward, y left, z up)` of the vehicle frame.
    pub fn project_point(&self, x: f64, y: f64, z: f64) -> Option<(f64, f64)> {
        let (s, c) = self.pitch.sin_cos();
        let h = self.mount_height - z;
        let zc = x * c + h * s;
        if zc <= 1e-9 {
            return None;
        }
        let xc = -y;
        let yc = -x * s + h * c;
        Some((self.cx + self.focal * xc / zc, self.cy + self.focal * yc / zc))
    }

    /// Ground x of the ray through the center of pixel row `row`; constant
    /// along the row for a level camera.
    pub fn row_ground_x(&self, row: usize) -> Option<f64> {
        self.back_project(self.cx, row as f64 + 0.5).map(|p| p.x)
    }

    /// Intersects the viewing ray of image point `(col, row)` with the ground.
    ///
    /// Returns `None` at or above the horizon.
    pub fn back_project(&self, col: f64, row: f64) -> Option<Vec2> {
        let (s, c) = self.pitch.sin_cos();
        let a = (col - self.cx) / self.focal;
        let b = (row - self.cy) / self.focal;
        let dir_x = c - b * s;
        let dir_y = -a;
        let dir_z = -s - b * c;
        if dir_z >= -1e-12 {
            return None;
        }
        let lambda = self.mount_height / -dir_z;
        let p = Vec2::new(lambda * dir_x, lambda * dir_y);
        (p.x > 0.0).then_some(p)
    }

    /// Back-projects pixel centers: pixel `(c, r)` covers `[c, c+1) × [r, r+1)`.
    pub fn back_project_pixel(&self, col: usize, row: usize) -> Option<Vec2> {
        self.back_project(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Whether the pixel row lies strictly below the horizon.
    pub fn below_horizon(&self, row: usize) -> bool {
        row as f64 + 0.5 > self.horizon_row() + 1e-9
    }
}
