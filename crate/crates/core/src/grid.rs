//! Ego-centred occupancy grid of static radar reflections.
//!
//! Cells live on a fixed lattice of the odometry frame: lattice cell `(a, b)`
//! covers `[a·c, (a+1)·c) × [b·c, (b+1)·c)`. The grid array is a window onto
//! that lattice whose long axis points along one of the four axis directions
//! (the quadrant closest to the ego heading). Moving the window shifts whole
//! cells, so static content never gets resampled.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::GridConfig;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2, Vec2};
use crate::image::{save_pgm, Grid2};
use crate::sim::RadarReflection;

/// Re-orient once the heading is this far from the grid's forward axis.
pub const REORIENT_ANGLE: f64 = 50.0 * std::f64::consts::PI / 180.0;

const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    cfg: GridConfig,
    /// Cells along the forward axis.
    n_long: usize,
    /// Cells across.
    n_lat: usize,
    /// Index into the four axis directions.
    quadrant: usize,
    /// Lattice cell of array element (0, 0).
    origin: (i64, i64),
    /// Indexed `[i * n_lat + j]`, i forward, j to the left.
    cells: Vec<f64>,
    dropped: u64,
}

impl GridMap {
    pub fn new(cfg: &GridConfig, ego: &Pose2) -> Self {
        let n_long = (cfg.length / cfg.cell_size).round() as usize;
        let n_lat = (cfg.width / cfg.cell_size).round() as usize;
        let mut g = Self {
            cfg: cfg.clone(),
            n_long,
            n_lat,
            quadrant: quadrant_of(ego.heading),
            origin: (0, 0),
            cells: vec![0.0; n_long * n_lat],
            dropped: 0,
        };
        g.origin = g.origin_for(ego);
        g
    }

    pub fn cell_size(&self) -> f64 {
        self.cfg.cell_size
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_long, self.n_lat)
    }

    pub fn quadrant(&self) -> usize {
        self.quadrant
    }

    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    /// Reflections that fell outside the grid so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    fn axes(&self) -> ((i64, i64), (i64, i64)) {
        (DIRS[self.quadrant], DIRS[(self.quadrant + 1) % 4])
    }

    /// Cell containing `p`; cells are centered on multiples of the cell size.
    pub fn lattice_cell(&self, p: Vec2) -> (i64, i64) {
        let c = self.cfg.cell_size;
        ((p.x / c).round() as i64, (p.y / c).round() as i64)
    }

    /// Center of a lattice cell in the odometry frame.
    pub fn cell_center(&self, cell: (i64, i64)) -> Vec2 {
        let c = self.cfg.cell_size;
        Vec2::new(cell.0 as f64 * c, cell.1 as f64 * c)
    }

    fn origin_for(&self, ego: &Pose2) -> (i64, i64) {
        let (f, l) = self.axes();
        let e = self.lattice_cell(ego.position());
        let rear = (self.cfg.rear / self.cfg.cell_size).round() as i64;
        let half = (self.n_lat / 2) as i64;
        (e.0 - rear * f.0 - half * l.0, e.1 - rear * f.1 - half * l.1)
    }

    fn index_of(&self, cell: (i64, i64)) -> Option<usize> {
        let (f, l) = self.axes();
        let d = (cell.0 - self.origin.0, cell.1 - self.origin.1);
        // axes are orthonormal lattice vectors
        let i = d.0 * f.0 + d.1 * f.1;
        let j = d.0 * l.0 + d.1 * l.1;
        (i >= 0 && j >= 0 && (i as usize) < self.n_long && (j as usize) < self.n_lat)
            .then(|| i as usize * self.n_lat + j as usize)
    }

    fn cell_of_index(&self, i: usize, j: usize) -> (i64, i64) {
        let (f, l) = self.axes();
        (
            self.origin.0 + i as i64 * f.0 + j as i64 * l.0,
            self.origin.1 + i as i64 * f.1 + j as i64 * l.1,
        )
    }

    /// Occupancy at an odometry-frame point; 0 outside the grid.
    #[inline]
    pub fn value_at(&self, p: Vec2) -> f64 {
        self.index_of(self.lattice_cell(p))
            .map_or(0.0, |k| self.cells[k])
    }

    pub fn value_of_cell(&self, cell: (i64, i64)) -> Option<f64> {
        self.index_of(cell).map(|k| self.cells[k])
    }

    /// Offset of the ego position from the center of its cell.
    pub fn sub_cell_offset(&self, ego: &Pose2) -> Vec2 {
        ego.position() - self.cell_center(self.lattice_cell(ego.position()))
    }

    /// Moves the window so the ego sits at its reference cell, re-orienting
    /// when the heading has turned past [`REORIENT_ANGLE`]. Vacated cells
    /// become 0.
    pub fn recenter(&mut self, ego: &Pose2) {
        let off = normalize_angle(ego.heading - self.quadrant as f64 * std::f64::consts::FRAC_PI_2);
        let old = self.clone();
        if off.abs() > REORIENT_ANGLE {
            self.quadrant = quadrant_of(ego.heading);
        }
        let origin = self.origin_for(ego);
        if origin == old.origin && self.quadrant == old.quadrant {
            return;
        }
        self.origin = origin;
        for i in 0..self.n_long {
            for j in 0..self.n_lat {
                let cell = self.cell_of_index(i, j);
                self.cells[i * self.n_lat + j] = old.value_of_cell(cell).unwrap_or(0.0);
            }
        }
    }

    /// Decays every cell, then adds the static reflections of this frame.
    /// Returns the number of reflections accepted as static.
    pub fn integrate(&mut self, reflections: &[RadarReflection], ego: &Pose2, speed: f64) -> usize {
        let decay = self.cfg.decay;
        for v in &mut self.cells {
            *v *= decay;
        }
        let mut used = 0;
        for r in reflections {
            if !(r.range.is_finite() && r.azimuth.is_finite() && r.relvel.is_finite()) {
                continue;
            }
            if (r.relvel + speed * r.azimuth.cos()).abs() >= self.cfg.static_gate {
                continue;
            }
            let p = ego.transform_point(r.position());
            match self.index_of(self.lattice_cell(p)) {
                Some(k) => {
                    self.cells[k] = (self.cells[k] + self.cfg.increment).min(1.0);
                    used += 1;
                }
                None => self.dropped += 1,
            }
        }
        used
    }

    /// Grid as an image: forward is up, left is left.
    pub fn to_image(&self) -> Grid2<u8> {
        Grid2::from_fn(self.n_lat, self.n_long, |r, c| {
            let i = self.n_long - 1 - r;
            let j = self.n_lat - 1 - c;
            (self.cells[i * self.n_lat + j] * 255.0).round().clamp(0.0, 255.0) as u8
        })
    }

    pub fn meta_text(&self) -> String {
        let mut s = String::new();
        let (f, l) = self.axes();
        let _ = writeln!(s, "cell_size = {}", self.cfg.cell_size);
        let _ = writeln!(s, "cells_forward = {}", self.n_long);
        let _ = writeln!(s, "cells_lateral = {}", self.n_lat);
        let _ = writeln!(s, "origin_cell_x = {}", self.origin.0);
        let _ = writeln!(s, "origin_cell_y = {}", self.origin.1);
        let _ = writeln!(s, "forward_axis = {},{}", f.0, f.1);
        let _ = writeln!(s, "left_axis = {},{}", l.0, l.1);
        s
    }

    /// Writes `grid.pgm` and `grid_meta.cfg` into `dir`.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        save_pgm(&dir.join("grid.pgm"), &self.to_image())?;
        let p = dir.join("grid_meta.cfg");
        std::fs::write(&p, self.meta_text()).map_err(|e| Error::io(&p, e))
    }
}

fn quadrant_of(heading: f64) -> usize {
    let q = (heading / std::f64::consts::FRAC_PI_2).round() as i64;
    q.rem_euclid(4) as usize
}
