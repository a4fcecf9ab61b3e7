//! Road centerlines made of constant-curvature pieces.

use crate::error::{Error, Result};
use crate::geometry::{left_normal, Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    s0: f64,
    length: f64,
    kappa: f64,
    start: Pose2,
}

/// Displacement after travelling `u` along an arc of curvature `k`.
fn arc_delta(u: f64, k: f64) -> Pose2 {
    if k.abs() < 1e-12 {
        Pose2::new(u, 0.0, 0.0)
    } else {
        let a = k * u;
        Pose2::new(a.sin() / k, (1.0 - a.cos()) / k, a)
    }
}

/// A centerline built from straight and circular pieces, parameterized by arc
/// length. Positions are exact (no numerical integration).
#[derive(Debug, Clone, PartialEq)]
pub struct RoadPath {
    pieces: Vec<Piece>,
    length: f64,
}

impl RoadPath {
    /// Chains `(length, curvature)` pieces starting at `start`.
    pub fn from_pieces(start: Pose2, pieces: &[(f64, f64)]) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Generation("road needs at least one piece".into()));
        }
        let mut out = Vec::with_capacity(pieces.len());
        let mut pose = start;
        let mut s0 = 0.0;
        for &(length, kappa) in pieces {
            if !(length > 0.0) || !kappa.is_finite() {
                return Err(Error::Generation(format!(
                    "bad road piece (length {length}, curvature {kappa})"
                )));
            }
            out.push(Piece {
                s0,
                length,
                kappa,
                start: pose,
            });
            pose = pose.compose(&arc_delta(length, kappa));
            s0 += length;
        }
        Ok(Self {
            pieces: out,
            length: s0,
        })
    }

    pub fn straight(length: f64) -> Result<Self> {
        Self::from_pieces(Pose2::default(), &[(length, 0.0)])
    }

    /// Counter-clockwise circle of `radius` starting at the origin heading east.
    pub fn circle(radius: f64, length: f64) -> Result<Self> {
        Self::from_pieces(Pose2::default(), &[(length, 1.0 / radius)])
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn piece_boundaries(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces.iter().map(|p| p.s0)
    }

    fn piece(&self, s: f64) -> &Piece {
        let i = self.pieces.partition_point(|p| p.s0 <= s);
        &self.pieces[i.saturating_sub(1)]
    }

    /// Pose on the centerline; beyond either end the nearest piece is
    /// continued.
    pub fn pose_at(&self, s: f64) -> Pose2 {
        let p = self.piece(s);
        p.start.compose(&arc_delta(s - p.s0, p.kappa))
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.piece(s).kappa
    }

    /// Arc length where the piece containing `s` ends.
    pub fn piece_end(&self, s: f64) -> f64 {
        let p = self.piece(s);
        if std::ptr::eq(p, self.pieces.last().unwrap()) {
            f64::INFINITY
        } else {
            p.s0 + p.length
        }
    }

    /// Point at lateral offset `d` (positive left) from the centerline.
    pub fn offset_point(&self, s: f64, d: f64) -> Vec2 {
        let pose = self.pose_at(s);
        pose.position() + d * left_normal(pose.heading)
    }

    /// Rejects roads whose borders at `half_width` fold over themselves or
    /// whose distant parts come back within one road width.
    pub fn check_simple(&self, half_width: f64) -> Result<()> {
        if let Some(p) = self.pieces.iter().find(|p| p.kappa.abs() * half_width >= 1.0) {
            return Err(Error::Generation(format!(
                "curvature {} too tight for road half-width {half_width}",
                p.kappa
            )));
        }
        let step = 2.0;
        let n = (self.length / step).floor() as usize + 1;
        let pts: Vec<(f64, Vec2)> = (0..n)
            .map(|k| {
                let s = k as f64 * step;
                (s, self.pose_at(s).position())
            })
            .collect();
        let clearance = 2.0 * half_width + 2.0;
        let min_gap = 2.0 * std::f64::consts::PI * half_width.max(1.0) + clearance;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if pts[j].0 - pts[i].0 > min_gap && (pts[j].1 - pts[i].1).norm() < clearance {
                    return Err(Error::Generation(format!(
                        "road intersects itself near s = {:.1} m and s = {:.1} m",
                        pts[i].0, pts[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Advances an arc-length position `s` by time `dt` for a vehicle driving
    /// at speed `v` with constant lateral offset `d`
    /// (`ds/dt = v / (1 - κ d)`).
    pub fn advance(&self, mut s: f64, d: f64, v: f64, mut dt: f64) -> f64 {
        while dt > 0.0 {
            let rate = v / (1.0 - self.curvature_at(s) * d);
            if rate <= 0.0 {
                return s;
            }
            let end = self.piece_end(s);
            let t_end = (end - s) / rate;
            if t_end >= dt {
                return s + rate * dt;
            }
            s = end;
            dt -= t_end;
        }
        s
    }

    /// Yaw rate of a vehicle at offset `d` and speed `v`.
    pub fn yaw_rate(&self, s: f64, d: f64, v: f64) -> f64 {
        let k = self.curvature_at(s);
        v * k / (1.0 - k * d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle_positions_are_exact() {
        let r = 50.0;
        let road = RoadPath::circle(r, 0.5 * PI * r).unwrap();
        let p = road.pose_at(0.5 * PI * r);
        assert!((p.x - r).abs() < 1e-9 && (p.y - r).abs() < 1e-9);
        assert!((p.heading - 0.5 * PI).abs() < 1e-12);
        assert!((road.yaw_rate(10.0, 0.0, 15.0) - 15.0 / r).abs() < 1e-12);
    }

    #[test]
    fn pieces_join_continuously() {
        let road = RoadPath::from_pieces(Pose2::default(), &[(40.0, 0.01), (30.0, -0.02), (20.0, 0.0)]).unwrap();
        for s0 in [40.0, 70.0] {
            let a = road.pose_at(s0 - 1e-9);
            let b = road.pose_at(s0);
            assert!((a.position() - b.position()).norm() < 1e-7);
            assert!((a.heading - b.heading).abs() < 1e-9);
        }
        assert_eq!(road.length(), 90.0);
    }

    #[test]
    fn advance_crosses_pieces() {
        let road = RoadPath::from_pieces(Pose2::default(), &[(10.0, 0.0), (10.0, 0.1)]).unwrap();
        // on the curve with d = -1 the centerline advances at v / 1.1
        let s = road.advance(5.0, -1.0, 1.0, 10.0);
        assert!((s - (10.0 + 5.0 / 1.1)).abs() < 1e-12);
    }

    #[test]
    fn closed_circle_is_rejected() {
        let road = RoadPath::circle(30.0, 2.5 * PI * 30.0).unwrap();
        assert!(matches!(road.check_simple(3.5), Err(Error::Generation(_))));
        let road = RoadPath::circle(30.0, PI * 30.0).unwrap();
        assert!(road.check_simple(3.5).is_ok());
        assert!(RoadPath::circle(3.0, 10.0).unwrap().check_simple(3.5).is_err());
    }
}
