//! Local digital road model interpolated from map shape points.

use crate::error::{Error, Result};
use crate::geometry::{left_normal, normalize_angle, Pose2, Vec2};
use crate::shape_points::{LaneMeta, ShapePoint};
use crate::spline::HermiteSpline;

/// Spacing of the resampled border offsets (m).
pub const BORDER_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    /// +1 for left, -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DigitalMap {
    center: HermiteSpline,
    points: Vec<ShapePoint>,
    meta: Vec<LaneMeta>,
    fallback_used: bool,
    left: HermiteSpline,
    right: HermiteSpline,
    built_around: Vec2,
}

impl DigitalMap {
    /// Splines the shape points within `window` meters (along the point
    /// chain) of the point nearest to `around`.
    pub fn build(points: &[ShapePoint], around: Vec2, window: f64) -> Result<Self> {
        let nearest = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p.position - around).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((k, dist)) = nearest else {
            return Err(Error::MapUnavailable("no shape points".into()));
        };
        if dist > window {
            return Err(Error::MapUnavailable(format!(
                "nearest shape point is {dist:.1} m away (window {window} m)"
            )));
        }
        let mut lo = k;
        let mut acc = 0.0;
        while lo > 0 {
            acc += (points[lo].position - points[lo - 1].position).norm();
            if acc > window {
                break;
            }
            lo -= 1;
        }
        let mut hi = k;
        acc = 0.0;
        while hi + 1 < points.len() {
            acc += (points[hi + 1].position - points[hi].position).norm();
            if acc > window {
                break;
            }
            hi += 1;
        }
        let windowed: Vec<ShapePoint> = points[lo..=hi].to_vec();
        Self::from_points(windowed, around)
    }

    /// Builds the map from an already windowed run of shape points.
    pub fn from_points(points: Vec<ShapePoint>, around: Vec2) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::MapUnavailable(format!(
                "{} shape point(s) in the window, need 2",
                points.len()
            )));
        }
        let pos: Vec<Vec2> = points.iter().map(|p| p.position).collect();
        let center = HermiteSpline::catmull_rom(&pos)
            .map_err(|e| Error::MapUnavailable(format!("cannot spline shape points: {e}")))?;
        let fallback_used = points.iter().any(|p| p.meta.is_none());
        if fallback_used {
            log::warn!("shape points without lane metadata; assuming {:?}", LaneMeta::FALLBACK);
        }
        let meta: Vec<LaneMeta> = points
            .iter()
            .map(|p| p.meta.unwrap_or(LaneMeta::FALLBACK))
            .collect();
        let mut map = Self {
            left: center.clone(),
            right: center.clone(),
            center,
            points,
            meta,
            fallback_used,
            built_around: around,
        };
        let samples = map.center.sample_by_arclength(BORDER_STEP)?;
        for side in Side::BOTH {
            let offs: Vec<Vec2> = samples.iter().map(|a| map.border_point(side, a.s)).collect();
            let spline = HermiteSpline::catmull_rom(&offs)
                .map_err(|e| Error::MapUnavailable(format!("degenerate {} border: {e}", side.name())))?;
            match side {
                Side::Left => map.left = spline,
                Side::Right => map.right = spline,
            }
        }
        Ok(map)
    }

    pub fn center(&self) -> &HermiteSpline {
        &self.center
    }

    pub fn border(&self, side: Side) -> &HermiteSpline {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn points(&self) -> &[ShapePoint] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.center.length()
    }

    /// Arc-length interval on the center spline where the map is defined.
    pub fn validity(&self) -> (f64, f64) {
        (0.0, self.length())
    }

    /// Whether any windowed point lacked lane metadata.
    pub fn fallback_used(&self) -> bool {
        self.fallback_used
    }

    pub fn built_around(&self) -> Vec2 {
        self.built_around
    }

    /// Metadata of the shape point nearest (in arc length) to `s`.
    pub fn meta_at(&self, s: f64) -> LaneMeta {
        let knots = self.center.knot_arclengths();
        let i = knots.partition_point(|&k| k < s);
        let k = if i == 0 {
            0
        } else if i >= knots.len() {
            knots.len() - 1
        } else if s - knots[i - 1] <= knots[i] - s {
            i - 1
        } else {
            i
        };
        self.meta[k]
    }

    pub fn half_width_at(&self, s: f64) -> f64 {
        0.5 * self.meta_at(s).road_width()
    }

    /// Exact normal offset of the center spline at `s`.
    pub fn border_point(&self, side: Side, s: f64) -> Vec2 {
        let a = self.center.sample_at(s);
        a.point + side.sign() * self.half_width_at(s) * left_normal(a.heading)
    }

    /// World pose at arc length `s`, lateral offset `d` and heading offset
    /// `psi` relative to the center spline.
    pub fn pose_at(&self, s: f64, d: f64, psi: f64) -> Pose2 {
        let a = self.center.sample_at(s);
        Pose2::from_position(a.point + d * left_normal(a.heading), a.heading + psi)
    }

    /// `(s, d, psi)` of a world pose.
    pub fn locate(&self, pose: &Pose2) -> (f64, f64, f64) {
        let (s, d) = self.center.project(pose.position());
        (s, d, normalize_angle(pose.heading - self.center.heading_at(s)))
    }

    /// Border samples every `step` meters of center arc length over
    /// `[s0, s1]`, in the world frame.
    pub fn border_samples(&self, side: Side, s0: f64, s1: f64, step: f64) -> Vec<(f64, Vec2)> {
        let (lo, hi) = self.validity();
        let a = s0.max(lo);
        let b = s1.min(hi);
        if b < a {
            return Vec::new();
        }
        let n = ((b - a) / step).floor() as usize;
        (0..=n)
            .map(|k| {
                let s = a + k as f64 * step;
                (s, self.border_point(side, s))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Preset, Scenario, ScenarioConfig};

    fn straight(n: usize, spacing: f64, meta: Option<LaneMeta>) -> Vec<ShapePoint> {
        (0..n)
            .map(|i| ShapePoint {
                id: i as u64,
                position: Vec2::new(i as f64 * spacing, 0.0),
                meta,
            })
            .collect()
    }

    const TWO_LANES: LaneMeta = LaneMeta {
        lane_count: 2,
        lane_width: 3.5,
    };

    #[test]
    fn straight_borders_at_half_width() {
        let pts = straight(9, 25.0, Some(TWO_LANES));
        let m = DigitalMap::build(&pts, Vec2::new(100.0, 2.0), 150.0).unwrap();
        for s in [0.0, 13.0, 77.7, m.length()] {
            let l = m.border_point(Side::Left, s);
            let r = m.border_point(Side::Right, s);
            assert!((l.y - 3.5).abs() < 1e-9 && (r.y + 3.5).abs() < 1e-9);
        }
        let (s, d) = m.border(Side::Left).project(Vec2::new(50.0, 0.0));
        assert!((d + 3.5).abs() < 1e-6, "{s} {d}");
        assert!(!m.fallback_used());
    }

    #[test]
    fn two_points_give_one_segment() {
        let pts = straight(2, 25.0, Some(TWO_LANES));
        let m = DigitalMap::build(&pts, Vec2::new(10.0, 0.0), 150.0).unwrap();
        assert_eq!(m.center().segment_count(), 1);
        assert!((m.center().point_at(12.5) - Vec2::new(12.5, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn far_ego_is_unavailable() {
        let pts = straight(5, 25.0, None);
        let e = DigitalMap::build(&pts, Vec2::new(0.0, 500.0), 150.0).unwrap_err();
        assert!(matches!(e, Error::MapUnavailable(_)));
        let e = DigitalMap::build(&pts[..1], Vec2::new(0.0, 0.0), 150.0).unwrap_err();
        assert!(matches!(e, Error::MapUnavailable(_)));
    }

    #[test]
    fn missing_meta_falls_back_and_is_flagged() {
        let pts = straight(4, 25.0, None);
        let m = DigitalMap::build(&pts, Vec2::new(0.0, 0.0), 150.0).unwrap();
        assert!(m.fallback_used());
        assert_eq!(m.half_width_at(10.0), 3.5);
    }

    #[test]
    fn window_limits_point_chain() {
        let pts = straight(40, 25.0, Some(TWO_LANES));
        let m = DigitalMap::build(&pts, Vec2::new(500.0, 0.0), 150.0).unwrap();
        assert_eq!(m.points().len(), 13);
        assert_eq!(m.points()[0].position.x, 350.0);
    }

    #[test]
    fn generated_roads_keep_regular_borders() {
        for seed in 0..4 {
            let scn = Scenario::generate(&ScenarioConfig {
                frames: 10,
                ..ScenarioConfig::preset(Preset::Z, seed)
            })
            .unwrap();
            let around = scn.truth[0].pose.position();
            let m = DigitalMap::build(&scn.shape_points, around, 150.0).unwrap();
            for (i, p) in m.points().iter().enumerate() {
                assert!((m.center().eval(i as f64) - p.position).norm() <= 1e-12);
            }
            let half = m.half_width_at(0.0);
            for side in Side::BOTH {
                let b = m.border(side);
                for a in b.sample_by_arclength(2.0).unwrap() {
                    let (_, d) = m.center().project(a.point);
                    assert!((d - side.sign() * half).abs() <= 0.01 * half, "d = {d}");
                }
            }
        }
    }

    #[test]
    fn locate_inverts_pose_at() {
        let pts: Vec<ShapePoint> = (0..8)
            .map(|i| {
                let a = i as f64 * 0.2;
                ShapePoint {
                    id: i,
                    position: Vec2::new(100.0 * a.sin(), 100.0 * (1.0 - a.cos())),
                    meta: Some(TWO_LANES),
                }
            })
            .collect();
        let m = DigitalMap::build(&pts, pts[3].position, 150.0).unwrap();
        let pose = m.pose_at(57.0, -1.2, 0.03);
        let (s, d, psi) = m.locate(&pose);
        assert!((s - 57.0).abs() < 1e-6 && (d + 1.2).abs() < 1e-6 && (psi - 0.03).abs() < 1e-6);
    }
}
