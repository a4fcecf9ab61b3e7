//! Distance-weighted blending of the optical map and the matched digital
//! map.

use std::fmt::Write as _;

use crate::config::FusionConfig;
use crate::dmap::{DigitalMap, Side};
use crate::error::{Error, Result};
use crate::geometry::{lateral_at, Pose2, Vec2};
use crate::shaping::OpticalMap;

/// Optical trust ramp: 1 up to `d0`, 0 from `d1`, linear in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub d0: f64,
    pub d1: f64,
}

impl FusionWeights {
    pub fn new(d0: f64, d1: f64) -> Result<Self> {
        if !(d0 >= 0.0 && d1 > d0) {
            return Err(Error::Config(format!("fusion ramp needs 0 <= d0 < d1, got {d0}, {d1}")));
        }
        Ok(Self { d0, d1 })
    }

    pub fn at(&self, d: f64) -> f64 {
        if d <= self.d0 {
            1.0
        } else if d >= self.d1 {
            0.0
        } else {
            (self.d1 - d) / (self.d1 - self.d0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CourseMode {
    Fused,
    DigitalOnly,
}

impl CourseMode {
    pub fn name(self) -> &'static str {
        match self {
            CourseMode::Fused => "fused",
            CourseMode::DigitalOnly => "digital-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CourseSample {
    pub d: f64,
    pub left: f64,
    pub right: f64,
    /// Effective optical weight per side.
    pub w_left: f64,
    pub w_right: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedRoadCourse {
    pub samples: Vec<CourseSample>,
    pub mode: CourseMode,
    pub lane_count: u32,
}

impl FusedRoadCourse {
    /// Center of the rightmost lane at each sample.
    pub fn ego_lane_center(&self) -> Vec<Vec2> {
        let n = self.lane_count.max(1) as f64;
        self.samples
            .iter()
            .map(|s| Vec2::new(s.d, s.right + (s.left - s.right) / (2.0 * n)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{COURSE_HEADER}\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:.2},{:.4},{:.4},{:.4}",
                s.d,
                s.left,
                s.right,
                0.5 * (s.w_left + s.w_right)
            );
        }
        out
    }
}

pub const COURSE_HEADER: &str = "d_m,left_y_m,right_y_m,w";

/// Digital map borders in the frame of the matched vehicle pose, as
/// polylines sampled every meter of arc length.
#[derive(Debug, Clone)]
pub struct DigitalCourse {
    pub left: Vec<Vec2>,
    pub right: Vec<Vec2>,
    pub lane_count: u32,
    pub road_width: f64,
}

impl DigitalCourse {
    pub fn new(dmap: &DigitalMap, matched: &Pose2, range: f64) -> Self {
        let (s, _, _) = dmap.locate(matched);
        let side = |sd: Side| {
            dmap.border_samples(sd, s - 10.0, s + range + 20.0, 1.0)
                .into_iter()
                .map(|(_, p)| matched.inverse_transform_point(p))
                .collect()
        };
        let meta = dmap.meta_at(s);
        Self {
            left: side(Side::Left),
            right: side(Side::Right),
            lane_count: meta.lane_count,
            road_width: meta.road_width(),
        }
    }

    pub fn lateral(&self, side: Side, d: f64) -> Option<f64> {
        match side {
            Side::Left => lateral_at(&self.left, d),
            Side::Right => lateral_at(&self.right, d),
        }
    }
}

fn blend(w: f64, optical: f64, digital: f64) -> f64 {
    if w == 0.0 {
        digital
    } else {
        w * optical + (1.0 - w) * digital
    }
}

/// Samples the course every `cfg.step` meters over `[0, cfg.range]`.
/// Distances where the digital map has no border are skipped.
pub fn fuse(optical: Option<&OpticalMap>, digital: &DigitalCourse, cfg: &FusionConfig) -> Result<FusedRoadCourse> {
    let weights = FusionWeights::new(cfg.d0, cfg.d1)?;
    let optical = optical.filter(|o| o.valid);
    let n = (cfg.range / cfg.step).floor() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let d = k as f64 * cfg.step;
        let (Some(dl), Some(dr)) = (digital.lateral(Side::Left, d), digital.lateral(Side::Right, d)) else {
            continue;
        };
        let side = |sd: Side, dy: f64| -> (f64, f64) {
            match optical.and_then(|o| o.lateral(sd, d)) {
                Some((oy, extrapolated)) => {
                    let mut w = weights.at(d);
                    if extrapolated {
                        w *= cfg.extrapolated_discount;
                    }
                    (blend(w, oy, dy), w)
                }
                None => (dy, 0.0),
            }
        };
        let (left, w_left) = side(Side::Left, dl);
        let (right, w_right) = side(Side::Right, dr);
        samples.push(CourseSample {
            d,
            left,
            right,
            w_left,
            w_right,
        });
    }
    if samples.is_empty() {
        return Err(Error::MapUnavailable("digital map does not cover the look-ahead range".into()));
    }
    Ok(FusedRoadCourse {
        samples,
        mode: if optical.is_some() {
            CourseMode::Fused
        } else {
            CourseMode::DigitalOnly
        },
        lane_count: digital.lane_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ShapingConfig;
    use crate::detection::BorderObservation;
    use crate::shape_points::{LaneMeta, ShapePoint};
    use crate::shaping::BinStore;
    use proptest::prelude::*;

    fn straight_map() -> DigitalMap {
        let pts: Vec<ShapePoint> = (0..12)
            .map(|i| ShapePoint {
                id: i,
                position: Vec2::new(i as f64 * 25.0 - 50.0, 0.0),
                meta: Some(LaneMeta {
                    lane_count: 2,
                    lane_width: 3.5,
                }),
            })
            .collect();
        DigitalMap::build(&pts, Vec2::new(0.0, 0.0), 500.0).unwrap()
    }

    /// Optical map with both borders at constant `y_left`, `y_right`.
    fn flat_optical(y_left: f64, y_right: f64) -> OpticalMap {
        let mut st = BinStore::new(&ShapingConfig::default());
        let mut obs = Vec::new();
        for k in 0..240 {
            let x = 0.125 + 0.25 * k as f64;
            for (side, y) in [(Side::Left, y_left), (Side::Right, y_right)] {
                obs.push(BorderObservation {
                    side,
                    row: 0,
                    col: 0,
                    edge: (0.0, 0.0),
                    ground: Some(Vec2::new(x, y)),
                    ignored: None,
                });
            }
        }
        st.accumulate(&obs, &Pose2::default());
        st.shape(7.0)
    }

    #[test]
    fn ramp_boundaries_and_midpoint() {
        let w = FusionWeights::new(10.0, 40.0).unwrap();
        assert_eq!(w.at(0.0), 1.0);
        assert_eq!(w.at(10.0), 1.0);
        assert_eq!(w.at(40.0), 0.0);
        assert_eq!(w.at(55.0), 0.0);
        assert_eq!(w.at(25.0), 0.5);
        assert_eq!(blend(w.at(25.0), 2.0, 3.0), 2.5);
        assert!(FusionWeights::new(10.0, 10.0).is_err());
    }

    #[test]
    fn near_is_optical_far_is_digital() {
        let dm = straight_map();
        let dc = DigitalCourse::new(&dm, &Pose2::new(0.0, 0.0, 0.0), 60.0);
        let om = flat_optical(2.0, -5.0);
        let c = fuse(Some(&om), &dc, &FusionConfig::default()).unwrap();
        assert_eq!(c.mode, CourseMode::Fused);
        assert_eq!(c.lane_count, 2);
        let at = |d: f64| c.samples.iter().find(|s| s.d == d).unwrap();
        assert!((at(0.0).left - 2.0).abs() < 1e-9);
        assert!((at(5.0).right + 5.0).abs() < 1e-9);
        assert!((at(25.0).left - 2.75).abs() < 1e-9);
        assert!((at(45.0).left - 3.5).abs() < 1e-9);
        assert!((at(45.0).right + 3.5).abs() < 1e-9);
    }

    #[test]
    fn invalid_optical_equals_digital_bitwise() {
        let dm = straight_map();
        let pose = Pose2::new(3.0, -1.2, 0.05);
        let dc = DigitalCourse::new(&dm, &pose, 60.0);
        let invalid = BinStore::new(&ShapingConfig::default()).shape(7.0);
        let a = fuse(Some(&invalid), &dc, &FusionConfig::default()).unwrap();
        let b = fuse(None, &dc, &FusionConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mode, CourseMode::DigitalOnly);
        for s in &a.samples {
            assert_eq!(s.left, dc.lateral(Side::Left, s.d).unwrap());
            assert_eq!(s.right, dc.lateral(Side::Right, s.d).unwrap());
        }
    }

    #[test]
    fn ego_lane_center_of_two_lane_road() {
        let c = FusedRoadCourse {
            samples: vec![CourseSample {
                d: 0.0,
                left: 3.5,
                right: -3.5,
                w_left: 1.0,
                w_right: 1.0,
            }],
            mode: CourseMode::Fused,
            lane_count: 2,
        };
        assert_eq!(c.ego_lane_center()[0].y, -1.75);
        assert!(c.to_csv().starts_with("d_m,left_y_m,right_y_m,w\n0.00,3.5000,-3.5000,1.0000"));
    }

    #[test]
    fn digital_course_follows_matched_pose() {
        let dm = straight_map();
        let dc = DigitalCourse::new(&dm, &Pose2::new(10.0, 1.0, 0.0), 60.0);
        assert!((dc.lateral(Side::Left, 20.0).unwrap() - 2.5).abs() < 1e-9);
        assert!((dc.lateral(Side::Right, 20.0).unwrap() + 4.5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn fused_lies_between_sources(yo in -6.0..6.0f64, dy in -2.0..2.0f64, lat in -2.0..2.0f64) {
            let dm = straight_map();
            let dc = DigitalCourse::new(&dm, &Pose2::new(0.0, lat, 0.0), 60.0);
            let om = flat_optical(yo + 3.0, yo - 3.0 + dy);
            let c = fuse(Some(&om), &dc, &FusionConfig::default()).unwrap();
            let mut prev: Option<CourseSample> = None;
            for s in &c.samples {
                for (side, v) in [(Side::Left, s.left), (Side::Right, s.right)] {
                    let d = dc.lateral(side, s.d).unwrap();
                    let o = om.lateral(side, s.d).map(|x| x.0).unwrap_or(d);
                    prop_assert!(v >= d.min(o) - 1e-9 && v <= d.max(o) + 1e-9);
                }
                if let Some(p) = prev {
                    // source gap times the weight step across one sample
                    let bound = 12.0 * (1.0 / 30.0) + 1e-6;
                    prop_assert!((s.left - p.left).abs() <= bound + 1e-3);
                }
                prev = Some(*s);
            }
        }
    }
}
