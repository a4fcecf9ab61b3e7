//! Planar poses and rigid transforms.
//!
//! World coordinates are a local planar frame (x east, y north). The vehicle
//! frame has x pointing forward and y pointing left, with the origin at the
//! reference point of the ego vehicle.

use std::f64::consts::PI;

pub type Vec2 = nalgebra::Vector2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Unit vector pointing along `heading`.
pub fn direction(heading: f64) -> Vec2 {
    Vec2::new(heading.cos(), heading.sin())
}

/// Left-hand normal of `heading`.
pub fn left_normal(heading: f64) -> Vec2 {
    Vec2::new(-heading.sin(), heading.cos())
}

/// A position and heading in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn from_position(position: Vec2, heading: f64) -> Self {
        Self::new(position.x, position.y, heading)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Maps a point expressed in this pose's local frame into the parent frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        let (s, c) = self.heading.sin_cos();
        Vec2::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
        )
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, world: Vec2) -> Vec2 {
        let (s, c) = self.heading.sin_cos();
        let dx = world.x - self.x;
        let dy = world.y - self.y;
        Vec2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// `self ∘ delta`: applies a motion expressed in this pose's frame.
    pub fn compose(&self, delta: &Pose2) -> Pose2 {
        let p = self.transform_point(delta.position());
        Pose2::new(p.x, p.y, self.heading + delta.heading)
    }

    pub fn inverse(&self) -> Pose2 {
        let p = Pose2::new(0.0, 0.0, self.heading).inverse_transform_point(-self.position());
        Pose2::new(p.x, p.y, -self.heading)
    }

    /// The motion taking `self` to `other`, expressed in `self`'s frame.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        let p = self.inverse_transform_point(other.position());
        Pose2::new(p.x, p.y, other.heading - self.heading)
    }
}

/// Expresses a world point in the vehicle frame of `ego`.
pub fn to_vehicle_frame(p: Vec2, ego: &Pose2) -> Vec2 {
    ego.inverse_transform_point(p)
}

/// Inverse of [`to_vehicle_frame`].
pub fn from_vehicle_frame(p: Vec2, ego: &Pose2) -> Vec2 {
    ego.transform_point(p)
}

/// Lateral coordinate where a polyline (vehicle frame, ordered along travel)
/// first crosses the forward distance `x`, linearly interpolated.
pub fn lateral_at(polyline: &[Vec2], x: f64) -> Option<f64> {
    polyline.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if (a.x <= x && x <= b.x) || (b.x <= x && x <= a.x) {
            let dx = b.x - a.x;
            if dx.abs() < 1e-12 {
                Some(a.y)
            } else {
                Some(a.y + (x - a.x) / dx * (b.y - a.y))
            }
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_pose_is_identity_transform() {
        let ego = Pose2::default();
        let p = Vec2::new(3.5, -2.0);
        assert_eq!(to_vehicle_frame(p, &ego), p);
    }

    #[test]
    fn rotated_translated_ego() {
        let ego = Pose2::new(1.0, 1.0, FRAC_PI_2);
        let v = to_vehicle_frame(Vec2::new(1.0, 2.0), &ego);
        assert!((v.x - 1.0).abs() < 1e-12);
        assert!(v.y.abs() < 1e-12);
    }

    #[test]
    fn angles_wrap_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn compose_between_round_trip() {
        let a = Pose2::new(4.0, -1.0, 0.3);
        let b = Pose2::new(-2.0, 7.0, -2.9);
        let d = a.between(&b);
        let b2 = a.compose(&d);
        assert!((b2.x - b.x).abs() < 1e-12 && (b2.y - b.y).abs() < 1e-12);
        assert!(normalize_angle(b2.heading - b.heading).abs() < 1e-12);
        let inv = a.compose(&a.inverse());
        assert!(inv.position().norm() < 1e-12 && inv.heading.abs() < 1e-12);
    }

    #[test]
    fn lateral_lookup_interpolates_first_crossing() {
        let line = [Vec2::new(-1.0, 1.0), Vec2::new(1.0, 3.0), Vec2::new(3.0, 3.0), Vec2::new(0.0, 9.0)];
        assert_eq!(lateral_at(&line, 0.0), Some(2.0));
        assert_eq!(lateral_at(&line, 2.0), Some(3.0));
        assert_eq!(lateral_at(&line, 5.0), None);
    }

    proptest! {
        #[test]
        fn frame_round_trip(px in -1e3..1e3f64, py in -1e3..1e3f64,
                            ex in -1e3..1e3f64, ey in -1e3..1e3f64, h in -10.0..10.0f64) {
            let ego = Pose2::new(ex, ey, h);
            let p = Vec2::new(px, py);
            let back = from_vehicle_frame(to_vehicle_frame(p, &ego), &ego);
            prop_assert!((back - p).norm() < 1e-9);
            prop_assert!(ego.heading > -PI && ego.heading <= PI);
        }
    }
}
