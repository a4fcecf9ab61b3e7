//! Cubic Hermite splines with Catmull-Rom tangents and arc-length queries.
//!
//! The curve parameter runs over `[0, n-1]` for `n` control points; knot `i`
//! sits at parameter `i`. Arc lengths come from adaptive Gauss-Legendre
//! quadrature of the speed `|p'(t)|`.

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Vec2};

const ARC_TOLERANCE: f64 = 1e-6;
const MAX_QUADRATURE_DEPTH: u32 = 24;

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// A sample along a curve at arc length `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcSample {
    pub s: f64,
    pub point: Vec2,
    pub heading: f64,
}

/// Interpolating cubic Hermite spline through 2D control points.
#[derive(Debug, Clone)]
pub struct HermiteSpline {
    points: Vec<Vec2>,
    tangents: Vec<Vec2>,
    /// Arc length from the first knot to knot `i`.
    knot_s: Vec<f64>,
}

impl HermiteSpline {
    /// Catmull-Rom tangents in the interior, one-sided differences at the ends.
    pub fn catmull_rom(points: &[Vec2]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a spline needs at least 2 control points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "control points {i} and {} coincide",
                i + 1
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidInput("non-finite control point".into()));
        }
        let n = points.len();
        let tangents = (0..n)
            .map(|i| match i {
                0 => points[1] - points[0],
                i if i == n - 1 => points[n - 1] - points[n - 2],
                i => (points[i + 1] - points[i - 1]) * 0.5,
            })
            .collect();
        Ok(Self::with_tangents(points.to_vec(), tangents))
    }

    /// Builds a spline from explicit tangents. Lengths must match.
    pub fn with_tangents(points: Vec<Vec2>, tangents: Vec<Vec2>) -> Self {
        assert_eq!(points.len(), tangents.len());
        assert!(points.len() >= 2);
        let mut spline = Self {
            points,
            tangents,
            knot_s: Vec::new(),
        };
        let mut s = 0.0;
        spline.knot_s.push(0.0);
        for seg in 0..spline.segment_count() {
            s += spline.segment_length(seg, 0.0, 1.0);
            spline.knot_s.push(s);
        }
        spline
    }

    pub fn control_points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn tangents(&self) -> &[Vec2] {
        &self.tangents
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    /// Total arc length.
    pub fn length(&self) -> f64 {
        *self.knot_s.last().unwrap()
    }

    /// Arc length at each knot.
    pub fn knot_arclengths(&self) -> &[f64] {
        &self.knot_s
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let max = self.segment_count() as f64;
        let t = t.clamp(0.0, max);
        let seg = (t.floor() as usize).min(self.segment_count() - 1);
        (seg, t - seg as f64)
    }

    fn eval_segment(&self, seg: usize, u: f64) -> Vec2 {
        let (p0, p1) = (self.points[seg], self.points[seg + 1]);
        let (m0, m1) = (self.tangents[seg], self.tangents[seg + 1]);
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        p0 * h00 + m0 * h10 + p1 * h01 + m1 * h11
    }

    fn derivative_segment(&self, seg: usize, u: f64) -> Vec2 {
        let (p0, p1) = (self.points[seg], self.points[seg + 1]);
        let (m0, m1) = (self.tangents[seg], self.tangents[seg + 1]);
        let u2 = u * u;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        p0 * d00 + m0 * d10 + p1 * d01 + m1 * d11
    }

    fn second_derivative_segment(&self, seg: usize, u: f64) -> Vec2 {
        let (p0, p1) = (self.points[seg], self.points[seg + 1]);
        let (m0, m1) = (self.tangents[seg], self.tangents[seg + 1]);
        p0 * (12.0 * u - 6.0)
            + m0 * (6.0 * u - 4.0)
            + p1 * (-12.0 * u + 6.0)
            + m1 * (6.0 * u - 2.0)
    }

    /// Position at curve parameter `t ∈ [0, n-1]` (clamped).
    pub fn eval(&self, t: f64) -> Vec2 {
        let (seg, u) = self.locate(t);
        self.eval_segment(seg, u)
    }

    pub fn derivative(&self, t: f64) -> Vec2 {
        let (seg, u) = self.locate(t);
        self.derivative_segment(seg, u)
    }

    /// Signed curvature at parameter `t` (positive turning left).
    pub fn curvature(&self, t: f64) -> f64 {
        let (seg, u) = self.locate(t);
        let d1 = self.derivative_segment(seg, u);
        let d2 = self.second_derivative_segment(seg, u);
        let speed = d1.norm();
        if speed < 1e-12 {
            return 0.0;
        }
        (d1.x * d2.y - d1.y * d2.x) / (speed * speed * speed)
    }

    fn speed(&self, seg: usize, u: f64) -> f64 {
        self.derivative_segment(seg, u).norm()
    }

    fn gauss_legendre(&self, seg: usize, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(x, w)| w * self.speed(seg, mid + half * x))
            .sum::<f64>()
            * half
    }

    fn adaptive(&self, seg: usize, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let left = self.gauss_legendre(seg, a, mid);
        let right = self.gauss_legendre(seg, mid, b);
        if depth >= MAX_QUADRATURE_DEPTH || (left + right - whole).abs() <= tol {
            return left + right;
        }
        self.adaptive(seg, a, mid, left, 0.5 * tol, depth + 1)
            + self.adaptive(seg, mid, b, right, 0.5 * tol, depth + 1)
    }

    /// Arc length of segment `seg` between local parameters `u0 <= u1`.
    fn segment_length(&self, seg: usize, u0: f64, u1: f64) -> f64 {
        if u1 <= u0 {
            return 0.0;
        }
        let whole = self.gauss_legendre(seg, u0, u1);
        self.adaptive(seg, u0, u1, whole, ARC_TOLERANCE, 0)
    }

    /// Arc length from the start to parameter `t`.
    pub fn arclength_at(&self, t: f64) -> f64 {
        let (seg, u) = self.locate(t);
        self.knot_s[seg] + self.segment_length(seg, 0.0, u)
    }

    /// Curve parameter at arc length `s` (clamped to the curve).
    pub fn param_at_arclength(&self, s: f64) -> f64 {
        let total = self.length();
        if s <= 0.0 {
            return 0.0;
        }
        if s >= total {
            return self.segment_count() as f64;
        }
        // last knot with knot_s <= s
        let seg = match self
            .knot_s
            .binary_search_by(|k| k.partial_cmp(&s).unwrap())
        {
            Ok(i) => return i as f64,
            Err(i) => (i - 1).min(self.segment_count() - 1),
        };
        let target = s - self.knot_s[seg];
        let seg_len = self.knot_s[seg + 1] - self.knot_s[seg];
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut u = (target / seg_len).clamp(0.0, 1.0);
        for _ in 0..50 {
            let f = self.segment_length(seg, 0.0, u) - target;
            if f.abs() < 1e-10 {
                break;
            }
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let d = self.speed(seg, u);
            let newton = if d > 1e-12 { u - f / d } else { f64::NAN };
            u = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        seg as f64 + u
    }

    /// Position at arc length `s`.
    pub fn point_at(&self, s: f64) -> Vec2 {
        self.eval(self.param_at_arclength(s))
    }

    /// Tangent direction at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let d = self.derivative(self.param_at_arclength(s));
        normalize_angle(d.y.atan2(d.x))
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.curvature(self.param_at_arclength(s))
    }

    pub fn sample_at(&self, s: f64) -> ArcSample {
        let t = self.param_at_arclength(s);
        let d = self.derivative(t);
        ArcSample {
            s,
            point: self.eval(t),
            heading: normalize_angle(d.y.atan2(d.x)),
        }
    }

    /// Samples at `s = 0, step, 2·step, …` up to the total length.
    ///
    /// When the curve is shorter than one step the two endpoints are
    /// returned. A zero-length curve yields no samples.
    pub fn sample_by_arclength(&self, step: f64) -> Result<Vec<ArcSample>> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sampling step must be positive, got {step}"
            )));
        }
        let total = self.length();
        if total <= 0.0 {
            return Ok(Vec::new());
        }
        // slack so that an exact multiple of the step is not lost to rounding
        let count = ((total + 1e-9) / step).floor() as usize;
        let mut samples: Vec<ArcSample> = (0..=count)
            .map(|k| self.sample_at((k as f64 * step).min(total)))
            .collect();
        if count == 0 {
            samples.push(self.sample_at(total));
        }
        Ok(samples)
    }

    /// Closest point on the curve to `p`: returns `(s, signed lateral offset)`
    /// with positive offsets to the left of the travel direction.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        const SUB: usize = 16;
        let mut best = (0.0, f64::INFINITY);
        for seg in 0..self.segment_count() {
            for k in 0..=SUB {
                let t = seg as f64 + k as f64 / SUB as f64;
                let d = (self.eval(t) - p).norm_squared();
                if d < best.1 {
                    best = (t, d);
                }
            }
        }
        // Newton refinement on g(t) = (c(t) - p)·c'(t)
        let mut t = best.0;
        let max_t = self.segment_count() as f64;
        for _ in 0..20 {
            let (seg, u) = self.locate(t);
            let c = self.eval_segment(seg, u);
            let d1 = self.derivative_segment(seg, u);
            let d2 = self.second_derivative_segment(seg, u);
            let g = (c - p).dot(&d1);
            let dg = d1.dot(&d1) + (c - p).dot(&d2);
            if dg.abs() < 1e-14 {
                break;
            }
            let next = (t - g / dg).clamp((t - 0.5).max(0.0), (t + 0.5).min(max_t));
            if (next - t).abs() < 1e-12 {
                t = next;
                break;
            }
            t = next;
        }
        let c = self.eval(t);
        let d1 = self.derivative(t);
        let offset = p - c;
        let side = d1.x * offset.y - d1.y * offset.x;
        let dist = offset.norm();
        (self.arclength_at(t), if side >= 0.0 { dist } else { -dist })
    }
}

/// Cubic Hermite interpolation of a scalar function over strictly increasing
/// abscissae, with finite-difference (Catmull-Rom style) slopes.
#[derive(Debug, Clone)]
pub struct Profile1d {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Profile1d {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidInput(
                "profile needs at least 2 (x, y) pairs of equal length".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "profile abscissae must be strictly increasing".into(),
            ));
        }
        let n = xs.len();
        let slopes = (0..n)
            .map(|i| {
                let (a, b) = match i {
                    0 => (0, 1),
                    i if i == n - 1 => (n - 2, n - 1),
                    i => (i - 1, i + 1),
                };
                (ys[b] - ys[a]) / (xs[b] - xs[a])
            })
            .collect();
        Ok(Self { xs, ys, slopes })
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn contains(&self, x: f64) -> bool {
        let (a, b) = self.x_range();
        x >= a && x <= b
    }

    /// Index of the interval containing `x` (clamped).
    pub fn interval(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&v| v <= x);
        i.saturating_sub(1).min(self.xs.len() - 2)
    }

    /// Value at `x`, or `None` outside the knot range.
    pub fn eval(&self, x: f64) -> Option<f64> {
        if !self.contains(x) {
            return None;
        }
        let i = self.interval(x);
        let h = self.xs[i + 1] - self.xs[i];
        let u = (x - self.xs[i]) / h;
        let u2 = u * u;
        let u3 = u2 * u;
        Some(
            (2.0 * u3 - 3.0 * u2 + 1.0) * self.ys[i]
                + (u3 - 2.0 * u2 + u) * h * self.slopes[i]
                + (-2.0 * u3 + 3.0 * u2) * self.ys[i + 1]
                + (u3 - u2) * h * self.slopes[i + 1],
        )
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec2> {
        v.iter().map(|&(x, y)| Vec2::new(x, y)).collect()
    }

    /// Power-basis evaluation of one Hermite segment, written independently of
    /// the blending-function form used by the implementation.
    fn hermite_power_basis(p0: Vec2, p1: Vec2, m0: Vec2, m1: Vec2, u: f64) -> Vec2 {
        let a = p0 * 2.0 - p1 * 2.0 + m0 + m1;
        let b = -p0 * 3.0 + p1 * 3.0 - m0 * 2.0 - m1;
        ((a * u + b) * u + m0) * u + p0
    }

    #[test]
    fn rejects_short_and_duplicate_input() {
        assert!(HermiteSpline::catmull_rom(&pts(&[(0.0, 0.0)])).is_err());
        assert!(HermiteSpline::catmull_rom(&pts(&[(0.0, 0.0), (1.0, 1.0), (1.0, 1.0)])).is_err());
    }

    #[test]
    fn collinear_points_stay_on_the_line() {
        let s = HermiteSpline::catmull_rom(&pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]))
            .unwrap();
        for k in 0..=300 {
            let t = k as f64 / 100.0;
            assert_eq!(s.eval(t).y, 0.0);
        }
        assert!((s.length() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn midpoint_matches_closed_form() {
        let p = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
        let s = HermiteSpline::catmull_rom(&p).unwrap();
        // one-sided tangent at the start, central difference in the middle
        let m0 = p[1] - p[0];
        let m1 = (p[2] - p[0]) * 0.5;
        let oracle = hermite_power_basis(p[0], p[1], m0, m1, 0.5);
        assert!((oracle - Vec2::new(0.5, 0.625)).norm() < 1e-15);
        assert!((s.eval(0.5) - oracle).norm() < 1e-12);
        let oracle2 = hermite_power_basis(p[1], p[2], m1, p[2] - p[1], 0.5);
        assert!((s.eval(1.5) - oracle2).norm() < 1e-12);
    }

    #[test]
    fn straight_segment_sampling() {
        let s = HermiteSpline::catmull_rom(&pts(&[(0.0, 0.0), (10.0, 0.0)])).unwrap();
        let samples = s.sample_by_arclength(2.0).unwrap();
        let ss: Vec<f64> = samples.iter().map(|a| a.s).collect();
        assert_eq!(ss.len(), 6);
        for (k, v) in ss.iter().enumerate() {
            assert!((v - 2.0 * k as f64).abs() < 1e-9);
            assert!((samples[k].point.x - 2.0 * k as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn step_longer_than_curve_gives_endpoints() {
        let s = HermiteSpline::catmull_rom(&pts(&[(0.0, 0.0), (3.0, 4.0)])).unwrap();
        let samples = s.sample_by_arclength(50.0).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].s, 0.0);
        assert!((samples[1].point - Vec2::new(3.0, 4.0)).norm() < 1e-9);
        assert!(s.sample_by_arclength(0.0).is_err());
    }

    #[test]
    fn quarter_circle_headings_rotate_uniformly() {
        let r = 20.0;
        let n = 1800;
        let p: Vec<Vec2> = (0..=n)
            .map(|k| {
                let a = 0.5 * PI * k as f64 / n as f64;
                Vec2::new(r * a.sin(), r * (1.0 - a.cos()))
            })
            .collect();
        let s = HermiteSpline::catmull_rom(&p).unwrap();
        assert!((s.length() - r * PI / 2.0).abs() < 1e-4);
        let samples = s.sample_by_arclength(r * PI / 8.0).unwrap();
        assert_eq!(samples.len(), 5);
        for w in samples.windows(2) {
            let dh = normalize_angle(w[1].heading - w[0].heading);
            assert!((dh - PI / 8.0).abs() < 1e-3, "heading step {dh}");
        }
    }

    #[test]
    fn projection_recovers_offsets() {
        let p: Vec<Vec2> = (0..20)
            .map(|k| {
                let x = k as f64 * 10.0;
                Vec2::new(x, 0.002 * x * x)
            })
            .collect();
        let s = HermiteSpline::catmull_rom(&p).unwrap();
        for &sq in &[5.0, 47.3, 120.0] {
            let a = s.sample_at(sq);
            let q = a.point + crate::geometry::left_normal(a.heading) * 1.5;
            let (sp, d) = s.project(q);
            assert!((sp - sq).abs() < 1e-6, "{sp} vs {sq}");
            assert!((d - 1.5).abs() < 1e-6);
        }
    }

    #[test]
    fn profile_interpolates_and_bounds() {
        let p = Profile1d::new(vec![0.0, 2.0, 4.0], vec![1.0, 3.0, 5.0]).unwrap();
        assert_eq!(p.eval(2.0), Some(3.0));
        assert!((p.eval(1.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(p.eval(4.5), None);
        assert!(Profile1d::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn interpolates_every_knot(raw in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 2..12)) {
            let p: Vec<Vec2> = raw.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            prop_assume!(p.windows(2).all(|w| (w[0] - w[1]).norm() > 1e-3));
            let s = HermiteSpline::catmull_rom(&p).unwrap();
            for (i, q) in p.iter().enumerate() {
                prop_assert!((s.eval(i as f64) - q).norm() <= 1e-12);
            }
            let ks = s.knot_arclengths();
            prop_assert!(ks.windows(2).all(|w| w[1] > w[0]));
        }

        #[test]
        fn samples_strictly_increase_with_uniform_chords(step in 0.5..5.0f64) {
            let p: Vec<Vec2> = (0..15).map(|k| {
                let a = k as f64 * 0.15;
                Vec2::new(60.0 * a.sin(), 60.0 * (1.0 - a.cos()))
            }).collect();
            let s = HermiteSpline::catmull_rom(&p).unwrap();
            let samples = s.sample_by_arclength(step).unwrap();
            for w in samples.windows(2) {
                prop_assert!(w[1].s > w[0].s);
                let chord = (w[1].point - w[0].point).norm();
                if (w[1].s - w[0].s - step).abs() < 1e-12 {
                    prop_assert!((chord - step).abs() <= 0.01 * step);
                }
            }
        }
    }
}
