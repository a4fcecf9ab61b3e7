//! Short-range road-course error against the ground-truth trajectory.

use std::fmt::Write as _;

use crate::fusion::FusedRoadCourse;
use crate::geometry::{lateral_at, Vec2};
use crate::sim::GroundTruthState;

/// Truth trajectory points at arc lengths `distances` ahead of `frame`,
/// expressed in the true vehicle frame. Distances beyond the end of the
/// trajectory give `None`.
pub fn truth_ahead(truth: &[GroundTruthState], frame: usize, distances: &[f64]) -> Vec<Option<Vec2>> {
    let ego = truth[frame].pose;
    let mut out = vec![None; distances.len()];
    let mut acc = 0.0;
    let mut prev = ego.position();
    let mut k = frame + 1;
    for (slot, &a) in out.iter_mut().zip(distances) {
        if a <= 0.0 {
            *slot = Some(Vec2::new(0.0, 0.0));
            continue;
        }
        while k < truth.len() {
            let next = truth[k].pose.position();
            let seg = (next - prev).norm();
            if acc + seg >= a {
                let u = if seg > 0.0 { (a - acc) / seg } else { 0.0 };
                *slot = Some(ego.inverse_transform_point(prev + u * (next - prev)));
                break;
            }
            acc += seg;
            prev = next;
            k += 1;
        }
    }
    out
}

/// Lateral error of the estimated ego-lane center against each truth point.
pub fn course_errors(course: &FusedRoadCourse, truth_pts: &[Option<Vec2>]) -> Vec<Option<f64>> {
    let center = course.ego_lane_center();
    truth_pts
        .iter()
        .map(|p| {
            let p = (*p)?;
            let y = lateral_at(&center, p.x)?;
            Some((y - p.y).abs())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub distances: Vec<f64>,
    /// Mean error per distance (`None` where no frame contributed).
    pub profile: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    /// Mean over distances of the per-distance means.
    pub mean_error: f64,
    pub frames: usize,
    /// Fraction of frames with a valid optical map.
    pub availability: f64,
}

/// Accumulates per-frame error rows.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    distances: Vec<f64>,
    sums: Vec<f64>,
    counts: Vec<usize>,
    frames: usize,
    available: usize,
}

impl ErrorAccumulator {
    pub fn new(distances: Vec<f64>) -> Self {
        let n = distances.len();
        Self {
            distances,
            sums: vec![0.0; n],
            counts: vec![0; n],
            frames: 0,
            available: 0,
        }
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Adds one frame; `errors` may be empty when no course was available.
    pub fn push(&mut self, errors: &[Option<f64>], optical_valid: bool) {
        self.frames += 1;
        self.available += optical_valid as usize;
        for (i, e) in errors.iter().enumerate() {
            if let Some(e) = e {
                self.sums[i] += e;
                self.counts[i] += 1;
            }
        }
    }

    pub fn report(&self) -> EvaluationReport {
        let profile: Vec<Option<f64>> = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        let vals: Vec<f64> = profile.iter().flatten().copied().collect();
        let mean_error = if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        EvaluationReport {
            distances: self.distances.clone(),
            profile,
            counts: self.counts.clone(),
            mean_error,
            frames: self.frames,
            availability: if self.frames == 0 {
                0.0
            } else {
                self.available as f64 / self.frames as f64
            },
        }
    }
}

/// `0, step, 2·step, …, range`.
pub fn eval_distances(range: f64, step: f64) -> Vec<f64> {
    let n = (range / step + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

impl EvaluationReport {
    /// `d_m,error_m,count` rows, empty error where nothing was measured.
    pub fn profile_csv(&self) -> String {
        let mut out = String::from("d_m,error_m,count\n");
        for ((d, e), c) in self.distances.iter().zip(&self.profile).zip(&self.counts) {
            match e {
                Some(e) => writeln!(out, "{d:.2},{e:.6},{c}"),
                None => writeln!(out, "{d:.2},,{c}"),
            }
            .expect("write to string");
        }
        out
    }
}
