//! Temporal binning of border observations into the optical map.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::config::ShapingConfig;
use crate::detection::BorderObservation;
use crate::dmap::Side;
use crate::geometry::{Pose2, Vec2};
use crate::spline::Profile1d;

/// Median and Tukey-hinge quartiles (the median joins both halves for odd
/// counts). `None` for an empty slice.
pub fn hinges(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let med = |s: &[f64]| {
        let m = s.len();
        if m % 2 == 1 {
            s[m / 2]
        } else {
            0.5 * (s[m / 2 - 1] + s[m / 2])
        }
    };
    let half = n.div_ceil(2);
    Some((med(&v[..half]), med(&v), med(&v[n - half..])))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderBin {
    pub s_range: (f64, f64),
    pub count: usize,
    /// Median forward distance of the samples.
    pub median_x: f64,
    /// Median lateral offset of the samples.
    pub median: f64,
    pub iqr: f64,
    pub reliable: bool,
}

impl BorderBin {
    fn from_samples(s_range: (f64, f64), samples: &[Vec2], cfg: &ShapingConfig) -> Self {
        let xs: Vec<f64> = samples.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = samples.iter().map(|p| p.y).collect();
        match (hinges(&xs), hinges(&ys)) {
            (Some((_, mx, _)), Some((q1, my, q3))) => {
                let iqr = q3 - q1;
                Self {
                    s_range,
                    count: samples.len(),
                    median_x: mx,
                    median: my,
                    iqr,
                    reliable: samples.len() >= cfg.min_count && iqr <= cfg.iqr_max,
                }
            }
            _ => Self {
                s_range,
                count: 0,
                median_x: f64::NAN,
                median: f64::NAN,
                iqr: f64::NAN,
                reliable: false,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Measured,
    Extrapolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalPoint {
    pub x: f64,
    pub y: f64,
    pub src: Provenance,
}

/// Per-side sample history in the current vehicle frame.
#[derive(Debug, Clone)]
pub struct BinStore {
    cfg: ShapingConfig,
    left: VecDeque<Vec<Vec2>>,
    right: VecDeque<Vec<Vec2>>,
}

impl BinStore {
    pub fn new(cfg: &ShapingConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            left: VecDeque::new(),
            right: VecDeque::new(),
        }
    }

    pub fn config(&self) -> &ShapingConfig {
        &self.cfg
    }

    pub fn bin_count(&self) -> usize {
        (self.cfg.max_range / self.cfg.bin_length).ceil() as usize
    }

    fn history(&self, side: Side) -> &VecDeque<Vec<Vec2>> {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn in_range(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.x < self.cfg.max_range
    }

    /// Moves stored samples by the inverse of `delta` (the ego motion since
    /// the previous frame, in the previous vehicle frame), then appends this
    /// frame's ground points. Frames older than the history length expire.
    pub fn accumulate(&mut self, observations: &[BorderObservation], delta: &Pose2) {
        let max = self.cfg.max_range;
        let cap = self.cfg.history.max(1);
        for side in Side::BOTH {
            let frame: Vec<Vec2> = observations
                .iter()
                .filter(|o| o.side == side && o.ignored.is_none())
                .filter_map(|o| o.ground)
                .filter(|p| self.in_range(p))
                .collect();
            let hist = match side {
                Side::Left => &mut self.left,
                Side::Right => &mut self.right,
            };
            for f in hist.iter_mut() {
                f.retain_mut(|p| {
                    *p = delta.inverse_transform_point(*p);
                    p.x >= 0.0 && p.x < max
                });
            }
            hist.push_back(frame);
            while hist.len() > cap {
                hist.pop_front();
            }
        }
    }

    pub fn samples(&self, side: Side) -> impl Iterator<Item = &Vec2> {
        self.history(side).iter().flatten()
    }

    pub fn bins(&self, side: Side) -> Vec<BorderBin> {
        let n = self.bin_count();
        let len = self.cfg.bin_length;
        let mut buckets: Vec<Vec<Vec2>> = vec![Vec::new(); n];
        for p in self.samples(side) {
            let k = (p.x / len).floor() as usize;
            if k < n {
                buckets[k].push(*p);
            }
        }
        buckets
            .iter()
            .enumerate()
            .map(|(k, b)| BorderBin::from_samples((k as f64 * len, (k + 1) as f64 * len), b, &self.cfg))
            .collect()
    }

    /// Builds the optical map. `road_width` comes from the digital map's
    /// lane metadata and drives cross-border extrapolation.
    pub fn shape(&self, road_width: f64) -> OpticalMap {
        let left = self.bins(Side::Left);
        let right = self.bins(Side::Right);
        let measured = |bins: &[BorderBin]| -> Vec<Option<OpticalPoint>> {
            bins.iter()
                .map(|b| {
                    b.reliable.then_some(OpticalPoint {
                        x: b.median_x,
                        y: b.median,
                        src: Provenance::Measured,
                    })
                })
                .collect()
        };
        let mut lp = measured(&left);
        let mut rp = measured(&right);
        let lm = lp.clone();
        let rm = rp.clone();
        extrapolate(&mut lp, &rm, Side::Left, road_width, self.cfg.max_gap_bins);
        extrapolate(&mut rp, &lm, Side::Right, road_width, self.cfg.max_gap_bins);
        let n_measured = |v: &[Option<OpticalPoint>]| v.iter().flatten().filter(|p| p.src == Provenance::Measured).count();
        let valid = n_measured(&lp) >= 2 || n_measured(&rp) >= 2;
        let lpts = monotone(lp.iter().flatten().copied().collect());
        let rpts = monotone(rp.iter().flatten().copied().collect());
        let profile = |pts: &[OpticalPoint]| {
            if !valid {
                return None;
            }
            Profile1d::new(pts.iter().map(|p| p.x).collect(), pts.iter().map(|p| p.y).collect()).ok()
        };
        let lprof = profile(&lpts);
        let rprof = profile(&rpts);
        let center = match (&lprof, &rprof) {
            (Some(l), Some(r)) => {
                let len = self.cfg.bin_length;
                let (xs, ys): (Vec<f64>, Vec<f64>) = (0..=self.bin_count())
                    .map(|k| k as f64 * len)
                    .chain([self.cfg.max_range])
                    .filter_map(|x| Some((x, 0.5 * (l.eval(x)? + r.eval(x)?))))
                    .unzip();
                let mut pts: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
                pts.dedup_by(|a, b| a.0 <= b.0);
                Profile1d::new(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect()).ok()
            }
            _ => None,
        };
        OpticalMap {
            bin_length: self.cfg.bin_length,
            left_bins: left,
            right_bins: right,
            left_points: lp,
            right_points: rp,
            left: lprof,
            right: rprof,
            center,
            valid,
        }
    }
}

/// Keeps points with strictly increasing x.
fn monotone(pts: Vec<OpticalPoint>) -> Vec<OpticalPoint> {
    let mut out: Vec<OpticalPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().is_none_or(|q| p.x > q.x) {
            out.push(p);
        }
    }
    out
}

/// Fills runs of missing points longer than `max_gap` on `target` from the
/// `other` side's measured points, offset by `width` along that side's
/// inward normal.
fn extrapolate(
    target: &mut [Option<OpticalPoint>],
    other: &[Option<OpticalPoint>],
    side: Side,
    width: f64,
    max_gap: usize,
) {
    let n = target.len();
    let mut k = 0;
    while k < n {
        if target[k].is_some() {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && target[k].is_none() {
            k += 1;
        }
        if k - start <= max_gap {
            continue;
        }
        for i in start..k {
            let Some(o) = other[i] else { continue };
            let dir = local_direction(other, i);
            // left normal of the other border, pointing toward `side`
            let nrm = Vec2::new(-dir.y, dir.x) * side.sign();
            let p = Vec2::new(o.x, o.y) + width * nrm;
            target[i] = Some(OpticalPoint {
                x: p.x,
                y: p.y,
                src: Provenance::Extrapolated,
            });
        }
    }
}

/// Unit direction of a border at point `i` from its nearest neighbours.
fn local_direction(pts: &[Option<OpticalPoint>], i: usize) -> Vec2 {
    let at = |j: usize| pts[j].map(|p| Vec2::new(p.x, p.y));
    let prev = (0..i).rev().find_map(at);
    let next = (i + 1..pts.len()).find_map(at);
    let here = at(i).expect("point present");
    let d = match (prev, next) {
        (Some(a), Some(b)) => b - a,
        (Some(a), None) => here - a,
        (None, Some(b)) => b - here,
        (None, None) => Vec2::new(1.0, 0.0),
    };
    if d.norm() > 0.0 {
        d / d.norm()
    } else {
        Vec2::new(1.0, 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct OpticalMap {
    pub bin_length: f64,
    pub left_bins: Vec<BorderBin>,
    pub right_bins: Vec<BorderBin>,
    /// Shape point per bin (measured or extrapolated), before monotone
    /// filtering.
    pub left_points: Vec<Option<OpticalPoint>>,
    pub right_points: Vec<Option<OpticalPoint>>,
    pub left: Option<Profile1d>,
    pub right: Option<Profile1d>,
    pub center: Option<Profile1d>,
    pub valid: bool,
}

impl OpticalMap {
    pub fn border(&self, side: Side) -> Option<&Profile1d> {
        match side {
            Side::Left => self.left.as_ref(),
            Side::Right => self.right.as_ref(),
        }
    }

    fn points(&self, side: Side) -> &[Option<OpticalPoint>] {
        match side {
            Side::Left => &self.left_points,
            Side::Right => &self.right_points,
        }
    }

    /// Lateral offset at forward distance `x` and whether the nearest
    /// shape point at or around `x` was extrapolated. Below the first knot
    /// the border is continued linearly for one bin length.
    pub fn lateral(&self, side: Side, x: f64) -> Option<(f64, bool)> {
        let prof = self.border(side)?;
        let (x0, _) = prof.x_range();
        let y = if x < x0 && x >= x0 - self.bin_length {
            let mut k = prof.knots();
            let (a, ya) = k.next()?;
            let (b, yb) = k.next()?;
            ya + (x - a) * (yb - ya) / (b - a)
        } else {
            prof.eval(x)?
        };
        let pts = self.points(side);
        let k = ((x / self.bin_length).floor().max(0.0) as usize).min(pts.len().saturating_sub(1));
        let near = (0..pts.len())
            .filter_map(|i| pts[i].map(|p| (i.abs_diff(k), p.src)))
            .min_by_key(|(d, _)| *d)
            .map(|(_, s)| s == Provenance::Extrapolated)
            .unwrap_or(false);
        Some((y, near))
    }

    /// Rows `s_m,left_y_m,left_src,right_y_m,right_src,reliable_left,reliable_right`
    /// at bin centers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s_m,left_y_m,left_src,right_y_m,right_src,reliable_left,reliable_right\n");
        for (k, (lb, rb)) in self.left_bins.iter().zip(&self.right_bins).enumerate() {
            let s = (k as f64 + 0.5) * self.bin_length;
            let cell = |side: Side| -> (String, &'static str) {
                let src = match self.points(side)[k] {
                    Some(p) if p.src == Provenance::Measured => "measured",
                    Some(_) => "extrapolated",
                    None => "none",
                };
                match self.border(side).and_then(|p| p.eval(s)) {
                    Some(y) => (format!("{y:.4}"), if src == "none" { "interpolated" } else { src }),
                    None => (String::new(), "none"),
                }
            };
            let (ly, ls) = cell(Side::Left);
            let (ry, rs) = cell(Side::Right);
            let _ = writeln!(out, "{s:.2},{ly},{ls},{ry},{rs},{},{}", lb.reliable as u8, rb.reliable as u8);
        }
        out
    }
}
