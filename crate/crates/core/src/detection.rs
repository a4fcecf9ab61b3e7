//! Road border extraction from a class membership map.

use std::collections::VecDeque;

use crate::camera::Camera;
use crate::config::DetectionConfig;
use crate::dmap::Side;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::image::{GrayImage, Grid2};
use crate::labels::{ClassId, ClassMembershipMap};

/// Contours shorter than this are rejected.
pub const MIN_CONTOUR: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub mask: Grid2<bool>,
    /// Pixels of the selected component before hole filling.
    pub component_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IgnoreReason {
    ImageBorder,
    Occluded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderObservation {
    pub side: Side,
    pub row: usize,
    pub col: usize,
    /// Sub-pixel image position `(col, row)` of the road edge at this pixel.
    pub edge: (f64, f64),
    pub ground: Option<Vec2>,
    pub ignored: Option<IgnoreReason>,
}

#[derive(Debug, Clone, Default)]
pub struct Detection {
    /// Observations with a ground point.
    pub observations: Vec<BorderObservation>,
    /// Observations flagged image-border or occluded.
    pub ignored: Vec<BorderObservation>,
    /// Non-ignored observations at or above the horizon.
    pub dropped_horizon: usize,
    pub contour: Vec<(usize, usize)>,
}

impl Detection {
    pub fn side(&self, side: Side) -> impl Iterator<Item = &BorderObservation> {
        self.observations.iter().filter(move |o| o.side == side)
    }
}

const N4: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];
const N8: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)];

fn offset(w: usize, h: usize, r: usize, c: usize, d: (isize, isize)) -> Option<(usize, usize)> {
    let rr = r as isize + d.0;
    let cc = c as isize + d.1;
    (rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w).then(|| (rr as usize, cc as usize))
}

/// Labels the 8-connected components of `fg`; returns the pixels of the
/// largest one (first in raster order on ties).
fn largest_component(fg: &Grid2<bool>) -> Vec<(usize, usize)> {
    let (w, h) = (fg.width(), fg.height());
    let mut seen = Grid2::filled(w, h, false);
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if !*fg.get(r, c) || *seen.get(r, c) {
                continue;
            }
            let mut comp = Vec::new();
            seen.set(r, c, true);
            queue.push_back((r, c));
            while let Some((pr, pc)) = queue.pop_front() {
                comp.push((pr, pc));
                for d in N8 {
                    if let Some((qr, qc)) = offset(w, h, pr, pc, d) {
                        if *fg.get(qr, qc) && !*seen.get(qr, qc) {
                            seen.set(qr, qc, true);
                            queue.push_back((qr, qc));
                        }
                    }
                }
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
    }
    best
}

/// Sets every pixel not 4-reachable from the image border through
/// non-mask pixels.
pub fn fill_holes(mask: &Grid2<bool>) -> Grid2<bool> {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = Grid2::filled(w, h, false);
    let mut queue = VecDeque::new();
    let seed = |r: usize, c: usize, outside: &mut Grid2<bool>, q: &mut VecDeque<(usize, usize)>| {
        if !*mask.get(r, c) && !*outside.get(r, c) {
            outside.set(r, c, true);
            q.push_back((r, c));
        }
    };
    for c in 0..w {
        seed(0, c, &mut outside, &mut queue);
        seed(h - 1, c, &mut outside, &mut queue);
    }
    for r in 0..h {
        seed(r, 0, &mut outside, &mut queue);
        seed(r, w - 1, &mut outside, &mut queue);
    }
    while let Some((r, c)) = queue.pop_front() {
        for d in N4 {
            if let Some((qr, qc)) = offset(w, h, r, c, d) {
                if !*mask.get(qr, qc) && !*outside.get(qr, qc) {
                    outside.set(qr, qc, true);
                    queue.push_back((qr, qc));
                }
            }
        }
    }
    outside.map(|o| !o)
}

/// Largest 8-connected road component with its holes filled.
pub fn segment_road(labels: &ClassMembershipMap, cfg: &DetectionConfig) -> Result<RoadSegment> {
    let (w, h) = (labels.width(), labels.height());
    let road = labels.labels().map(|&l| l == ClassId::Road as u8);
    let comp = largest_component(&road);
    let min = (cfg.min_component_fraction * (w * h) as f64).max(1.0);
    if comp.is_empty() {
        return Err(Error::NoRoad("no road pixels".into()));
    }
    if (comp.len() as f64) < min {
        return Err(Error::NoRoad(format!(
            "largest road component has {} pixels, need {min:.0}",
            comp.len()
        )));
    }
    let mut mask = Grid2::filled(w, h, false);
    for &(r, c) in &comp {
        mask.set(r, c, true);
    }
    Ok(RoadSegment {
        mask: fill_holes(&mask),
        component_size: comp.len(),
    })
}

/// Moore-neighbor tracing of the outer boundary of the (single, 8-connected)
/// foreground of `mask`, stopped by Jacob's criterion. Pixels outside the
/// image count as background. The result runs counter-clockwise on screen.
pub fn trace_contour(mask: &Grid2<bool>) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let Some(start) = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).find(|&(r, c)| *mask.get(r, c)) else {
        return Vec::new();
    };
    let fg = |p: (usize, usize), d: (isize, isize)| offset(w, h, p.0, p.1, d).filter(|&(r, c)| *mask.get(r, c));
    // clockwise on screen, starting west
    const RING: [(isize, isize); 8] = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)];
    let dir_of = |d: (isize, isize)| RING.iter().position(|&x| x == d).expect("neighbour");
    let step = |p: (usize, usize), back: usize| -> Option<((usize, usize), usize)> {
        for k in 1..=8 {
            if let Some(q) = fg(p, RING[(back + k) % 8]) {
                let b = RING[(back + k - 1) % 8];
                let b_abs = (p.0 as isize + b.0, p.1 as isize + b.1);
                return Some((q, dir_of((b_abs.0 - q.0 as isize, b_abs.1 - q.1 as isize))));
            }
        }
        None
    };
    // west of the first raster pixel is background
    let Some(first) = step(start, 0) else {
        return vec![start];
    };
    let mut contour = vec![start];
    let mut state = first;
    for _ in 0..8 * w * h + 8 {
        contour.push(state.0);
        state = step(state.0, state.1).expect("traced pixel has a neighbour");
        if state == first {
            break;
        }
    }
    // the closing move re-enters the start pixel
    if contour.last() == Some(&start) {
        contour.pop();
    }
    contour.reverse();
    contour
}

/// Pixels within Chebyshev distance `r` of a road-user pixel.
fn occlusion_mask(labels: &ClassMembershipMap, r: usize, include_vru: bool) -> Grid2<bool> {
    let (w, h) = (labels.width(), labels.height());
    let user = labels.labels().map(|&l| {
        l == ClassId::Vehicle as u8 || (include_vru && l == ClassId::Vru as u8)
    });
    let mut rows = Grid2::filled(w, h, false);
    for row in 0..h {
        for c in 0..w {
            if *user.get(row, c) {
                for cc in c.saturating_sub(r)..=(c + r).min(w - 1) {
                    rows.set(row, cc, true);
                }
            }
        }
    }
    let mut out = Grid2::filled(w, h, false);
    for row in 0..h {
        for c in 0..w {
            if *rows.get(row, c) {
                for rr in row.saturating_sub(r)..=(row + r).min(h - 1) {
                    out.set(rr, c, true);
                }
            }
        }
    }
    out
}

/// Sub-pixel image point `(col, row)` where the road run through the pixel
/// ends on the given side of the contour: the left end for the left border,
/// the right end for the right one. Lateral non-road neighbours are used
/// directly; otherwise the row is scanned outwards.
fn edge_point(mask: &Grid2<bool>, r: usize, c: usize, side: Side) -> (f64, f64) {
    let w = mask.width();
    let road = |cc: usize| *mask.get(r, cc);
    let left_open = c == 0 || !road(c - 1);
    let right_open = c + 1 == w || !road(c + 1);
    let row = r as f64 + 0.5;
    match (left_open, right_open) {
        (true, true) => (c as f64 + 0.5, row),
        (true, false) => (c as f64, row),
        (false, true) => (c as f64 + 1.0, row),
        (false, false) => {
            let mut cc = c;
            if side == Side::Left {
                while cc > 0 && road(cc - 1) {
                    cc -= 1;
                }
                (cc as f64, row)
            } else {
                while cc + 1 < w && road(cc + 1) {
                    cc += 1;
                }
                (cc as f64 + 1.0, row)
            }
        }
    }
}

/// Splits the contour at its apex and at its bottom point, and flags
/// image-border and occluded pixels.
pub fn extract_borders(
    segment: &RoadSegment,
    labels: &ClassMembershipMap,
    cfg: &DetectionConfig,
) -> Result<(Vec<BorderObservation>, Vec<(usize, usize)>)> {
    let contour = trace_contour(&segment.mask);
    if contour.len() < MIN_CONTOUR {
        return Err(Error::NoBorder(format!(
            "contour has {} pixels, need {MIN_CONTOUR}",
            contour.len()
        )));
    }
    let (w, h) = (segment.mask.width(), segment.mask.height());
    let center = (w as f64 - 1.0) / 2.0;
    let pick = |better: &dyn Fn(usize, usize) -> bool| {
        let mut best = 0;
        for i in 1..contour.len() {
            if better(i, best) {
                best = i;
            }
        }
        best
    };
    let dc = |i: usize| (contour[i].1 as f64 - center).abs();
    let apex = pick(&|i, b| contour[i].0 < contour[b].0 || (contour[i].0 == contour[b].0 && dc(i) < dc(b)));
    let bottom = pick(&|i, b| contour[i].0 > contour[b].0 || (contour[i].0 == contour[b].0 && dc(i) < dc(b)));
    let n = contour.len();
    let chain = |from: usize, to: usize| -> Vec<usize> {
        let mut v = Vec::new();
        let mut i = from;
        loop {
            v.push(i);
            if i == to {
                break;
            }
            i = (i + 1) % n;
        }
        v
    };
    let a = chain(apex, bottom);
    let b = chain(bottom, apex);
    let mean_col = |ch: &[usize]| ch.iter().map(|&i| contour[i].1 as f64).sum::<f64>() / ch.len() as f64;
    let (left, right) = if mean_col(&a) <= mean_col(&b) { (a, b) } else { (b, a) };
    let occl = occlusion_mask(labels, cfg.occlusion_radius, cfg.occlude_vru);
    let mut obs = Vec::with_capacity(n + 2);
    for (side, ch) in [(Side::Left, left), (Side::Right, right)] {
        for i in ch {
            // apex and bottom end both chains; keep them on the left only
            if side == Side::Right && (i == apex || i == bottom) {
                continue;
            }
            let (r, c) = contour[i];
            let ignored = if r == 0 || c == 0 || r + 1 == h || c + 1 == w {
                Some(IgnoreReason::ImageBorder)
            } else if *occl.get(r, c) {
                Some(IgnoreReason::Occluded)
            } else {
                None
            };
            obs.push(BorderObservation {
                side,
                row: r,
                col: c,
                edge: edge_point(&segment.mask, r, c, side),
                ground: None,
                ignored,
            });
        }
    }
    Ok((obs, contour))
}

/// Flat-ground back-projection of an observation's edge point. Returns
/// `None` for ignored observations and at or above the horizon.
pub fn project_to_ground(obs: &BorderObservation, camera: &Camera) -> Option<BorderObservation> {
    if obs.ignored.is_some() || !camera.below_horizon(obs.row) {
        return None;
    }
    let g = camera.back_project(obs.edge.0, obs.edge.1)?;
    Some(BorderObservation { ground: Some(g), ..*obs })
}

/// Full detection chain for one frame.
pub fn detect(labels: &ClassMembershipMap, camera: &Camera, cfg: &DetectionConfig) -> Result<Detection> {
    let seg = segment_road(labels, cfg)?;
    let (obs, contour) = extract_borders(&seg, labels, cfg)?;
    let mut out = Detection {
        contour,
        ..Detection::default()
    };
    for o in obs {
        if o.ignored.is_some() {
            out.ignored.push(o);
        } else if let Some(g) = project_to_ground(&o, camera) {
            out.observations.push(g);
        } else {
            out.dropped_horizon += 1;
        }
    }
    if out.dropped_horizon > 0 {
        log::debug!("{} border pixels at or above the horizon dropped", out.dropped_horizon);
    }
    Ok(out)
}

/// Debug view: mask gray, left border white, right border light gray,
/// ignored pixels dark.
pub fn debug_image(mask: &Grid2<bool>, det: &Detection) -> GrayImage {
    let mut img = mask.map(|&m| if m { 96u8 } else { 0 });
    for o in &det.observations {
        img.set(o.row, o.col, if o.side == Side::Left { 255 } else { 200 });
    }
    for o in &det.ignored {
        img.set(o.row, o.col, 40);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels_from(rows: &[&str]) -> ClassMembershipMap {
        let h = rows.len();
        let w = rows[0].len();
        let g = Grid2::from_fn(w, h, |r, c| match rows[r].as_bytes()[c] {
            b'R' => ClassId::Road as u8,
            b'V' => ClassId::Vehicle as u8,
            b'P' => ClassId::Vru as u8,
            b'S' => ClassId::Sky as u8,
            _ => ClassId::Background as u8,
        });
        ClassMembershipMap::from_labels(g).unwrap()
    }

    fn no_min() -> DetectionConfig {
        DetectionConfig {
            min_component_fraction: 0.0,
            ..DetectionConfig::default()
        }
    }

    #[test]
    fn keeps_largest_blob() {
        let l = labels_from(&["RR....", "RR...R", "RRR..R", "....RR", "R....."]);
        let seg = segment_road(&l, &no_min()).unwrap();
        let count = seg.mask.as_slice().iter().filter(|&&m| m).count();
        assert_eq!(seg.component_size, 7);
        assert_eq!(count, 7);
        assert!(!*seg.mask.get(4, 0) && !*seg.mask.get(1, 5));
        let l = labels_from(&["RRRR......", "RRRR....RR", "RRR.....RR"]);
        let seg = segment_road(&l, &no_min()).unwrap();
        assert_eq!(seg.component_size, 11);
        assert!(!*seg.mask.get(1, 8));
    }

    #[test]
    fn ring_hole_is_filled() {
        let l = labels_from(&[".....", ".RRR.", ".R.R.", ".RRR.", "....."]);
        let seg = segment_road(&l, &no_min()).unwrap();
        assert!(*seg.mask.get(2, 2));
        assert_eq!(seg.component_size, 8);
    }

    #[test]
    fn no_road_and_tiny_road_errors() {
        let l = labels_from(&["....", "...."]);
        assert!(matches!(segment_road(&l, &no_min()), Err(Error::NoRoad(_))));
        let l = ClassMembershipMap::filled(100, 100, ClassId::Background);
        let mut l2 = l.clone();
        l2.set_class(5, 5, ClassId::Road);
        assert!(matches!(
            segment_road(&l2, &DetectionConfig::default()),
            Err(Error::NoRoad(_))
        ));
    }

    #[test]
    fn short_contour_is_no_border() {
        let l = labels_from(&[".....", ".RR..", ".RR..", "....."]);
        let seg = segment_road(&l, &no_min()).unwrap();
        assert!(matches!(extract_borders(&seg, &l, &no_min()), Err(Error::NoBorder(_))));
    }

    #[test]
    fn rectangle_touching_bottom() {
        let mut rows = vec!["..........".to_string(); 3];
        for _ in 0..5 {
            rows.push("..RRRRRR..".into());
        }
        let r: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let l = labels_from(&r);
        let seg = segment_road(&l, &no_min()).unwrap();
        let (obs, _) = extract_borders(&seg, &l, &no_min()).unwrap();
        for o in &obs {
            if o.row == 7 {
                assert_eq!(o.ignored, Some(IgnoreReason::ImageBorder));
            } else {
                assert!(o.ignored.is_none());
            }
            if o.row > 3 && o.row < 7 {
                let expect = if o.side == Side::Left { 2 } else { 7 };
                assert_eq!(o.col, expect, "{o:?}");
            }
        }
        let left_edge: Vec<_> = obs.iter().filter(|o| o.side == Side::Left && o.col == 2 && o.row < 7).collect();
        assert_eq!(left_edge.len(), 4);
        assert!(left_edge.iter().all(|o| o.edge == (2.0, o.row as f64 + 0.5)));
        let right_edge: Vec<_> = obs.iter().filter(|o| o.side == Side::Right && o.col == 7 && o.row > 3 && o.row < 7).collect();
        assert!(right_edge.iter().all(|o| o.edge == (8.0, o.row as f64 + 0.5)));
    }

    #[test]
    fn occluder_flags_adjacent_right_border() {
        let rows = [
            "............",
            "...RRRRRR...",
            "...RRRRRVV..",
            "...RRRRRVV..",
            "...RRRRRR...",
            "...RRRRRR...",
            "...RRRRRR...",
        ];
        let l = labels_from(&rows);
        let cfg = DetectionConfig {
            occlusion_radius: 1,
            ..no_min()
        };
        let seg = segment_road(&l, &cfg).unwrap();
        let (obs, _) = extract_borders(&seg, &l, &cfg).unwrap();
        for o in obs.iter().filter(|o| o.side == Side::Right && o.row < 6) {
            let near = (1..=4).contains(&o.row) && o.col >= 7;
            assert_eq!(o.ignored == Some(IgnoreReason::Occluded), near, "{o:?}");
        }
        assert!(obs.iter().filter(|o| o.side == Side::Left).all(|o| o.ignored != Some(IgnoreReason::Occluded)));
    }

    #[test]
    fn vru_occlusion_is_configurable() {
        let rows = ["........", ".RRRRRR.", ".RRRRRP.", ".RRRRRR.", ".RRRRRR."];
        let l = labels_from(&rows);
        let on = DetectionConfig { occlusion_radius: 1, ..no_min() };
        let off = DetectionConfig { occlude_vru: false, ..on.clone() };
        let count = |cfg: &DetectionConfig| {
            let seg = segment_road(&l, cfg).unwrap();
            let (obs, _) = extract_borders(&seg, &l, cfg).unwrap();
            obs.iter().filter(|o| o.ignored == Some(IgnoreReason::Occluded)).count()
        };
        assert!(count(&on) > 0);
        assert_eq!(count(&off), 0);
    }

    #[test]
    fn symmetric_triangle_splits_at_apex() {
        let w = 21;
        let h = 10;
        let l = ClassMembershipMap::from_labels(Grid2::from_fn(w, h, |r, c| {
            let half = r as isize;
            if (c as isize - 10).abs() <= half {
                ClassId::Road as u8
            } else {
                ClassId::Background as u8
            }
        }))
        .unwrap();
        let seg = segment_road(&l, &no_min()).unwrap();
        let (obs, _) = extract_borders(&seg, &l, &no_min()).unwrap();
        for r in 1..h - 1 {
            let lc: Vec<usize> = obs.iter().filter(|o| o.side == Side::Left && o.row == r).map(|o| o.col).collect();
            let rc: Vec<usize> = obs.iter().filter(|o| o.side == Side::Right && o.row == r).map(|o| o.col).collect();
            let lmin = *lc.iter().min().unwrap();
            let rmax = *rc.iter().max().unwrap();
            assert!((lmin + rmax) as isize - 20 == 0, "row {r}: {lc:?} {rc:?}");
        }
        let apex: Vec<_> = obs.iter().filter(|o| o.row == 0).collect();
        assert_eq!(apex.len(), 1);
        assert_eq!((apex[0].col, apex[0].side), (10, Side::Left));
    }

    #[test]
    fn horizon_and_ignored_pixels_have_no_ground_point() {
        let cam = Camera::default();
        let o = BorderObservation {
            side: Side::Left,
            row: cam.horizon_row().floor() as usize,
            col: 100,
            edge: (100.5, cam.horizon_row()),
            ground: None,
            ignored: None,
        };
        assert!(project_to_ground(&o, &cam).is_none());
        let below = BorderObservation {
            row: 200,
            edge: (100.0, 200.5),
            ..o
        };
        let g = project_to_ground(&below, &cam).unwrap().ground.unwrap();
        let (c, r) = cam.project_ground(g).unwrap();
        assert!((c - 100.0).abs() < 1e-9 && (r - 200.5).abs() < 1e-9);
        let ign = BorderObservation {
            ignored: Some(IgnoreReason::Occluded),
            ..below
        };
        assert!(project_to_ground(&ign, &cam).is_none());
    }

    #[test]
    fn speckled_scenario_road_is_recovered() {
        use crate::sim::{render, Preset, Scenario, ScenarioConfig};
        use rand::SeedableRng;
        let scn = Scenario::generate(&ScenarioConfig {
            frames: 30,
            ..ScenarioConfig::preset(Preset::Z, 4)
        })
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for f in [0, 15, 29] {
            let truth = render::render_truth(&scn, f);
            let noisy = render::degrade(&truth, 0.0, 0.05, &mut rng);
            let seg = segment_road(&noisy, &DetectionConfig::default()).unwrap();
            let (mut inter, mut union) = (0usize, 0usize);
            for r in 0..truth.height() {
                for c in 0..truth.width() {
                    let t = truth.class_at(r, c) == ClassId::Road;
                    let m = *seg.mask.get(r, c);
                    inter += (t && m) as usize;
                    union += (t || m) as usize;
                }
            }
            let iou = inter as f64 / union as f64;
            assert!(iou >= 0.98, "frame {f}: IoU {iou}");
        }
    }

    #[test]
    fn clean_ground_points_lie_on_true_borders() {
        use crate::geometry::lateral_at;
        use crate::sim::{render, Preset, Scenario, ScenarioConfig};
        let scn = Scenario::generate(&ScenarioConfig {
            frames: 5,
            ..ScenarioConfig::preset(Preset::Z, 2)
        })
        .unwrap();
        let cam = scn.config.camera;
        let det = detect(&render::render_truth(&scn, 3), &cam, &DetectionConfig::default()).unwrap();
        let (left, right) = scn.border_polylines(3, 5.0, 200.0);
        let mut worst: f64 = 0.0;
        let mut n = 0;
        for o in &det.observations {
            let g = o.ground.unwrap();
            if g.x > 30.0 {
                continue;
            }
            let line = if o.side == Side::Left { &left } else { &right };
            let y = lateral_at(line, g.x).unwrap();
            worst = worst.max((g.y - y).abs());
            n += 1;
        }
        assert!(n > 50, "{n}");
        assert!(worst < 0.1, "{worst}");
    }

    /// 4-boundary oracle: foreground pixels with a background or
    /// out-of-image 4-neighbour.
    fn boundary_oracle(mask: &Grid2<bool>) -> Vec<(usize, usize)> {
        let (w, h) = (mask.width(), mask.height());
        let mut out = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if *mask.get(r, c)
                    && N4
                        .iter()
                        .any(|&d| offset(w, h, r, c, d).is_none_or(|(qr, qc)| !*mask.get(qr, qc)))
                {
                    out.push((r, c));
                }
            }
        }
        out
    }

    fn segment_of(bits: &[bool], w: usize, h: usize) -> Option<RoadSegment> {
        let l = ClassMembershipMap::from_labels(Grid2::from_fn(w, h, |r, c| {
            if bits[r * w + c] {
                ClassId::Road as u8
            } else {
                ClassId::Background as u8
            }
        }))
        .unwrap();
        segment_road(&l, &no_min()).ok()
    }

    proptest! {
        #[test]
        fn contour_is_closed_and_covers_the_boundary(
            w in 1usize..=32, h in 1usize..=32, bits in proptest::collection::vec(proptest::bool::weighted(0.6), 1024)
        ) {
            let Some(seg) = segment_of(&bits, w, h) else { return Ok(()) };
            let contour = trace_contour(&seg.mask);
            let mut got = contour.clone();
            got.sort_unstable();
            got.dedup();
            prop_assert_eq!(got, boundary_oracle(&seg.mask));
            let n = contour.len();
            for i in 0..n {
                let (a, b) = (contour[i], contour[(i + 1) % n]);
                let dr = (a.0 as isize - b.0 as isize).abs();
                let dc = (a.1 as isize - b.1 as isize).abs();
                prop_assert!(dr <= 1 && dc <= 1);
            }
        }

        #[test]
        fn hole_filling_is_idempotent(
            w in 1usize..=24, h in 1usize..=24, bits in proptest::collection::vec(proptest::bool::weighted(0.55), 576)
        ) {
            let Some(seg) = segment_of(&bits, w, h) else { return Ok(()) };
            let again: Vec<bool> = seg.mask.as_slice().to_vec();
            let seg2 = segment_of(&again, w, h).unwrap();
            prop_assert_eq!(seg.mask, seg2.mask);
        }
    }
}
