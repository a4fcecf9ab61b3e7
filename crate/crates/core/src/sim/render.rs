//! Label rendering through the flat-ground camera.

use rand::Rng;

use crate::geometry::{lateral_at, to_vehicle_frame, Vec2};
use crate::image::{GrayImage, Grid2};
use crate::labels::{ClassId, ClassMembershipMap, NUM_CLASSES};

use super::scenario::{Scenario, StaticObject};

/// Road rendered up to this far ahead of the vehicle (m).
pub const RENDER_AHEAD: f64 = 160.0;

/// Image rectangle `(col0, col1, row0, row1)` (inclusive pixel ranges)
/// covered by the projected box, or `None` if it is not fully in front of
/// the camera or falls outside the image.
fn object_rect(scn: &Scenario, frame: usize, obj: &StaticObject) -> Option<(usize, usize, usize, usize)> {
    let cam = &scn.config.camera;
    let ego = scn.truth[frame].pose;
    let (s, c) = obj.heading.sin_cos();
    let (hl, hw) = (0.5 * obj.length, 0.5 * obj.width);
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (a, b) in [(hl, hw), (hl, -hw), (-hl, hw), (-hl, -hw)] {
        let w = obj.center + Vec2::new(c * a - s * b, s * a + c * b);
        let v = to_vehicle_frame(w, &ego);
        if v.x < 0.5 {
            return None;
        }
        for z in [0.0, obj.height] {
            let (u, r) = cam.project_point(v.x, v.y, z)?;
            lo = (lo.0.min(u), lo.1.min(r));
            hi = (hi.0.max(u), hi.1.max(r));
        }
    }
    let c0 = (lo.0 - 0.5).ceil().max(0.0);
    let c1 = (hi.0 - 0.5).floor().min(cam.width as f64 - 1.0);
    let r0 = (lo.1 - 0.5).ceil().max(0.0);
    let r1 = (hi.1 - 0.5).floor().min(cam.height as f64 - 1.0);
    (c0 <= c1 && r0 <= r1).then_some((c0 as usize, c1 as usize, r0 as usize, r1 as usize))
}

/// Ground-truth labels: sky above the horizon, the road surface between
/// both edges, boxes for parked vehicles and posts (far to near), background
/// elsewhere.
pub fn render_truth(scn: &Scenario, frame: usize) -> ClassMembershipMap {
    let cam = &scn.config.camera;
    let mut labels = Grid2::filled(cam.width, cam.height, ClassId::Background as u8);
    let (left, right) = scn.border_polylines(frame, 10.0, RENDER_AHEAD);
    for r in 0..cam.height {
        if !cam.below_horizon(r) {
            labels.as_mut_slice()[r * cam.width..(r + 1) * cam.width].fill(ClassId::Sky as u8);
            continue;
        }
        let Some(x) = cam.row_ground_x(r) else { continue };
        let (Some(yl), Some(yr)) = (lateral_at(&left, x), lateral_at(&right, x)) else {
            continue;
        };
        for c in 0..cam.width {
            if let Some(p) = cam.back_project_pixel(c, r) {
                if p.y >= yr && p.y <= yl {
                    labels.set(r, c, ClassId::Road as u8);
                }
            }
        }
    }
    let s0 = scn.truth_s[frame];
    let ego = scn.truth[frame].pose.position();
    let mut visible: Vec<&StaticObject> = scn
        .objects
        .iter()
        .filter(|o| o.s > s0 - 10.0 && o.s < s0 + RENDER_AHEAD)
        .collect();
    visible.sort_by(|a, b| {
        (b.center - ego)
            .norm()
            .total_cmp(&(a.center - ego).norm())
    });
    for obj in visible {
        if let Some((c0, c1, r0, r1)) = object_rect(scn, frame, obj) {
            for r in r0..=r1 {
                labels.as_mut_slice()[r * cam.width + c0..=r * cam.width + c1].fill(obj.class as u8);
            }
        }
    }
    ClassMembershipMap::from_labels(labels).expect("rendered labels are valid")
}

/// Replaces each label by a different, uniformly chosen class with
/// probability `flip`; true road pixels additionally become background with
/// probability `speckle`.
pub fn degrade<R: Rng>(truth: &ClassMembershipMap, flip: f64, speckle: f64, rng: &mut R) -> ClassMembershipMap {
    let road = ClassId::Road as u8;
    let src = truth.labels();
    let mut out = src.clone();
    for (o, &t) in out.as_mut_slice().iter_mut().zip(src.as_slice()) {
        if flip > 0.0 && rng.random::<f64>() < flip {
            let k = rng.random_range(0..NUM_CLASSES as u8 - 1);
            *o = if k < t { k } else { k + 1 };
        }
        if t == road && speckle > 0.0 && rng.random::<f64>() < speckle {
            *o = ClassId::Background as u8;
        }
    }
    ClassMembershipMap::from_labels(out).expect("degraded labels are valid")
}

/// A gray-level image whose intensities depend on the class, plus noise.
pub fn intensity_image<R: Rng>(truth: &ClassMembershipMap, rng: &mut R) -> GrayImage {
    const BASE: [f64; NUM_CLASSES] = [140.0, 80.0, 40.0, 220.0, 170.0, 200.0];
    let (h, w) = truth.dims();
    Grid2::from_fn(w, h, |r, c| {
        let k = truth.class_at(r, c) as usize;
        let v = BASE[k] + rng.random_range(-20.0..20.0);
        v.round().clamp(0.0, 255.0) as u8
    })
}
