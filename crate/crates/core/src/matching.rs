//! Particle-filter map matching of the occupancy grid against the digital
//! map.
//!
//! A particle is a vehicle pose relative to the digital map's center spline:
//! arc length `s`, lateral offset `d` and heading offset `psi`. Its score is
//! the mean grid occupancy found under a small lateral kernel along both
//! predicted road borders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::MatchingConfig;
use crate::dmap::{DigitalMap, Side};
use crate::error::{Error, Result};
use crate::geometry::{left_normal, Pose2, Vec2};
use crate::grid::GridMap;
use crate::sim::gauss;

/// Initialization spreads `(σ_s, σ_d, σ_ψ)` around a GPS fix.
pub const GPS_SPREAD: (f64, f64, f64) = (10.0, 3.0, 0.1);
/// Initialization spreads around a previous match.
pub const PREVIOUS_SPREAD: (f64, f64, f64) = (1.0, 0.5, 0.1);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub s: f64,
    pub d: f64,
    pub psi: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    /// Matched vehicle pose in the world frame.
    pub pose: Pose2,
    pub s_hat: f64,
    pub d_hat: f64,
    pub psi_hat: f64,
    /// Effective sample size over particle count.
    pub confidence: f64,
    /// Set when no particle found any occupancy.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSource {
    Gps(Vec2),
    Previous(MatchResult),
}

/// Lateral kernel offsets as fractions of the half width.
const KERNEL: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// Precomputed border samples (point and outward normal) every
/// `border_step` meters of center arc length.
#[derive(Debug, Clone)]
pub struct BorderLattice {
    step: f64,
    left: Vec<(Vec2, Vec2)>,
    right: Vec<(Vec2, Vec2)>,
}

impl BorderLattice {
    pub fn new(dmap: &DigitalMap, step: f64) -> Self {
        let n = (dmap.length() / step).floor() as usize + 1;
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for k in 0..n {
            let s = k as f64 * step;
            let a = dmap.center().sample_at(s);
            let nrm = left_normal(a.heading);
            let h = dmap.half_width_at(s);
            left.push((a.point + h * nrm, nrm));
            right.push((a.point - h * nrm, -nrm));
        }
        Self { step, left, right }
    }

    fn side(&self, side: Side) -> &[(Vec2, Vec2)] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Mean occupancy under the kernel along both borders for a particle at
/// world pose `particle`, with the vehicle at `odom` in the grid's frame.
pub fn score(
    grid: &GridMap,
    lattice: &BorderLattice,
    particle_s: f64,
    particle: &Pose2,
    odom: &Pose2,
    cfg: &MatchingConfig,
) -> f64 {
    let t = odom.compose(&particle.inverse());
    let k0 = ((particle_s - cfg.behind) / lattice.step).ceil().max(0.0) as usize;
    let k1 = ((particle_s + cfg.ahead) / lattice.step).floor();
    if k1 < 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut wsum = 0.0;
    for side in Side::BOTH {
        let samples = lattice.side(side);
        let hi = (k1 as usize).min(samples.len().saturating_sub(1));
        if k0 > hi {
            continue;
        }
        for &(p, n) in &samples[k0..=hi] {
            for f in KERNEL {
                let w = 1.0 - cfg.kernel_taper * f.abs();
                sum += w * grid.value_at(t.transform_point(p + f * cfg.kernel_half_width * n));
                wsum += w;
            }
        }
    }
    if wsum == 0.0 {
        0.0
    } else {
        sum / wsum
    }
}



/// Systematic resampling: indices of the surviving particles for offset
/// `u0 ∈ [0, 1)`.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights.first().copied().unwrap_or(0.0);
    let mut i = 0;
    for k in 0..n {
        let u = (u0 + k as f64) / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    out
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        1.0 / s2
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct ParticleFilter {
    cfg: MatchingConfig,
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
}

impl ParticleFilter {
    pub fn new(cfg: &MatchingConfig, seed: u64) -> Self {
        Self {
            cfg: cfg.clone(),
            particles: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn is_initialized(&self) -> bool {
        !self.particles.is_empty()
    }

    /// Spreads particles around `(s, d, psi)` with uniform weights.
    pub fn initialize_at(&mut self, s: f64, d: f64, psi: f64, spread: (f64, f64, f64)) -> Result<()> {
        let n = self.cfg.particles;
        if n == 0 {
            return Err(Error::Initialization("particle count must be >= 1".into()));
        }
        let w = 1.0 / n as f64;
        self.particles = (0..n)
            .map(|_| Particle {
                s: s + gauss(&mut self.rng, spread.0),
                d: d + gauss(&mut self.rng, spread.1),
                psi: psi + gauss(&mut self.rng, spread.2),
                weight: w,
            })
            .collect();
        Ok(())
    }

    pub fn initialize(&mut self, source: Option<&InitSource>, dmap: &DigitalMap) -> Result<()> {
        match source {
            None => Err(Error::Initialization(
                "neither a GPS fix nor a previous match is available".into(),
            )),
            Some(InitSource::Gps(p)) => {
                let (s, d) = dmap.center().project(*p);
                self.initialize_at(s, d, 0.0, GPS_SPREAD)
            }
            Some(InitSource::Previous(m)) => {
                let (s, d, psi) = dmap.locate(&m.pose);
                self.initialize_at(s, d, psi, PREVIOUS_SPREAD)
            }
        }
    }

    /// Re-expresses every particle on a freshly built map.
    pub fn rebase(&mut self, old: &DigitalMap, new: &DigitalMap) {
        for p in &mut self.particles {
            let pose = old.pose_at(p.s, p.d, p.psi);
            let (s, d, psi) = new.locate(&pose);
            p.s = s;
            p.d = d;
            p.psi = psi;
        }
    }

    /// Moves every particle by the ego increment `delta` (vehicle frame) and
    /// adds diffusion noise.
    pub fn propagate(&mut self, delta: &Pose2, dmap: &DigitalMap) {
        let len = dmap.length();
        let c = &self.cfg;
        for p in &mut self.particles {
            let kappa = dmap.center().curvature_at(p.s.clamp(0.0, len));
            let (sp, cp) = p.psi.sin_cos();
            let along = delta.x * cp - delta.y * sp;
            let across = delta.x * sp + delta.y * cp;
            let ds = along / (1.0 - kappa * p.d).max(0.1);
            p.s = (p.s + ds + gauss(&mut self.rng, c.diffusion_s)).clamp(0.0, len);
            p.d += across + gauss(&mut self.rng, c.diffusion_d);
            p.psi += delta.heading - kappa * ds + gauss(&mut self.rng, c.diffusion_heading);
        }
    }

    /// Scores and normalizes the weights. Returns `true` if every score was
    /// zero (weights then become uniform).
    pub fn weigh(&mut self, grid: &GridMap, dmap: &DigitalMap, lattice: &BorderLattice, odom: &Pose2) -> bool {
        let scores: Vec<f64> = self
            .particles
            .iter()
            .map(|p| score(grid, lattice, p.s, &dmap.pose_at(p.s, p.d, p.psi), odom, &self.cfg))
            .collect();
        let max = scores.iter().copied().fold(0.0, f64::max);
        let n = self.particles.len() as f64;
        if max <= 0.0 {
            for p in &mut self.particles {
                p.weight = 1.0 / n;
            }
            return true;
        }
        let mut total = 0.0;
        for (p, sc) in self.particles.iter_mut().zip(&scores) {
            p.weight *= ((sc - max) / self.cfg.temperature).exp();
            total += p.weight;
        }
        if !(total > 0.0) || !total.is_finite() {
            // prior weights underflowed: restart from the likelihood alone
            total = 0.0;
            for (p, sc) in self.particles.iter_mut().zip(&scores) {
                p.weight = ((sc - max) / self.cfg.temperature).exp();
                total += p.weight;
            }
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        false
    }

    pub fn resample(&mut self) {
        let w: Vec<f64> = self.particles.iter().map(|p| p.weight).collect();
        let u0: f64 = self.rng.random();
        let idx = systematic_resample(&w, u0);
        let n = self.particles.len() as f64;
        self.particles = idx
            .into_iter()
            .map(|i| Particle {
                weight: 1.0 / n,
                ..self.particles[i]
            })
            .collect();
    }

    /// Weighted mean (circular for the heading offset).
    pub fn estimate(&self, dmap: &DigitalMap, degraded: bool) -> MatchResult {
        let (mut s, mut d, mut sn, mut cs) = (0.0, 0.0, 0.0, 0.0);
        for p in &self.particles {
            s += p.weight * p.s;
            d += p.weight * p.d;
            sn += p.weight * p.psi.sin();
            cs += p.weight * p.psi.cos();
        }
        let psi = sn.atan2(cs);
        let w: Vec<f64> = self.particles.iter().map(|p| p.weight).collect();
        let n = self.particles.len() as f64;
        let confidence = if degraded {
            1.0 / n
        } else {
            (effective_sample_size(&w) / n).clamp(1.0 / n, 1.0)
        };
        MatchResult {
            pose: dmap.pose_at(s, d, psi),
            s_hat: s,
            d_hat: d,
            psi_hat: psi,
            confidence,
            degraded,
        }
    }

    /// One filter cycle: propagate, weigh, estimate, resample if the
    /// effective sample size dropped below the configured fraction.
    pub fn step(
        &mut self,
        grid: &GridMap,
        dmap: &DigitalMap,
        lattice: &BorderLattice,
        delta: &Pose2,
        odom: &Pose2,
    ) -> Result<MatchResult> {
        if self.particles.is_empty() {
            return Err(Error::Initialization("particle filter used before initialization".into()));
        }
        self.propagate(delta, dmap);
        let degraded = self.weigh(grid, dmap, lattice, odom);
        let result = self.estimate(dmap, degraded);
        let n = self.particles.len() as f64;
        if result.confidence * n < self.cfg.ess_fraction * n {
            self.resample();
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GridConfig;
    use crate::shape_points::{LaneMeta, ShapePoint};
    use crate::sim::RadarReflection;
    use proptest::prelude::*;
    use rand::Rng;

    fn curvy_map() -> DigitalMap {
        // straight, then a left arc, then a right arc
        let mut pts = Vec::new();
        let mut pose = Pose2::default();
        for i in 0..24 {
            let k = if i < 6 { 0.0 } else if i < 14 { 0.012 } else { -0.01 };
            pts.push(ShapePoint {
                id: i,
                position: pose.position(),
                meta: Some(LaneMeta {
                    lane_count: 2,
                    lane_width: 3.5,
                }),
            });
            pose = pose.compose(&Pose2::new(10.0, 0.5 * k * 100.0, k * 10.0));
        }
        DigitalMap::build(&pts, pts[8].position, 500.0).unwrap()
    }

    /// Grid filled exactly under the map borders around `s`, seen from the
    /// pose of the map at `s` (odometry frame == world frame).
    fn rendered_grid(m: &DigitalMap, s: f64) -> (GridMap, Pose2) {
        let ego = m.pose_at(s, 0.0, 0.0);
        let mut g = GridMap::new(&GridConfig { increment: 1.0, ..GridConfig::default() }, &ego);
        let mut hits = Vec::new();
        for side in Side::BOTH {
            for (_, p) in m.border_samples(side, s - 25.0, s + 85.0, 0.2) {
                let v = ego.inverse_transform_point(p);
                hits.push(RadarReflection {
                    range: v.norm(),
                    azimuth: v.y.atan2(v.x),
                    relvel: 0.0,
                });
            }
        }
        g.integrate(&hits, &ego, 0.0);
        (g, ego)
    }

    #[test]
    fn score_peaks_at_true_offset() {
        let m = curvy_map();
        let cfg = MatchingConfig::default();
        let lat = BorderLattice::new(&m, cfg.border_step);
        // where the straight meets the arc; inside a constant-curvature arc a
        // slide along the road is nearly a symmetry of the score
        let s0 = 60.0;
        let (g, ego) = rendered_grid(&m, s0);
        let at = |ds: f64| score(&g, &lat, s0 + ds, &m.pose_at(s0 + ds, 0.0, 0.0), &ego, &cfg);
        let lat_at = |dd: f64| score(&g, &lat, s0, &m.pose_at(s0, dd, 0.0), &ego, &cfg);
        let best = at(0.0);
        assert!(best > 0.1);
        // sharp laterally
        for dd in [-0.5, -0.25, 0.25, 0.5] {
            assert!(lat_at(dd) < best, "{dd}");
        }
        for ds in [-10.0, -5.0, -2.0, 2.0, 5.0, 10.0] {
            assert!(at(ds) < best, "{ds}");
        }
    }

    #[test]
    fn empty_grid_gives_uniform_weights_and_degraded_flag() {
        let m = curvy_map();
        let cfg = MatchingConfig {
            particles: 50,
            ..MatchingConfig::default()
        };
        let ego = m.pose_at(50.0, 0.0, 0.0);
        let g = GridMap::new(&GridConfig::default(), &ego);
        let lat = BorderLattice::new(&m, 1.0);
        let mut pf = ParticleFilter::new(&cfg, 1);
        pf.initialize_at(50.0, 0.0, 0.0, PREVIOUS_SPREAD).unwrap();
        let r = pf.step(&g, &m, &lat, &Pose2::default(), &ego).unwrap();
        assert!(r.degraded);
        assert!(pf.particles().iter().all(|p| (p.weight - 1.0 / 50.0).abs() < 1e-12));
        assert!(r.confidence > 0.0 && r.confidence <= 1.0);
    }

    #[test]
    fn single_particle_has_full_weight() {
        let m = curvy_map();
        let cfg = MatchingConfig {
            particles: 1,
            ..MatchingConfig::default()
        };
        let (g, ego) = rendered_grid(&m, 60.0);
        let lat = BorderLattice::new(&m, 1.0);
        let mut pf = ParticleFilter::new(&cfg, 1);
        pf.initialize_at(60.0, 0.0, 0.0, PREVIOUS_SPREAD).unwrap();
        let r = pf.step(&g, &m, &lat, &Pose2::default(), &ego).unwrap();
        assert_eq!(pf.particles()[0].weight, 1.0);
        assert_eq!(r.confidence, 1.0);
    }

    #[test]
    fn missing_source_is_an_error() {
        let m = curvy_map();
        let mut pf = ParticleFilter::new(&MatchingConfig::default(), 0);
        assert!(matches!(pf.initialize(None, &m), Err(Error::Initialization(_))));
    }

    #[test]
    fn previous_source_uses_tight_spread() {
        let m = curvy_map();
        let cfg = MatchingConfig {
            particles: 2000,
            ..MatchingConfig::default()
        };
        let prev = MatchResult {
            pose: m.pose_at(70.0, -1.0, 0.0),
            s_hat: 70.0,
            d_hat: -1.0,
            psi_hat: 0.0,
            confidence: 1.0,
            degraded: false,
        };
        let mut pf = ParticleFilter::new(&cfg, 3);
        pf.initialize(Some(&InitSource::Previous(prev)), &m).unwrap();
        let sd = std_of(pf.particles().iter().map(|p| p.s));
        assert!((sd - 1.0).abs() < 0.1, "{sd}");
        pf.initialize(Some(&InitSource::Gps(prev.pose.position())), &m).unwrap();
        let sd = std_of(pf.particles().iter().map(|p| p.s));
        assert!((sd - 10.0).abs() < 1.0, "{sd}");
    }

    fn std_of(it: impl Iterator<Item = f64>) -> f64 {
        let v: Vec<f64> = it.collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn gps_cloud_is_centred_on_the_fix() {
        let pts: Vec<ShapePoint> = (0..20)
            .map(|i| ShapePoint {
                id: i,
                position: Vec2::new(i as f64 * 25.0, 0.0),
                meta: None,
            })
            .collect();
        let m = DigitalMap::build(&pts, Vec2::new(200.0, 0.0), 500.0).unwrap();
        let gps = Vec2::new(200.0 + 8.0 * 0.6, 8.0 * 0.8);
        let cfg = MatchingConfig {
            particles: 1000,
            ..MatchingConfig::default()
        };
        let mut pf = ParticleFilter::new(&cfg, 9);
        pf.initialize(Some(&InitSource::Gps(gps)), &m).unwrap();
        let mean = pf
            .particles()
            .iter()
            .map(|p| m.pose_at(p.s, p.d, p.psi).position())
            .sum::<Vec2>()
            / 1000.0;
        assert!((mean - gps).norm() < 1.0, "{mean:?}");
    }

    #[test]
    fn filter_is_deterministic() {
        let m = curvy_map();
        let (g, ego) = rendered_grid(&m, 90.0);
        let lat = BorderLattice::new(&m, 1.0);
        let run = || {
            let mut pf = ParticleFilter::new(&MatchingConfig::default(), 42);
            pf.initialize_at(95.0, 0.0, 0.0, GPS_SPREAD).unwrap();
            let mut out = Vec::new();
            for _ in 0..3 {
                out.push(pf.step(&g, &m, &lat, &Pose2::default(), &ego).unwrap());
            }
            (out, pf.particles().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resampling_preserves_weighted_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
        let t: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= t);
        let target: f64 = xs.iter().zip(&w).map(|(x, w)| x * w).sum();
        let means: Vec<f64> = (0..1000)
            .map(|_| {
                let idx = systematic_resample(&w, rng.random());
                idx.iter().map(|&i| xs[i]).sum::<f64>() / n as f64
            })
            .collect();
        let mm = means.iter().sum::<f64>() / 1000.0;
        let se = std_of(means.iter().copied()) / (1000f64).sqrt();
        assert!((mm - target).abs() <= 3.0 * se.max(1e-12), "{mm} vs {target} (se {se})");
    }

    proptest! {
        #[test]
        fn weights_are_normalized(seed in 0u64..50, s in 40.0..150.0f64) {
            let m = curvy_map();
            let (g, ego) = rendered_grid(&m, s);
            let lat = BorderLattice::new(&m, 1.0);
            let mut pf = ParticleFilter::new(&MatchingConfig { particles: 64, ..MatchingConfig::default() }, seed);
            pf.initialize_at(s, 0.0, 0.0, GPS_SPREAD).unwrap();
            pf.propagate(&Pose2::new(0.7, 0.0, 0.0), &m);
            pf.weigh(&g, &m, &lat, &ego);
            let total: f64 = pf.particles().iter().map(|p| p.weight).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn systematic_indices_are_sorted_and_valid(w in proptest::collection::vec(0.001..1.0f64, 1..50), u in 0.0..1.0f64) {
            let t: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / t).collect();
            let idx = systematic_resample(&w, u);
            prop_assert_eq!(idx.len(), w.len());
            prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
            prop_assert!(idx.iter().all(|&i| i < w.len()));
        }
    }
}
