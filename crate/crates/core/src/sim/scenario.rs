//! Scenario generation and per-frame sensor synthesis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geometry::{direction, left_normal, to_vehicle_frame, Pose2, Vec2};
use crate::labels::{ClassId, ClassMembershipMap};
use crate::shape_points::{LaneMeta, ShapePoint};

use super::presets::{NoiseProfile, Preset};
use super::render;
use super::road::RoadPath;

/// Arc length at which the ego vehicle starts.
pub const START_S: f64 = 100.0;
/// Extra ground truth recorded beyond the last frame, for look-ahead
/// evaluation.
pub const TRUTH_LOOKAHEAD: f64 = 40.0;
/// Distance between the rear wheels (m).
pub const TRACK_WIDTH: f64 = 1.6;
pub const RADAR_RANGE: f64 = 100.0;
pub const RADAR_FOV: f64 = std::f64::consts::FRAC_PI_3;

const ROAD_MARGIN: f64 = 300.0;
const REFLECTOR_SPACING: f64 = 0.7;
const POST_SPACING: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoadShape {
    /// Random chain of arcs and straights.
    Rural,
    Straight,
    Circle { radius: f64 },
}

/// An extra parked vehicle, placed relative to the ego start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehiclePlacement {
    /// Arc length ahead of the ego start position (m).
    pub ahead: f64,
    /// Lateral offset of the vehicle center from the centerline (m).
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub preset: Preset,
    pub seed: u64,
    pub frames: usize,
    pub frame_rate: f64,
    pub speed: f64,
    pub lane_count: u32,
    pub lane_width: f64,
    pub road: RoadShape,
    pub noise: NoiseProfile,
    pub camera: Camera,
    pub extra_vehicles: Vec<VehiclePlacement>,
}

impl ScenarioConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        Self {
            preset,
            seed,
            frames: 200,
            frame_rate: 20.0,
            speed: 15.0,
            lane_count: 2,
            lane_width: 3.5,
            road: RoadShape::Rural,
            noise: preset.noise(),
            camera: Camera::default(),
            extra_vehicles: Vec::new(),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn road_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    /// Lateral offset of the center of the rightmost lane.
    pub fn ego_offset(&self) -> f64 {
        -0.5 * self.road_width() + 0.5 * self.lane_width
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.frame_rate > 0.0) {
            return bad(format!("frame rate must be > 0, got {}", self.frame_rate));
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return bad(format!("speed must be >= 0, got {}", self.speed));
        }
        if self.lane_count == 0 || !(self.lane_width > 0.0) {
            return bad("lane count and width must be positive".into());
        }
        let n = &self.noise;
        for (name, p) in [
            ("label_flip", n.label_flip),
            ("road_speckle", n.road_speckle),
            ("meta_dropout", n.meta_dropout),
            ("radar_detection", n.radar_detection),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(n.map_spacing > 0.0) {
            return bad("map spacing must be > 0".into());
        }
        if let RoadShape::Circle { radius } = self.road {
            if !(radius > 0.0) {
                return bad(format!("circle radius must be > 0, got {radius}"));
            }
        }
        Ok(())
    }
}

/// Exact vehicle state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthState {
    pub t: f64,
    pub pose: Pose2,
    pub v: f64,
    pub omega: f64,
}

/// A stationary box: parked vehicle or roadside post.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticObject {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub class: ClassId,
    /// Arc length of the footprint center along the centerline.
    pub s: f64,
}

/// Radar point target fixed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflector {
    pub s: f64,
    pub position: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarReflection {
    pub range: f64,
    pub azimuth: f64,
    pub relvel: f64,
}

impl RadarReflection {
    /// Position in the vehicle frame.
    pub fn position(&self) -> Vec2 {
        self.range * direction(self.azimuth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Odometry {
    pub t: f64,
    /// Front-left, front-right, rear-left, rear-right (m/s).
    pub wheels: [f64; 4],
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub index: usize,
    pub t: f64,
    pub radar: Vec<RadarReflection>,
    pub odometry: Odometry,
    pub gps: Vec2,
    pub labels_truth: ClassMembershipMap,
    pub labels_noisy: ClassMembershipMap,
}

/// Descriptive header of a scenario, independent of how it is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMeta {
    pub preset: Preset,
    pub seed: u64,
    pub frames: usize,
    pub frame_rate: f64,
    pub lane_count: u32,
    pub lane_width: f64,
}

/// Anything that can feed the estimation pipeline frame by frame.
pub trait FrameSource {
    fn meta(&self) -> &ScenarioMeta;
    /// Ground truth, one row per frame followed by look-ahead rows.
    fn truth(&self) -> &[GroundTruthState];
    fn shape_points(&self) -> &[ShapePoint];
    fn frame(&self, index: usize) -> Result<FrameBundle>;
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Labels = 1,
    Radar = 2,
    Odometry = 3,
    Gps = 4,
    Image = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one (seed, frame, purpose) triple.
pub(crate) fn frame_rng(seed: u64, frame: usize, stream: Stream) -> ChaCha8Rng {
    let s = splitmix(splitmix(splitmix(seed) ^ frame as u64) ^ stream as u64);
    ChaCha8Rng::seed_from_u64(s)
}

pub(crate) fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// A generated world with ground truth; frames are synthesized on demand.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub road: RoadPath,
    pub truth: Vec<GroundTruthState>,
    /// Centerline arc length of every truth row.
    pub truth_s: Vec<f64>,
    pub shape_points: Vec<ShapePoint>,
    pub reflectors: Vec<Reflector>,
    pub objects: Vec<StaticObject>,
    pub gps_bias: Vec2,
    meta: ScenarioMeta,
}

fn random_road(rng: &mut ChaCha8Rng, length: f64) -> Result<RoadPath> {
    let mut pieces = Vec::new();
    let mut total = 0.0;
    while total < length {
        let l = rng.random_range(30.0..80.0);
        let kappa = if rng.random::<f64>() < 0.25 {
            0.0
        } else {
            let r: f64 = rng.random_range(60.0..250.0);
            if rng.random::<bool>() {
                1.0 / r
            } else {
                -1.0 / r
            }
        };
        pieces.push((l, kappa));
        total += l;
    }
    RoadPath::from_pieces(Pose2::default(), &pieces)
}

impl Scenario {
    pub fn generate(config: &ScenarioConfig) -> Result<Scenario> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dt = config.dt();
        let travel = config.speed * dt * config.frames as f64;
        let length = START_S + travel + ROAD_MARGIN;
        let half = 0.5 * config.road_width();
        let road = match config.road {
            RoadShape::Straight => RoadPath::straight(length)?,
            RoadShape::Circle { radius } => RoadPath::circle(radius, length)?,
            RoadShape::Rural => {
                let mut attempt = 0;
                loop {
                    let road = random_road(&mut rng, length)?;
                    match road.check_simple(half) {
                        Ok(()) => break road,
                        Err(e) if attempt >= 20 => return Err(e),
                        Err(_) => attempt += 1,
                    }
                }
            }
        };
        road.check_simple(half)?;

        let d_ego = config.ego_offset();
        let extra = if config.speed > 0.0 {
            (TRUTH_LOOKAHEAD / (config.speed * dt)).ceil() as usize + 1
        } else {
            0
        };
        let mut truth = Vec::with_capacity(config.frames + extra);
        let mut truth_s = Vec::with_capacity(config.frames + extra);
        let mut s = START_S;
        for k in 0..config.frames + extra {
            let pose = road.pose_at(s);
            truth.push(GroundTruthState {
                t: k as f64 * dt,
                pose: Pose2::from_position(road.offset_point(s, d_ego), pose.heading),
                v: config.speed,
                omega: road.yaw_rate(s, d_ego, config.speed),
            });
            truth_s.push(s);
            s = road.advance(s, d_ego, config.speed, dt);
        }

        let n = &config.noise;
        let meta_ok = LaneMeta {
            lane_count: config.lane_count,
            lane_width: config.lane_width,
        };
        let count = (road.length() / n.map_spacing).floor() as usize;
        let mut shape_points = Vec::with_capacity(count + 2);
        for k in 0..=count + 1 {
            let s = (k as f64 * n.map_spacing).min(road.length());
            if k == count + 1 && s - (count as f64 * n.map_spacing) < 1e-9 {
                break;
            }
            let p = road.pose_at(s).position();
            let noise = Vec2::new(gauss(&mut rng, n.map_sigma), gauss(&mut rng, n.map_sigma));
            let dropped = rng.random::<f64>() < n.meta_dropout;
            shape_points.push(ShapePoint {
                id: k as u64,
                position: p + noise,
                meta: (!dropped).then_some(meta_ok),
            });
        }

        let mut reflectors = Vec::new();
        for side in [1.0, -1.0] {
            let mut s = 0.0;
            while s < road.length() {
                let mut along = s;
                let mut lat = side * (half + n.shoulder);
                if n.reflector_jitter > 0.0 {
                    along = (s + rng.random_range(-0.25..0.25)).clamp(0.0, road.length());
                    lat += rng.random_range(-1.0..1.0) * n.reflector_jitter;
                }
                reflectors.push(Reflector {
                    s: along,
                    position: road.offset_point(along, lat),
                });
                s += REFLECTOR_SPACING;
            }
        }
        reflectors.sort_by(|a, b| a.s.total_cmp(&b.s));

        let mut objects = Vec::new();
        let mut post_s = rng.random_range(0.0..POST_SPACING);
        while post_s < road.length() {
            for side in [1.0, -1.0] {
                let pose = road.pose_at(post_s);
                objects.push(StaticObject {
                    center: road.offset_point(post_s, side * (half + 3.0)),
                    heading: pose.heading,
                    length: 0.2,
                    width: 0.2,
                    height: 1.0,
                    class: ClassId::Infrastructure,
                    s: post_s,
                });
            }
            post_s += POST_SPACING;
        }
        let parked = |s: f64, offset: f64| StaticObject {
            center: road.offset_point(s, offset),
            heading: road.pose_at(s).heading,
            length: 4.5,
            width: 1.8,
            height: 1.5,
            class: ClassId::Vehicle,
            s,
        };
        if n.parked_vehicle_spacing > 0.0 {
            let mut s = START_S + rng.random_range(0.3..1.0) * n.parked_vehicle_spacing;
            while s < road.length() {
                objects.push(parked(s, -half - 0.2));
                s += n.parked_vehicle_spacing * rng.random_range(0.5..1.5);
            }
        }
        for v in &config.extra_vehicles {
            objects.push(parked(START_S + v.ahead, v.offset));
        }

        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let gps_bias = rng.random_range(0.0..=1.0) * n.gps_bias_max * direction(angle);

        let meta = ScenarioMeta {
            preset: config.preset,
            seed: config.seed,
            frames: config.frames,
            frame_rate: config.frame_rate,
            lane_count: config.lane_count,
            lane_width: config.lane_width,
        };
        Ok(Scenario {
            config: config.clone(),
            road,
            truth,
            truth_s,
            shape_points,
            reflectors,
            objects,
            gps_bias,
            meta,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.config.frames
    }

    fn check_frame(&self, frame: usize) -> Result<()> {
        if frame >= self.config.frames {
            return Err(Error::InvalidInput(format!(
                "frame {frame} out of range (scenario has {})",
                self.config.frames
            )));
        }
        Ok(())
    }

    /// Left and right road edges around `frame`, in its vehicle frame,
    /// ordered along the direction of travel.
    pub fn border_polylines(&self, frame: usize, behind: f64, ahead: f64) -> (Vec<Vec2>, Vec<Vec2>) {
        let ego = self.truth[frame].pose;
        let s0 = self.truth_s[frame];
        let half = 0.5 * self.config.road_width();
        let step = 0.5;
        let n = ((behind + ahead) / step).ceil() as usize;
        let mut left = Vec::with_capacity(n + 1);
        let mut right = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let s = s0 - behind + k as f64 * step;
            let pose = self.road.pose_at(s);
            let nrm = left_normal(pose.heading);
            left.push(to_vehicle_frame(pose.position() + half * nrm, &ego));
            right.push(to_vehicle_frame(pose.position() - half * nrm, &ego));
        }
        (left, right)
    }

    /// Radar returns of `frame`: detected border reflectors, static clutter
    /// and a few moving targets.
    pub fn emit_radar(&self, frame: usize) -> Result<Vec<RadarReflection>> {
        self.check_frame(frame)?;
        let mut rng = frame_rng(self.config.seed, frame, Stream::Radar);
        let state = self.truth[frame];
        let s0 = self.truth_s[frame];
        let lo = self.reflectors.partition_point(|r| r.s < s0 - 20.0);
        let hi = self.reflectors.partition_point(|r| r.s <= s0 + RADAR_RANGE + 20.0);
        let n = &self.config.noise;
        let mut out = emit_static(
            &self.reflectors[lo..hi],
            &state.pose,
            state.v,
            n,
            &mut rng,
        );
        for k in 0..n.radar_clutter + n.radar_moving {
            let range = rng.random_range(5.0..RADAR_RANGE);
            let azimuth = rng.random_range(-RADAR_FOV..RADAR_FOV);
            let mut relvel = -state.v * azimuth.cos() + gauss(&mut rng, n.radar_velocity_sigma);
            if k >= n.radar_clutter {
                let speed: f64 = rng.random_range(3.0..12.0);
                relvel += if rng.random::<bool>() { speed } else { -speed };
            }
            out.push(RadarReflection {
                range,
                azimuth,
                relvel,
            });
        }
        Ok(out)
    }

    pub fn odometry(&self, frame: usize) -> Result<Odometry> {
        self.check_frame(frame)?;
        let mut rng = frame_rng(self.config.seed, frame, Stream::Odometry);
        let st = self.truth[frame];
        let n = &self.config.noise;
        let half = 0.5 * TRACK_WIDTH * st.omega;
        let ideal = [st.v - half, st.v + half, st.v - half, st.v + half];
        let wheels = ideal.map(|w| w + gauss(&mut rng, n.wheel_sigma));
        Ok(Odometry {
            t: st.t,
            wheels,
            yaw_rate: st.omega + gauss(&mut rng, n.yaw_rate_sigma),
        })
    }

    pub fn gps(&self, frame: usize) -> Result<Vec2> {
        self.check_frame(frame)?;
        let mut rng = frame_rng(self.config.seed, frame, Stream::Gps);
        let sigma = self.config.noise.gps_sigma;
        let jitter = Vec2::new(gauss(&mut rng, sigma), gauss(&mut rng, sigma));
        Ok(self.truth[frame].pose.position() + self.gps_bias + jitter)
    }

    /// Ground-truth and degraded class membership maps of `frame`.
    pub fn render_labels(&self, frame: usize) -> Result<(ClassMembershipMap, ClassMembershipMap)> {
        self.check_frame(frame)?;
        let truth = render::render_truth(self, frame);
        let mut rng = frame_rng(self.config.seed, frame, Stream::Labels);
        let n = &self.config.noise;
        let noisy = render::degrade(&truth, n.label_flip, n.road_speckle, &mut rng);
        Ok((truth, noisy))
    }

    /// Gray-level camera stand-in consistent with the truth labels.
    pub fn render_image(&self, frame: usize, truth: &ClassMembershipMap) -> Result<crate::image::GrayImage> {
        self.check_frame(frame)?;
        let mut rng = frame_rng(self.config.seed, frame, Stream::Image);
        Ok(render::intensity_image(truth, &mut rng))
    }
}

/// Detects static reflectors seen from `ego` moving at `speed`.
pub fn emit_static<R: Rng>(
    reflectors: &[Reflector],
    ego: &Pose2,
    speed: f64,
    noise: &NoiseProfile,
    rng: &mut R,
) -> Vec<RadarReflection> {
    let mut out = Vec::new();
    for r in reflectors {
        let p = to_vehicle_frame(r.position, ego);
        let range = p.norm();
        let azimuth = p.y.atan2(p.x);
        if range > RADAR_RANGE || range < 0.5 || azimuth.abs() > RADAR_FOV {
            continue;
        }
        if rng.random::<f64>() >= noise.radar_detection {
            continue;
        }
        out.push(RadarReflection {
            range: range + gauss(rng, noise.radar_range_sigma),
            azimuth: azimuth + gauss(rng, noise.radar_azimuth_sigma),
            relvel: -speed * azimuth.cos() + gauss(rng, noise.radar_velocity_sigma),
        });
    }
    out
}

impl FrameSource for Scenario {
    fn meta(&self) -> &ScenarioMeta {
        &self.meta
    }

    fn truth(&self) -> &[GroundTruthState] {
        &self.truth
    }

    fn shape_points(&self) -> &[ShapePoint] {
        &self.shape_points
    }

    fn frame(&self, index: usize) -> Result<FrameBundle> {
        let (labels_truth, labels_noisy) = self.render_labels(index)?;
        Ok(FrameBundle {
            index,
            t: self.truth[index].t,
            radar: self.emit_radar(index)?,
            odometry: self.odometry(index)?,
            gps: self.gps(index)?,
            labels_truth,
            labels_noisy,
        })
    }
}
