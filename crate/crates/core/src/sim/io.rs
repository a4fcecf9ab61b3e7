//! Scenario directories on disk.
//!
//! ```text
//! scenario.cfg
//! truth_trajectory.csv
//! shape_points.csv
//! frame_000000/labels_truth.pgm labels_noisy.pgm image.pgm radar.csv odom.csv gps.csv
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::parse_key_values;
use crate::error::{Error, Result};
use crate::geometry::{Pose2, Vec2};
use crate::labels::ClassMembershipMap;
use crate::shape_points::{load_shape_points, save_shape_points, ShapePoint};

use super::presets::Preset;
use super::scenario::{
    FrameBundle, FrameSource, GroundTruthState, Odometry, RadarReflection, RoadShape, Scenario,
    ScenarioMeta,
};

pub const TRUTH_HEADER: &str = "t_s,x_m,y_m,heading_rad,v_mps,omega_radps";
pub const RADAR_HEADER: &str = "range_m,azimuth_rad,relvel_mps";
pub const ODOM_HEADER: &str = "t_s,wheel_fl_mps,wheel_fr_mps,wheel_rl_mps,wheel_rr_mps,yaw_rate_radps";
pub const GPS_HEADER: &str = "t_s,x_m,y_m";

pub fn frame_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("frame_{index:06}"))
}

/// Reads a numeric CSV table with an exact header. Empty fields read as NaN.
pub fn read_table(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let got = rdr
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if got != header {
        return Err(Error::parse(path, format!("expected header `{header}`, found `{got}`")));
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        if rec.len() != width {
            return Err(Error::parse(path, format!("row {}: expected {width} fields", i + 2)));
        }
        let row = rec
            .iter()
            .map(|f| {
                let f = f.trim();
                if f.is_empty() {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(path, format!("row {}: bad number `{f}`", i + 2)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn road_name(r: RoadShape) -> String {
    match r {
        RoadShape::Rural => "rural".into(),
        RoadShape::Straight => "straight".into(),
        RoadShape::Circle { radius } => format!("circle:{radius}"),
    }
}

fn cfg_text(s: &Scenario) -> String {
    let c = &s.config;
    let n = &c.noise;
    let mut t = String::new();
    let _ = writeln!(t, "preset = {}", c.preset);
    let _ = writeln!(t, "seed = {}", c.seed);
    let _ = writeln!(t, "frames = {}", c.frames);
    let _ = writeln!(t, "frame_rate = {}", c.frame_rate);
    let _ = writeln!(t, "speed = {}", c.speed);
    let _ = writeln!(t, "lane_count = {}", c.lane_count);
    let _ = writeln!(t, "lane_width = {}", c.lane_width);
    let _ = writeln!(t, "road = {}", road_name(c.road));
    let _ = writeln!(t, "\n[noise]");
    for (k, v) in [
        ("label_flip", n.label_flip),
        ("road_speckle", n.road_speckle),
        ("map_sigma", n.map_sigma),
        ("map_spacing", n.map_spacing),
        ("meta_dropout", n.meta_dropout),
        ("gps_bias_max", n.gps_bias_max),
        ("gps_sigma", n.gps_sigma),
        ("wheel_sigma", n.wheel_sigma),
        ("yaw_rate_sigma", n.yaw_rate_sigma),
        ("radar_range_sigma", n.radar_range_sigma),
        ("radar_azimuth_sigma", n.radar_azimuth_sigma),
        ("radar_velocity_sigma", n.radar_velocity_sigma),
        ("radar_detection", n.radar_detection),
        ("radar_clutter", n.radar_clutter as f64),
        ("radar_moving", n.radar_moving as f64),
        ("reflector_jitter", n.reflector_jitter),
        ("shoulder", n.shoulder),
        ("parked_vehicle_spacing", n.parked_vehicle_spacing),
    ] {
        let _ = writeln!(t, "{k} = {v}");
    }
    t
}

/// Writes the complete scenario, rendering every frame.
pub fn write_scenario(scn: &Scenario, root: &Path) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    write(&root.join("scenario.cfg"), &cfg_text(scn))?;
    let mut t = format!("{TRUTH_HEADER}\n");
    for g in &scn.truth {
        let _ = writeln!(
            t,
            "{},{},{},{},{},{}",
            g.t, g.pose.x, g.pose.y, g.pose.heading, g.v, g.omega
        );
    }
    write(&root.join("truth_trajectory.csv"), &t)?;
    save_shape_points(&root.join("shape_points.csv"), &scn.shape_points)?;
    for i in 0..scn.frame_count() {
        let f = scn.frame(i)?;
        let dir = frame_dir(root, i);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        f.labels_truth.save_pgm(&dir.join("labels_truth.pgm"))?;
        f.labels_noisy.save_pgm(&dir.join("labels_noisy.pgm"))?;
        let img = scn.render_image(i, &f.labels_truth)?;
        crate::image::save_pgm(&dir.join("image.pgm"), &img)?;
        let mut r = format!("{RADAR_HEADER}\n");
        for x in &f.radar {
            let _ = writeln!(r, "{},{},{}", x.range, x.azimuth, x.relvel);
        }
        write(&dir.join("radar.csv"), &r)?;
        let o = &f.odometry;
        write(
            &dir.join("odom.csv"),
            &format!(
                "{ODOM_HEADER}\n{},{},{},{},{},{}\n",
                o.t, o.wheels[0], o.wheels[1], o.wheels[2], o.wheels[3], o.yaw_rate
            ),
        )?;
        write(
            &dir.join("gps.csv"),
            &format!("{GPS_HEADER}\n{},{},{}\n", f.t, f.gps.x, f.gps.y),
        )?;
    }
    Ok(())
}

/// A scenario read back from disk; frames are loaded on demand.
#[derive(Debug, Clone)]
pub struct ScenarioDir {
    root: PathBuf,
    meta: ScenarioMeta,
    truth: Vec<GroundTruthState>,
    shape_points: Vec<ShapePoint>,
}

impl ScenarioDir {
    pub fn open(root: &Path) -> Result<Self> {
        let cfg_path = root.join("scenario.cfg");
        let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let mut preset = None;
        let mut seed = None;
        let mut frames = None;
        let mut frame_rate = None;
        let mut lane_count = None;
        let mut lane_width = None;
        for (k, v, line) in parse_key_values(&text, &cfg_path)? {
            let bad = || Error::parse(&cfg_path, format!("line {line}: bad value `{v}` for `{k}`"));
            match k.as_str() {
                "preset" => preset = Some(v.parse::<Preset>().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                "frames" => frames = Some(v.parse::<usize>().map_err(|_| bad())?),
                "frame_rate" => frame_rate = Some(v.parse::<f64>().map_err(|_| bad())?),
                "lane_count" => lane_count = Some(v.parse::<u32>().map_err(|_| bad())?),
                "lane_width" => lane_width = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => {}
            }
        }
        let need = |name: &str| Error::parse(&cfg_path, format!("missing key `{name}`"));
        let meta = ScenarioMeta {
            preset: preset.ok_or_else(|| need("preset"))?,
            seed: seed.ok_or_else(|| need("seed"))?,
            frames: frames.ok_or_else(|| need("frames"))?,
            frame_rate: frame_rate.ok_or_else(|| need("frame_rate"))?,
            lane_count: lane_count.ok_or_else(|| need("lane_count"))?,
            lane_width: lane_width.ok_or_else(|| need("lane_width"))?,
        };
        let truth_path = root.join("truth_trajectory.csv");
        let truth: Vec<GroundTruthState> = read_table(&truth_path, TRUTH_HEADER)?
            .into_iter()
            .map(|r| GroundTruthState {
                t: r[0],
                pose: Pose2::new(r[1], r[2], r[3]),
                v: r[4],
                omega: r[5],
            })
            .collect();
        if truth.len() < meta.frames {
            return Err(Error::parse(
                &truth_path,
                format!("{} rows for {} frames", truth.len(), meta.frames),
            ));
        }
        let shape_points = load_shape_points(&root.join("shape_points.csv"))?;
        Ok(Self {
            root: root.to_path_buf(),
            meta,
            truth,
            shape_points,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl FrameSource for ScenarioDir {
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
        let dir = frame_dir(&self.root, index);
        let radar = read_table(&dir.join("radar.csv"), RADAR_HEADER)?
            .into_iter()
            .map(|r| RadarReflection {
                range: r[0],
                azimuth: r[1],
                relvel: r[2],
            })
            .collect();
        let odom_path = dir.join("odom.csv");
        let odom = read_table(&odom_path, ODOM_HEADER)?;
        let o = odom
            .first()
            .ok_or_else(|| Error::parse(&odom_path, "no odometry row"))?;
        let gps_path = dir.join("gps.csv");
        let gps = read_table(&gps_path, GPS_HEADER)?;
        let g = gps.first().ok_or_else(|| Error::parse(&gps_path, "no gps row"))?;
        Ok(FrameBundle {
            index,
            t: g[0],
            radar,
            odometry: Odometry {
                t: o[0],
                wheels: [o[1], o[2], o[3], o[4]],
                yaw_rate: o[5],
            },
            gps: Vec2::new(g[1], g[2]),
            labels_truth: ClassMembershipMap::load_pgm(&dir.join("labels_truth.pgm"))?,
            labels_noisy: ClassMembershipMap::load_pgm(&dir.join("labels_noisy.pgm"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ScenarioConfig;

    #[test]
    fn disk_round_trip_matches_memory() {
        let scn = Scenario::generate(&ScenarioConfig {
            frames: 3,
            ..ScenarioConfig::preset(Preset::B, 11)
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scenario(&scn, dir.path()).unwrap();
        let disk = ScenarioDir::open(dir.path()).unwrap();
        assert_eq!(disk.meta(), scn.meta());
        assert_eq!(disk.shape_points(), scn.shape_points());
        for (a, b) in disk.truth().iter().zip(scn.truth()) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.pose, b.pose);
        }
        for i in 0..3 {
            assert_eq!(disk.frame(i).unwrap(), scn.frame(i).unwrap());
        }
        let missing = disk.frame(3).unwrap_err().to_string();
        assert!(missing.contains("frame_000003"), "{missing}");
    }

    #[test]
    fn bad_header_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gps.csv");
        std::fs::write(&p, "t,x,y\n0,1,2\n").unwrap();
        let e = read_table(&p, GPS_HEADER).unwrap_err().to_string();
        assert!(e.contains("expected header"));
    }
}
