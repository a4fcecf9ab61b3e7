//! Frame loop: ego motion, grid, digital map, matching, detection, shaping,
//! fusion and evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::PipelineConfig;
use crate::detection::detect;
use crate::dmap::DigitalMap;
use crate::ego::EgoEstimator;
use crate::error::{Error, Result};
use crate::eval::{course_errors, eval_distances, truth_ahead, ErrorAccumulator, EvaluationReport};
use crate::fusion::{fuse, CourseMode, DigitalCourse, FusedRoadCourse};
use crate::geometry::{Pose2, Vec2};
use crate::grid::GridMap;
use crate::matching::{BorderLattice, InitSource, MatchResult, ParticleFilter};
use crate::shape_points::{LaneMeta, ShapePoint};
use crate::shaping::{BinStore, OpticalMap};
use crate::sim::{frame_dir, FrameBundle, FrameSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Noisy,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Disables road detection; every frame runs digital-only.
    pub optical: bool,
    pub labels: LabelSource,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            optical: true,
            labels: LabelSource::Noisy,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub index: usize,
    pub matched: Option<MatchResult>,
    pub optical: Option<OpticalMap>,
    /// Fused course (digital-only when the optical map is invalid).
    pub course: Option<FusedRoadCourse>,
    /// Digital-only course of the same frame.
    pub digital: Option<FusedRoadCourse>,
    pub mode: CourseMode,
    pub optical_valid: bool,
}

/// Stateful per-stream estimator.
pub struct Pipeline {
    cfg: PipelineConfig,
    options: RunOptions,
    shape_points: Vec<ShapePoint>,
    ego: EgoEstimator,
    grid: Option<GridMap>,
    dmap: Option<(DigitalMap, BorderLattice)>,
    pf: ParticleFilter,
    last_match: Option<MatchResult>,
    bins: BinStore,
}

impl Pipeline {
    pub fn new(cfg: &PipelineConfig, shape_points: &[ShapePoint], options: RunOptions) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            options,
            shape_points: shape_points.to_vec(),
            ego: EgoEstimator::new(cfg.ego.clone()),
            grid: None,
            dmap: None,
            pf: ParticleFilter::new(&cfg.matching, cfg.seed),
            last_match: None,
            bins: BinStore::new(&cfg.shaping),
        })
    }

    pub fn grid(&self) -> Option<&GridMap> {
        self.grid.as_ref()
    }

    pub fn digital_map(&self) -> Option<&DigitalMap> {
        self.dmap.as_ref().map(|d| &d.0)
    }

    /// Keeps the local digital map around `position`, rebuilding it when
    /// the ego has moved far enough from the last build center.
    fn refresh_map(&mut self, position: Vec2) {
        let stale = self
            .dmap
            .as_ref()
            .is_none_or(|(m, _)| (m.built_around() - position).norm() > self.cfg.map_rebuild);
        if !stale {
            return;
        }
        match DigitalMap::build(&self.shape_points, position, self.cfg.map_window) {
            Ok(m) => {
                if let Some((old, _)) = &self.dmap {
                    if self.pf.is_initialized() {
                        self.pf.rebase(old, &m);
                    }
                }
                let lat = BorderLattice::new(&m, self.cfg.matching.border_step);
                self.dmap = Some((m, lat));
            }
            Err(e) => {
                log::warn!("digital map unavailable: {e}");
                if self.dmap.as_ref().is_some_and(|(m, _)| (m.built_around() - position).norm() > self.cfg.map_window) {
                    self.dmap = None;
                }
            }
        }
    }

    pub fn step(&mut self, frame: &FrameBundle) -> Result<FrameOutput> {
        let dt = 1.0 / self.cfg.frame_rate;
        let o = &frame.odometry;
        let delta = self.ego.step(o.wheels, o.yaw_rate, dt)?;
        let odom = self.ego.pose();
        let speed = self.ego.state().map(|s| s.speed()).unwrap_or(0.0);
        let grid = self.grid.get_or_insert_with(|| GridMap::new(&self.cfg.grid, &odom));
        grid.recenter(&odom);
        grid.integrate(&frame.radar, &odom, speed);

        let predicted = self.last_match.map(|m| m.pose.compose(&delta).position());
        self.refresh_map(predicted.unwrap_or(frame.gps));

        let mut matched = None;
        if let Some((dmap, lat)) = &self.dmap {
            let grid = self.grid.as_ref().expect("grid initialized above");
            let mut motion = delta;
            if !self.pf.is_initialized() {
                let src = match self.last_match {
                    Some(m) => InitSource::Previous(m),
                    None => InitSource::Gps(frame.gps),
                };
                self.pf.initialize(Some(&src), dmap)?;
                motion = Pose2::default();
            }
            let r = self.pf.step(grid, dmap, lat, &motion, &odom)?;
            self.last_match = Some(r);
            matched = Some(r);
        }

        let meta = match (&self.dmap, matched) {
            (Some((m, _)), Some(r)) => m.meta_at(r.s_hat),
            _ => LaneMeta::FALLBACK,
        };
        let optical = if self.options.optical {
            let labels = match self.options.labels {
                LabelSource::Noisy => &frame.labels_noisy,
                LabelSource::Truth => &frame.labels_truth,
            };
            let obs = match detect(labels, &self.cfg.camera, &self.cfg.detection) {
                Ok(d) => d.observations,
                Err(e) => {
                    log::debug!("frame {}: {e}", frame.index);
                    Vec::new()
                }
            };
            self.bins.accumulate(&obs, &delta);
            Some(self.bins.shape(meta.road_width()))
        } else {
            None
        };
        let optical_valid = optical.as_ref().is_some_and(|o| o.valid);

        let (course, digital) = match (&self.dmap, matched) {
            (Some((m, _)), Some(r)) => {
                let dc = DigitalCourse::new(m, &r.pose, self.cfg.fusion.range);
                (
                    fuse(optical.as_ref(), &dc, &self.cfg.fusion).ok(),
                    fuse(None, &dc, &self.cfg.fusion).ok(),
                )
            }
            _ => (None, None),
        };
        Ok(FrameOutput {
            index: frame.index,
            matched,
            mode: if optical_valid {
                CourseMode::Fused
            } else {
                CourseMode::DigitalOnly
            },
            optical,
            course,
            digital,
            optical_valid,
        })
    }
}

/// Evaluation of one run in both configurations.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub fused: EvaluationReport,
    pub digital: EvaluationReport,
    pub frames: usize,
}

/// Receives every frame's output (for writing diagnostics).
pub trait FrameSink {
    fn frame(&mut self, out: &FrameOutput) -> Result<()>;
}

impl FrameSink for () {
    fn frame(&mut self, _: &FrameOutput) -> Result<()> {
        Ok(())
    }
}

/// Runs every frame of `source` in order and evaluates both the fused and
/// the digital-only course against the ground truth.
pub fn run(
    source: &dyn FrameSource,
    cfg: &PipelineConfig,
    options: RunOptions,
    sink: &mut dyn FrameSink,
) -> Result<RunSummary> {
    let mut p = Pipeline::new(cfg, source.shape_points(), options)?;
    let ds = eval_distances(cfg.eval_range, cfg.eval_step);
    let mut fused = ErrorAccumulator::new(ds.clone());
    let mut digital = ErrorAccumulator::new(ds.clone());
    let frames = source.meta().frames;
    let truth = source.truth();
    for i in 0..frames {
        let bundle = source.frame(i)?;
        let out = p.step(&bundle)?;
        let pts = truth_ahead(truth, i, &ds);
        let err = |c: &Option<FusedRoadCourse>| c.as_ref().map(|c| course_errors(c, &pts)).unwrap_or_default();
        fused.push(&err(&out.course), out.optical_valid);
        digital.push(&err(&out.digital), false);
        sink.frame(&out)?;
    }
    Ok(RunSummary {
        fused: fused.report(),
        digital: digital.report(),
        frames,
    })
}

pub const MATCH_HEADER: &str = "frame,s_hat,d_hat,psi_hat,confidence";
pub const FRAMES_HEADER: &str = "frame,mode,optical_valid,matched,degraded,lane_count";

/// Writes `match.csv`, `frames.csv` and per-frame `fused.csv`, `digital.csv`
/// and `optical.csv` under a run directory.
pub struct RunWriter {
    root: std::path::PathBuf,
    matches: String,
    frames: String,
}

impl RunWriter {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            matches: format!("{MATCH_HEADER}\n"),
            frames: format!("{FRAMES_HEADER}\n"),
        })
    }

    fn write(path: &Path, text: &str) -> Result<()> {
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Flushes the run-level tables and the evaluation summary.
    pub fn finish(self, summary: &RunSummary, label: &str) -> Result<()> {
        Self::write(&self.root.join("match.csv"), &self.matches)?;
        Self::write(&self.root.join("frames.csv"), &self.frames)?;
        write_evaluation(&self.root, summary, label)
    }
}

impl FrameSink for RunWriter {
    fn frame(&mut self, out: &FrameOutput) -> Result<()> {
        let dir = frame_dir(&self.root, out.index);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        if let Some(m) = out.matched {
            let _ = writeln!(
                self.matches,
                "{},{:.4},{:.4},{:.6},{:.6}",
                out.index, m.s_hat, m.d_hat, m.psi_hat, m.confidence
            );
        }
        let lane_count = out.course.as_ref().map(|c| c.lane_count).unwrap_or(0);
        let _ = writeln!(
            self.frames,
            "{},{},{},{},{},{}",
            out.index,
            out.mode.name(),
            out.optical_valid as u8,
            out.matched.is_some() as u8,
            out.matched.is_some_and(|m| m.degraded) as u8,
            lane_count
        );
        if let Some(c) = &out.course {
            Self::write(&dir.join("fused.csv"), &c.to_csv())?;
        }
        if let Some(c) = &out.digital {
            Self::write(&dir.join("digital.csv"), &c.to_csv())?;
        }
        if let Some(o) = &out.optical {
            Self::write(&dir.join("optical.csv"), &o.to_csv())?;
        }
        Ok(())
    }
}

pub const SUMMARY_HEADER: &str = "label,frames,fused_error_m,digital_error_m,availability";
pub const PROFILE_HEADER: &str = "d_m,fused_error_m,digital_error_m";

/// `evaluation.csv` (one summary row) and `profile.csv` (error per
/// distance for both configurations).
pub fn write_evaluation(root: &Path, summary: &RunSummary, label: &str) -> Result<()> {
    let f = &summary.fused;
    let d = &summary.digital;
    let text = format!(
        "{SUMMARY_HEADER}\n{label},{},{:.6},{:.6},{:.6}\n",
        summary.frames, f.mean_error, d.mean_error, f.availability
    );
    let path = root.join("evaluation.csv");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let mut prof = format!("{PROFILE_HEADER}\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for (i, dist) in f.distances.iter().enumerate() {
        let _ = writeln!(prof, "{dist:.2},{},{}", cell(f.profile[i]), cell(d.profile[i]));
    }
    let path = root.join("profile.csv");
    fs::write(&path, prof).map_err(|e| Error::io(&path, e))
}

/// Per-frame lines of a run's `frames.csv`: `(mode, optical_valid, lane_count)`.
fn read_frames(path: &Path) -> Result<Vec<(String, bool, u32)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if header != FRAMES_HEADER {
        return Err(Error::parse(path, format!("expected header `{FRAMES_HEADER}`, found `{header}`")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let bad = || Error::parse(path, format!("row {}: malformed", i + 2));
        let index: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        if index != i {
            return Err(Error::parse(path, format!("row {}: frame {index} out of order", i + 2)));
        }
        let mode = rec.get(1).ok_or_else(bad)?.to_string();
        let valid = rec.get(2).ok_or_else(bad)? == "1";
        let lanes: u32 = rec.get(5).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        out.push((mode, valid, lanes));
    }
    Ok(out)
}

fn read_course(path: &Path, lane_count: u32, mode: CourseMode) -> Result<Option<FusedRoadCourse>> {
    if !path.exists() {
        return Ok(None);
    }
    let rows = crate::sim::read_table(path, crate::fusion::COURSE_HEADER)?;
    let samples = rows
        .iter()
        .map(|r| crate::fusion::CourseSample {
            d: r[0],
            left: r[1],
            right: r[2],
            w_left: r[3],
            w_right: r[3],
        })
        .collect();
    Ok(Some(FusedRoadCourse {
        samples,
        mode,
        lane_count,
    }))
}

/// Re-evaluates a run directory written by [`RunWriter`] against the
/// ground truth of `source`.
pub fn evaluate_run(source: &dyn FrameSource, run_dir: &Path, cfg: &PipelineConfig) -> Result<RunSummary> {
    let frames = read_frames(&run_dir.join("frames.csv"))?;
    if frames.len() > source.truth().len() {
        return Err(Error::InvalidInput(format!(
            "run has {} frames but the scenario only {}",
            frames.len(),
            source.truth().len()
        )));
    }
    let ds = eval_distances(cfg.eval_range, cfg.eval_step);
    let mut fused = ErrorAccumulator::new(ds.clone());
    let mut digital = ErrorAccumulator::new(ds.clone());
    for (i, (mode, valid, lanes)) in frames.iter().enumerate() {
        let dir = frame_dir(run_dir, i);
        let m = if mode == CourseMode::Fused.name() {
            CourseMode::Fused
        } else {
            CourseMode::DigitalOnly
        };
        let pts = truth_ahead(source.truth(), i, &ds);
        let err = |c: Option<FusedRoadCourse>| c.map(|c| course_errors(&c, &pts)).unwrap_or_default();
        fused.push(&err(read_course(&dir.join("fused.csv"), *lanes, m)?), *valid);
        digital.push(&err(read_course(&dir.join("digital.csv"), *lanes, CourseMode::DigitalOnly)?), false);
    }
    Ok(RunSummary {
        fused: fused.report(),
        digital: digital.report(),
        frames: frames.len(),
    })
}
