//! Road-course estimation from camera segmentation, radar occupancy grids and
//! digital map shape points.

pub mod camera;
pub mod config;
pub mod detection;
pub mod dmap;
pub mod ego;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod image;
pub mod labels;
pub mod matching;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod shape_points;
pub mod shaping;
pub mod sim;
pub mod spline;

pub use camera::Camera;
pub use config::PipelineConfig;
pub use dmap::{DigitalMap, Side};
pub use ego::{EgoEstimator, EgoState};
pub use grid::GridMap;
pub use matching::{MatchResult, ParticleFilter};
pub use error::{Error, Result};
pub use geometry::{Pose2, Vec2};
pub use image::{GrayImage, Grid2};
pub use labels::{ClassId, ClassMembershipMap, NUM_CLASSES};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use pipeline::{run, Pipeline, RunOptions, RunSummary};
pub use detection::Detection;
pub use eval::EvaluationReport;
pub use fusion::{CourseMode, FusedRoadCourse};
pub use shaping::OpticalMap;
pub use shape_points::{LaneMeta, ShapePoint};
pub use spline::HermiteSpline;
