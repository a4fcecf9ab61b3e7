//! Synthetic driving scenarios with ground truth.

mod io;
mod presets;
pub mod render;
mod road;
mod scenario;

pub use io::{frame_dir, read_table, write_scenario, ScenarioDir, GPS_HEADER, ODOM_HEADER, RADAR_HEADER, TRUTH_HEADER};
pub use presets::{NoiseProfile, Preset};
pub use road::RoadPath;
pub(crate) use scenario::gauss;
pub use scenario::{
    emit_static, FrameBundle, FrameSource, GroundTruthState, Odometry, RadarReflection, Reflector, RoadShape,
    Scenario, ScenarioConfig, ScenarioMeta, StaticObject, VehiclePlacement, RADAR_FOV, RADAR_RANGE, START_S,
    TRACK_WIDTH, TRUTH_LOOKAHEAD,
};
