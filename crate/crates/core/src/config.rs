//! Pipeline configuration and its INI-style `key = value` text format.
//!
//! Keys may be written fully qualified (`grid.cell_size = 0.25`) or inside a
//! `[grid]` section. `#` and `;` start comments.

use std::fmt::Write as _;
use std::path::Path;

use crate::camera::Camera;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub cell_size: f64,
    /// Extent along the forward axis.
    pub length: f64,
    /// Extent across the forward axis.
    pub width: f64,
    /// Distance from the rear edge to the ego position.
    pub rear: f64,
    pub increment: f64,
    pub decay: f64,
    pub static_gate: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.25,
            length: 120.0,
            width: 60.0,
            rear: 30.0,
            increment: 0.3,
            decay: 0.98,
            static_gate: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoConfig {
    pub sigma_accel: f64,
    pub sigma_yaw_accel: f64,
    pub sigma_wheel_speed: f64,
    pub sigma_yaw_rate: f64,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            sigma_accel: 0.5,
            sigma_yaw_accel: 0.1,
            sigma_wheel_speed: 0.1,
            sigma_yaw_rate: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingConfig {
    pub particles: usize,
    /// Score temperature τ in `w ∝ exp(score / τ)`.
    pub temperature: f64,
    pub kernel_half_width: f64,
    /// Lateral kernel weights fall linearly from 1 at the border to
    /// `1 - kernel_taper` at the kernel edge.
    pub kernel_taper: f64,
    pub border_step: f64,
    pub behind: f64,
    pub ahead: f64,
    pub ess_fraction: f64,
    pub diffusion_s: f64,
    pub diffusion_d: f64,
    pub diffusion_heading: f64,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            particles: 500,
            temperature: 0.0085,
            kernel_half_width: 0.5,
            kernel_taper: 0.5,
            border_step: 1.0,
            behind: 25.0,
            ahead: 85.0,
            ess_fraction: 0.5,
            diffusion_s: 0.15,
            diffusion_d: 0.05,
            diffusion_heading: 0.003,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub min_component_fraction: f64,
    pub occlusion_radius: usize,
    pub occlude_vru: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            min_component_fraction: 0.005,
            occlusion_radius: 2,
            occlude_vru: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingConfig {
    pub bin_length: f64,
    pub max_range: f64,
    pub history: usize,
    pub min_count: usize,
    pub iqr_max: f64,
    /// Largest run of unreliable bins bridged by interpolation before a side
    /// falls back to extrapolation from the opposite border.
    pub max_gap_bins: usize,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            bin_length: 2.0,
            max_range: 60.0,
            history: 30,
            min_count: 3,
            iqr_max: 0.5,
            max_gap_bins: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub d0: f64,
    pub d1: f64,
    pub step: f64,
    pub range: f64,
    pub extrapolated_discount: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            d0: 10.0,
            d1: 40.0,
            step: 1.0,
            range: 60.0,
            extrapolated_discount: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub frame_rate: f64,
    pub map_window: f64,
    /// Ego displacement from the last build center that triggers a map
    /// rebuild.
    pub map_rebuild: f64,
    pub eval_range: f64,
    pub eval_step: f64,
    pub grid: GridConfig,
    pub ego: EgoConfig,
    pub matching: MatchingConfig,
    pub detection: DetectionConfig,
    pub shaping: ShapingConfig,
    pub fusion: FusionConfig,
    pub camera: Camera,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            frame_rate: 20.0,
            map_window: 150.0,
            map_rebuild: 50.0,
            eval_range: 30.0,
            eval_step: 1.0,
            grid: GridConfig::default(),
            ego: EgoConfig::default(),
            matching: MatchingConfig::default(),
            detection: DetectionConfig::default(),
            shaping: ShapingConfig::default(),
            fusion: FusionConfig::default(),
            camera: Camera::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be > 0, got {v}")))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl PipelineConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        for (n, v) in [
            ("frame_rate", self.frame_rate),
            ("map_window", self.map_window),
            ("map_rebuild", self.map_rebuild),
            ("eval.range", self.eval_range),
            ("eval.step", self.eval_step),
            ("grid.cell_size", g.cell_size),
            ("grid.length", g.length),
            ("grid.width", g.width),
            ("grid.increment", g.increment),
            ("grid.decay", g.decay),
            ("grid.static_gate", g.static_gate),
            ("matching.temperature", self.matching.temperature),
            ("matching.kernel_half_width", self.matching.kernel_half_width),
            ("matching.border_step", self.matching.border_step),
            ("shaping.bin_length", self.shaping.bin_length),
            ("shaping.max_range", self.shaping.max_range),
            ("shaping.iqr_max", self.shaping.iqr_max),
            ("fusion.d0", self.fusion.d0),
            ("fusion.d1", self.fusion.d1),
            ("fusion.step", self.fusion.step),
            ("fusion.range", self.fusion.range),
            ("camera.focal", self.camera.focal),
            ("camera.mount_height", self.camera.mount_height),
            ("camera.pitch", self.camera.pitch),
        ] {
            positive(n, v)?;
        }
        unit_interval("grid.decay", g.decay)?;
        unit_interval("grid.increment", g.increment)?;
        unit_interval("matching.kernel_taper", self.matching.kernel_taper)?;
        unit_interval("matching.ess_fraction", self.matching.ess_fraction)?;
        unit_interval("fusion.extrapolated_discount", self.fusion.extrapolated_discount)?;
        unit_interval(
            "detection.min_component_fraction",
            self.detection.min_component_fraction,
        )?;
        if !(g.rear >= 0.0 && g.rear < g.length) {
            return Err(Error::Config("grid.rear must lie in [0, grid.length)".into()));
        }
        if self.fusion.d0 >= self.fusion.d1 {
            return Err(Error::Config(format!(
                "fusion.d0 ({}) must be smaller than fusion.d1 ({})",
                self.fusion.d0, self.fusion.d1
            )));
        }
        if self.matching.particles == 0 {
            return Err(Error::Config("matching.particles must be >= 1".into()));
        }
        if self.shaping.history == 0 {
            return Err(Error::Config("shaping.history must be >= 1".into()));
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return Err(Error::Config("camera image size must be non-zero".into()));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn f(v: &str) -> std::result::Result<f64, String> {
            v.parse().map_err(|_| format!("`{v}` is not a number"))
        }
        fn u(v: &str) -> std::result::Result<usize, String> {
            v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
        }
        fn b(v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(format!("`{v}` is not a boolean")),
            }
        }
        match key {
            "seed" => self.seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?,
            "frame_rate" => self.frame_rate = f(value)?,
            "map_window" => self.map_window = f(value)?,
            "map_rebuild" => self.map_rebuild = f(value)?,
            "eval.range" => self.eval_range = f(value)?,
            "eval.step" => self.eval_step = f(value)?,
            "grid.cell_size" => self.grid.cell_size = f(value)?,
            "grid.length" => self.grid.length = f(value)?,
            "grid.width" => self.grid.width = f(value)?,
            "grid.rear" => self.grid.rear = f(value)?,
            "grid.increment" => self.grid.increment = f(value)?,
            "grid.decay" => self.grid.decay = f(value)?,
            "grid.static_gate" => self.grid.static_gate = f(value)?,
            "ego.sigma_accel" => self.ego.sigma_accel = f(value)?,
            "ego.sigma_yaw_accel" => self.ego.sigma_yaw_accel = f(value)?,
            "ego.sigma_wheel_speed" => self.ego.sigma_wheel_speed = f(value)?,
            "ego.sigma_yaw_rate" => self.ego.sigma_yaw_rate = f(value)?,
            "matching.particles" => self.matching.particles = u(value)?,
            "matching.temperature" => self.matching.temperature = f(value)?,
            "matching.kernel_half_width" => self.matching.kernel_half_width = f(value)?,
            "matching.kernel_taper" => self.matching.kernel_taper = f(value)?,
            "matching.border_step" => self.matching.border_step = f(value)?,
            "matching.behind" => self.matching.behind = f(value)?,
            "matching.ahead" => self.matching.ahead = f(value)?,
            "matching.ess_fraction" => self.matching.ess_fraction = f(value)?,
            "matching.diffusion_s" => self.matching.diffusion_s = f(value)?,
            "matching.diffusion_d" => self.matching.diffusion_d = f(value)?,
            "matching.diffusion_heading" => self.matching.diffusion_heading = f(value)?,
            "detection.min_component_fraction" => {
                self.detection.min_component_fraction = f(value)?
            }
            "detection.occlusion_radius" => self.detection.occlusion_radius = u(value)?,
            "detection.occlude_vru" => self.detection.occlude_vru = b(value)?,
            "shaping.bin_length" => self.shaping.bin_length = f(value)?,
            "shaping.max_range" => self.shaping.max_range = f(value)?,
            "shaping.history" => self.shaping.history = u(value)?,
            "shaping.min_count" => self.shaping.min_count = u(value)?,
            "shaping.iqr_max" => self.shaping.iqr_max = f(value)?,
            "shaping.max_gap_bins" => self.shaping.max_gap_bins = u(value)?,
            "fusion.d0" => self.fusion.d0 = f(value)?,
            "fusion.d1" => self.fusion.d1 = f(value)?,
            "fusion.step" => self.fusion.step = f(value)?,
            "fusion.range" => self.fusion.range = f(value)?,
            "fusion.extrapolated_discount" => self.fusion.extrapolated_discount = f(value)?,
            "camera.width" => self.camera.width = u(value)?,
            "camera.height" => self.camera.height = u(value)?,
            "camera.focal" => self.camera.focal = f(value)?,
            "camera.cx" => self.camera.cx = f(value)?,
            "camera.cy" => self.camera.cy = f(value)?,
            "camera.mount_height" => self.camera.mount_height = f(value)?,
            "camera.pitch" => self.camera.pitch = f(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value, line) in parse_key_values(text, source)? {
            cfg.set(&key, &value)
                .map_err(|m| Error::parse(source, format!("line {line}: {m}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Serializes every key; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let m = &self.matching;
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "frame_rate = {}", self.frame_rate);
        let _ = writeln!(s, "map_window = {}", self.map_window);
        let _ = writeln!(s, "map_rebuild = {}", self.map_rebuild);
        let _ = writeln!(s, "\n[eval]\nrange = {}\nstep = {}", self.eval_range, self.eval_step);
        let _ = writeln!(
            s,
            "\n[grid]\ncell_size = {}\nlength = {}\nwidth = {}\nrear = {}\nincrement = {}\ndecay = {}\nstatic_gate = {}",
            g.cell_size, g.length, g.width, g.rear, g.increment, g.decay, g.static_gate
        );
        let e = &self.ego;
        let _ = writeln!(
            s,
            "\n[ego]\nsigma_accel = {}\nsigma_yaw_accel = {}\nsigma_wheel_speed = {}\nsigma_yaw_rate = {}",
            e.sigma_accel, e.sigma_yaw_accel, e.sigma_wheel_speed, e.sigma_yaw_rate
        );
        let _ = writeln!(
            s,
            "\n[matching]\nparticles = {}\ntemperature = {}\nkernel_half_width = {}\nkernel_taper = {}\nborder_step = {}\nbehind = {}\nahead = {}\ness_fraction = {}\ndiffusion_s = {}\ndiffusion_d = {}\ndiffusion_heading = {}",
            m.particles, m.temperature, m.kernel_half_width, m.kernel_taper, m.border_step, m.behind, m.ahead,
            m.ess_fraction, m.diffusion_s, m.diffusion_d, m.diffusion_heading
        );
        let d = &self.detection;
        let _ = writeln!(
            s,
            "\n[detection]\nmin_component_fraction = {}\nocclusion_radius = {}\nocclude_vru = {}",
            d.min_component_fraction, d.occlusion_radius, d.occlude_vru
        );
        let sh = &self.shaping;
        let _ = writeln!(
            s,
            "\n[shaping]\nbin_length = {}\nmax_range = {}\nhistory = {}\nmin_count = {}\niqr_max = {}\nmax_gap_bins = {}",
            sh.bin_length, sh.max_range, sh.history, sh.min_count, sh.iqr_max, sh.max_gap_bins
        );
        let fu = &self.fusion;
        let _ = writeln!(
            s,
            "\n[fusion]\nd0 = {}\nd1 = {}\nstep = {}\nrange = {}\nextrapolated_discount = {}",
            fu.d0, fu.d1, fu.step, fu.range, fu.extrapolated_discount
        );
        let c = &self.camera;
        let _ = writeln!(
            s,
            "\n[camera]\nwidth = {}\nheight = {}\nfocal = {}\ncx = {}\ncy = {}\nmount_height = {}\npitch = {}",
            c.width, c.height, c.focal, c.cx, c.cy, c.mount_height, c.pitch
        );
        s
    }
}

/// Splits INI-style text into fully qualified `(key, value, line)` triples.
pub fn parse_key_values(text: &str, source: &Path) -> Result<Vec<(String, String, usize)>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(
                source,
                format!("line {}: expected `key = value`", i + 1),
            ));
        };
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        out.push((key, v.trim().to_string(), i + 1));
    }
    Ok(out)
}
