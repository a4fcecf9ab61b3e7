//! Named noise presets.
//!
//! A–E are qualitative analogues of increasingly hard driving conditions;
//! `Z` switches every noise source off.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
    Z,
}

impl Preset {
    pub const GRADED: [Preset; 5] = [Preset::A, Preset::B, Preset::C, Preset::D, Preset::E];

    pub fn description(self) -> &'static str {
        match self {
            Preset::A => "regular",
            Preset::B => "wet road",
            Preset::C => "rain",
            Preset::D => "heavy snowfall",
            Preset::E => "bad lane markings",
            Preset::Z => "noise free",
        }
    }

    pub fn noise(self) -> NoiseProfile {
        let base = NoiseProfile::default();
        match self {
            Preset::A => NoiseProfile {
                label_flip: 0.02,
                road_speckle: 0.0,
                map_sigma: 0.5,
                ..base
            },
            Preset::B => NoiseProfile {
                label_flip: 0.04,
                road_speckle: 0.02,
                ..base
            },
            Preset::C => NoiseProfile {
                label_flip: 0.07,
                road_speckle: 0.04,
                radar_clutter: 8,
                ..base
            },
            Preset::D => NoiseProfile {
                label_flip: 0.15,
                road_speckle: 0.10,
                radar_clutter: 12,
                radar_detection: 0.10,
                ..base
            },
            Preset::E => NoiseProfile {
                label_flip: 0.05,
                road_speckle: 0.02,
                parked_vehicle_spacing: 60.0,
                ..base
            },
            Preset::Z => NoiseProfile::zero(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Preset::A => "A",
            Preset::B => "B",
            Preset::C => "C",
            Preset::D => "D",
            Preset::E => "E",
            Preset::Z => "Z",
        };
        f.write_str(s)
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Preset::A),
            "B" => Ok(Preset::B),
            "C" => Ok(Preset::C),
            "D" => Ok(Preset::D),
            "E" => Ok(Preset::E),
            "Z" | "ZERO" => Ok(Preset::Z),
            _ => Err(Error::InvalidInput(format!(
                "unknown preset `{s}` (expected A, B, C, D, E or Z)"
            ))),
        }
    }
}

/// Every stochastic knob of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    /// Probability that a pixel label is replaced by a different class.
    pub label_flip: f64,
    /// Probability that a true road pixel is turned into background.
    pub road_speckle: f64,
    /// Gaussian noise on every map shape point coordinate (m).
    pub map_sigma: f64,
    /// Distance between map shape points (m).
    pub map_spacing: f64,
    /// Fraction of shape points without lane metadata.
    pub meta_dropout: f64,
    pub gps_bias_max: f64,
    pub gps_sigma: f64,
    pub wheel_sigma: f64,
    pub yaw_rate_sigma: f64,
    pub radar_range_sigma: f64,
    pub radar_azimuth_sigma: f64,
    pub radar_velocity_sigma: f64,
    pub radar_detection: f64,
    pub radar_clutter: usize,
    pub radar_moving: usize,
    /// Lateral scatter of border reflectors (m).
    pub reflector_jitter: f64,
    /// Distance of the reflector line beyond the road edge (m).
    pub shoulder: f64,
    /// Mean distance between parked vehicles on the right edge (m); 0 = none.
    pub parked_vehicle_spacing: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            label_flip: 0.0,
            road_speckle: 0.0,
            map_sigma: 1.0,
            map_spacing: 25.0,
            meta_dropout: 0.0,
            gps_bias_max: 10.0,
            gps_sigma: 2.0,
            wheel_sigma: 0.1,
            yaw_rate_sigma: 0.005,
            radar_range_sigma: 0.2,
            radar_azimuth_sigma: 0.5f64.to_radians(),
            radar_velocity_sigma: 0.1,
            radar_detection: 0.15,
            radar_clutter: 4,
            radar_moving: 2,
            reflector_jitter: 0.1,
            shoulder: 0.3,
            parked_vehicle_spacing: 150.0,
        }
    }
}

impl NoiseProfile {
    pub fn zero() -> Self {
        Self {
            label_flip: 0.0,
            road_speckle: 0.0,
            map_sigma: 0.0,
            map_spacing: 5.0,
            meta_dropout: 0.0,
            gps_bias_max: 0.0,
            gps_sigma: 0.0,
            wheel_sigma: 0.0,
            yaw_rate_sigma: 0.0,
            radar_range_sigma: 0.0,
            radar_azimuth_sigma: 0.0,
            radar_velocity_sigma: 0.0,
            radar_detection: 0.15,
            radar_clutter: 0,
            radar_moving: 0,
            reflector_jitter: 0.0,
            shoulder: 0.0,
            parked_vehicle_spacing: 0.0,
        }
    }

    /// Expected fraction of true road pixels not labelled road after
    /// degradation.
    pub fn road_corruption_rate(&self) -> f64 {
        1.0 - (1.0 - self.label_flip) * (1.0 - self.road_speckle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_order_by_label_noise() {
        let rates: Vec<f64> = [Preset::A, Preset::B, Preset::C, Preset::D]
            .iter()
            .map(|p| p.noise().road_corruption_rate())
            .collect();
        assert!(rates.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(Preset::Z.noise().road_corruption_rate(), 0.0);
        assert!((Preset::D.noise().road_corruption_rate() - 0.235).abs() < 1e-12);
    }

    #[test]
    fn parse_round_trip() {
        for p in [Preset::A, Preset::B, Preset::C, Preset::D, Preset::E, Preset::Z] {
            assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
        }
        assert!("F".parse::<Preset>().is_err());
    }
}
