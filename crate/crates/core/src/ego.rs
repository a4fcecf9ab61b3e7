//! Ego-motion estimation: an extended Kalman filter with a constant turn
//! rate and velocity (CTRV) model driven by wheel speeds and a yaw-rate gyro.

use nalgebra::{Matrix2, Matrix5, Matrix5x2, SMatrix, Vector2, Vector5};

use crate::config::EgoConfig;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2};

/// Below this turn rate the straight-line equations are used.
pub const OMEGA_THRESHOLD: f64 = 1e-4;

/// Filter state `[x, y, θ, v, ω]` with covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub mean: Vector5<f64>,
    pub cov: Matrix5<f64>,
}

fn symmetrize(p: &Matrix5<f64>) -> Matrix5<f64> {
    (p + p.transpose()) * 0.5
}

/// CTRV transition and its Jacobian.
fn transition(m: &Vector5<f64>, dt: f64) -> (Vector5<f64>, Matrix5<f64>) {
    let (x, y, th, v, w) = (m[0], m[1], m[2], m[3], m[4]);
    let mut f = Matrix5::identity();
    let (nx, ny);
    if w.abs() >= OMEGA_THRESHOLD {
        let th2 = th + w * dt;
        let (s1, c1) = th.sin_cos();
        let (s2, c2) = th2.sin_cos();
        nx = x + v / w * (s2 - s1);
        ny = y + v / w * (c1 - c2);
        f[(0, 2)] = v / w * (c2 - c1);
        f[(0, 3)] = (s2 - s1) / w;
        f[(0, 4)] = v / (w * w) * (s1 - s2) + v / w * dt * c2;
        f[(1, 2)] = v / w * (s2 - s1);
        f[(1, 3)] = (c1 - c2) / w;
        f[(1, 4)] = v / (w * w) * (c2 - c1) + v / w * dt * s2;
    } else {
        // straight line along the mean heading of the step
        let phi = th + 0.5 * w * dt;
        let (s, c) = phi.sin_cos();
        nx = x + v * dt * c;
        ny = y + v * dt * s;
        f[(0, 2)] = -v * dt * s;
        f[(0, 3)] = dt * c;
        f[(0, 4)] = -0.5 * v * dt * dt * s;
        f[(1, 2)] = v * dt * c;
        f[(1, 3)] = dt * s;
        f[(1, 4)] = 0.5 * v * dt * dt * c;
    }
    f[(2, 4)] = dt;
    (
        Vector5::new(nx, ny, normalize_angle(th + w * dt), v, w),
        f,
    )
}

impl EgoState {
    pub fn new(pose: Pose2, v: f64, omega: f64, cov: Matrix5<f64>) -> Self {
        Self {
            mean: Vector5::new(pose.x, pose.y, pose.heading, v, omega),
            cov,
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn speed(&self) -> f64 {
        self.mean[3]
    }

    pub fn yaw_rate(&self) -> f64 {
        self.mean[4]
    }

    /// Propagates the state by `dt` seconds.
    pub fn predict(&self, dt: f64, noise: &EgoConfig) -> Result<EgoState> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("time step must be > 0, got {dt}")));
        }
        let (mean, f) = transition(&self.mean, dt);
        let th = self.mean[2];
        let h = 0.5 * dt * dt;
        let g = Matrix5x2::new(
            h * th.cos(),
            0.0,
            h * th.sin(),
            0.0,
            0.0,
            h,
            dt,
            0.0,
            0.0,
            dt,
        );
        let q = g
            * Matrix2::new(noise.sigma_accel.powi(2), 0.0, 0.0, noise.sigma_yaw_accel.powi(2))
            * g.transpose();
        Ok(EgoState {
            mean,
            cov: symmetrize(&(f * self.cov * f.transpose() + q)),
        })
    }

    pub fn measurement_noise(noise: &EgoConfig) -> Matrix2<f64> {
        Matrix2::new(
            noise.sigma_wheel_speed.powi(2) / 2.0,
            0.0,
            0.0,
            noise.sigma_yaw_rate.powi(2),
        )
    }

    /// Fuses wheel speeds (FL, FR, RL, RR) and yaw rate. Returns the state
    /// and whether the measurement was accepted; non-finite measurements are
    /// rejected and leave the state unchanged.
    pub fn update(&self, wheels: [f64; 4], yaw_rate: f64, noise: &EgoConfig) -> (EgoState, bool) {
        self.update_with(wheels, yaw_rate, &Self::measurement_noise(noise))
    }

    pub fn update_with(&self, wheels: [f64; 4], yaw_rate: f64, r: &Matrix2<f64>) -> (EgoState, bool) {
        if wheels.iter().any(|w| !w.is_finite()) || !yaw_rate.is_finite() {
            log::warn!("rejecting non-finite odometry measurement");
            return (*self, false);
        }
        let z = Vector2::new(0.5 * (wheels[2] + wheels[3]), yaw_rate);
        let mut hm = SMatrix::<f64, 2, 5>::zeros();
        hm[(0, 3)] = 1.0;
        hm[(1, 4)] = 1.0;
        let innovation = z - hm * self.mean;
        let s = hm * self.cov * hm.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            log::warn!("singular innovation covariance; measurement skipped");
            return (*self, false);
        };
        let k = self.cov * hm.transpose() * s_inv;
        let mut mean = self.mean + k * innovation;
        mean[2] = normalize_angle(mean[2]);
        let ikh = Matrix5::identity() - k * hm;
        let cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        (
            EgoState {
                mean,
                cov: symmetrize(&cov),
            },
            true,
        )
    }
}

/// Runs the filter over an odometry stream and reports pose increments.
#[derive(Debug, Clone)]
pub struct EgoEstimator {
    noise: EgoConfig,
    state: Option<EgoState>,
    rejected: usize,
}

impl EgoEstimator {
    pub fn new(noise: EgoConfig) -> Self {
        Self {
            noise,
            state: None,
            rejected: 0,
        }
    }

    pub fn state(&self) -> Option<&EgoState> {
        self.state.as_ref()
    }

    /// Pose in the odometry frame (origin at the first frame).
    pub fn pose(&self) -> Pose2 {
        self.state.map(|s| s.pose()).unwrap_or_default()
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Processes one frame; returns the pose increment since the previous
    /// frame, in the previous vehicle frame.
    pub fn step(&mut self, wheels: [f64; 4], yaw_rate: f64, dt: f64) -> Result<Pose2> {
        let Some(prev) = self.state else {
            let v = 0.5 * (wheels[2] + wheels[3]);
            if !v.is_finite() || !yaw_rate.is_finite() {
                self.rejected += 1;
                return Ok(Pose2::default());
            }
            let r = EgoState::measurement_noise(&self.noise);
            let mut cov = Matrix5::zeros();
            cov[(3, 3)] = r[(0, 0)];
            cov[(4, 4)] = r[(1, 1)];
            self.state = Some(EgoState::new(Pose2::default(), v, yaw_rate, cov));
            return Ok(Pose2::default());
        };
        let predicted = prev.predict(dt, &self.noise)?;
        let (next, accepted) = predicted.update(wheels, yaw_rate, &self.noise);
        if !accepted {
            self.rejected += 1;
        }
        self.state = Some(next);
        Ok(prev.pose().between(&next.pose()))
    }
}
