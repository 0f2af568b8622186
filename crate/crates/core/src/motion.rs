//! Constant-velocity Kalman filter over `[cx, cy, s, r, vcx, vcy, vs]` and the
//! velocity-direction-consistency prior.
//!
//! `s` is the box area in pixels² and `r = w / h`. The aspect ratio carries no
//! velocity. Process and measurement noise are recomputed from the current
//! box size on every step.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;

pub type StateVector = SVector<f64, 7>;
pub type StateCovariance = SMatrix<f64, 7, 7>;
type Measurement = SVector<f64, 4>;
type ObservationMatrix = SMatrix<f64, 4, 7>;

/// Noise configuration. Zero weights give a noiseless filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    pub init_position_var: f64,
    pub init_velocity_var: f64,
    /// Position standard deviation as a fraction of box size.
    pub std_weight_position: f64,
    /// Velocity standard deviation as a fraction of box size.
    pub std_weight_velocity: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            init_position_var: 10.0,
            init_velocity_var: 1000.0,
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

/// Box to measurement `[cx, cy, s, r]`.
pub fn bbox_to_z(b: &BBox) -> [f64; 4] {
    let (cx, cy) = b.center();
    [cx, cy, b.area(), b.width() / b.height()]
}

/// Measurement (or the leading part of a state) back to a box.
pub fn z_to_bbox(z: &[f64]) -> Option<BBox> {
    if z[2] <= 0.0 || z[3] <= 0.0 {
        return None;
    }
    BBox::from_center_area_ratio(z[0], z[1], z[2], z[3]).ok()
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> ObservationMatrix {
    let mut h = ObservationMatrix::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(p: &mut StateCovariance) {
    *p = (*p + p.transpose()) * 0.5;
}

impl KalmanState {
    pub fn new(b: &BBox, cfg: &KalmanConfig) -> Self {
        let z = bbox_to_z(b);
        let mean = StateVector::from_column_slice(&[z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0]);
        let mut diag = [cfg.init_position_var; 7];
        diag[4..].fill(cfg.init_velocity_var);
        Self {
            mean,
            covariance: StateCovariance::from_diagonal(&SVector::from_column_slice(&diag)),
        }
    }

    fn size(&self) -> f64 {
        self.mean[2].max(0.0).sqrt()
    }

    fn process_noise(&self, cfg: &KalmanConfig) -> StateCovariance {
        let (wp, wv) = (cfg.std_weight_position, cfg.std_weight_velocity);
        let (size, s, r) = (self.size(), self.mean[2].abs(), self.mean[3].abs());
        let std = [wp * size, wp * size, wp * s, wp * r, wv * size, wv * size, wv * s];
        StateCovariance::from_diagonal(&SVector::from_iterator(std.iter().map(|v| v * v)))
    }

    fn measurement_noise(&self, cfg: &KalmanConfig) -> SMatrix<f64, 4, 4> {
        let wp = cfg.std_weight_position;
        let (size, s, r) = (self.size(), self.mean[2].abs(), self.mean[3].abs());
        let std = [wp * size, wp * size, 2.0 * wp * s, wp * r];
        SMatrix::<f64, 4, 4>::from_diagonal(&SVector::from_iterator(std.iter().map(|v| v * v)))
    }

    /// One constant-velocity step. A scale velocity that would drive the area
    /// non-positive is zeroed first.
    pub fn predict(&self, cfg: &KalmanConfig) -> Self {
        let mut mean = self.mean;
        if mean[2] + mean[6] <= 0.0 {
            mean[6] = 0.0;
        }
        let q = self.process_noise(cfg);
        let f = transition();
        let mut covariance = f * self.covariance * f.transpose() + q;
        symmetrize(&mut covariance);
        Self {
            mean: f * mean,
            covariance,
        }
    }

    /// Standard Kalman correction with a Joseph-form covariance update.
    pub fn update(&self, observation_box: &BBox, cfg: &KalmanConfig) -> Self {
        let h = observation();
        let r = self.measurement_noise(cfg);
        let z = Measurement::from_column_slice(&bbox_to_z(observation_box));
        let innovation = z - h * self.mean;
        let mut s = h * self.covariance * h.transpose() + r;
        let s_inv = match s.try_inverse() {
            Some(inv) => inv,
            None => {
                // zero-noise filters can hit an exactly singular innovation covariance
                let jitter = 1e-12 * (1.0 + s.trace().abs());
                for i in 0..4 {
                    s[(i, i)] += jitter;
                }
                s.try_inverse().expect("jittered innovation covariance is invertible")
            }
        };
        let gain = self.covariance * h.transpose() * s_inv;
        let mean = self.mean + gain * innovation;
        let i_kh = StateCovariance::identity() - gain * h;
        let mut covariance = i_kh * self.covariance * i_kh.transpose() + gain * r * gain.transpose();
        symmetrize(&mut covariance);
        Self { mean, covariance }
    }

    pub fn bbox(&self) -> Option<BBox> {
        z_to_bbox(&self.mean.as_slice()[..4])
    }

    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[4], self.mean[5])
    }
}

/// Unit direction of motion, or undefined for (near) stationary displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityDir {
    dx: f64,
    dy: f64,
}

impl VelocityDir {
    pub const MIN_DISPLACEMENT: f64 = 1e-6;

    pub fn from_displacement(dx: f64, dy: f64) -> Option<Self> {
        let norm = dx.hypot(dy);
        (norm >= Self::MIN_DISPLACEMENT && norm.is_finite()).then(|| Self {
            dx: dx / norm,
            dy: dy / norm,
        })
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }
}

/// Direction of center displacement from one box to another.
pub fn observation_direction(from: &BBox, to: &BBox) -> Option<VelocityDir> {
    let (fx, fy) = from.center();
    let (tx, ty) = to.center();
    VelocityDir::from_displacement(tx - fx, ty - fy)
}

/// Cosine between two directions; 0 when either is undefined.
pub fn vdc_score(track_dir: Option<VelocityDir>, candidate_dir: Option<VelocityDir>) -> f64 {
    match (track_dir, candidate_dir) {
        (Some(a), Some(b)) => (a.dx * b.dx + a.dy * b.dy).clamp(-1.0, 1.0),
        _ => 0.0,
    }
}
