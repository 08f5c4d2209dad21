//! Constant-velocity Kalman filter over box center, height and aspect ratio.
//!
//! State layout is `[x, y, h, r, vx, vy, vh, vr]`; the measurement is the
//! first four components. Noise is scaled by the current box height so the
//! filter behaves the same for near and far vehicles.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
pub type Measurement = SVector<f64, 4>;
pub type InnovationCovariance = SMatrix<f64, 4, 4>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalmanError {
    #[error("state or covariance became non-finite")]
    NonFinite,
    #[error("innovation covariance is not positive definite")]
    NotPositiveDefinite,
}

/// Named view of a state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub r: f64,
    pub vx: f64,
    pub vy: f64,
    pub vh: f64,
    pub vr: f64,
}

impl From<&StateVector> for MotionState {
    fn from(v: &StateVector) -> Self {
        Self {
            x: v[0],
            y: v[1],
            h: v[2],
            r: v[3],
            vx: v[4],
            vy: v[5],
            vh: v[6],
            vr: v[7],
        }
    }
}

impl From<MotionState> for StateVector {
    fn from(s: MotionState) -> Self {
        StateVector::from_column_slice(&[s.x, s.y, s.h, s.r, s.vx, s.vy, s.vh, s.vr])
    }
}

/// Standard deviations used by the filter. Position-like terms are multiplied
/// by the box height; the aspect ratio terms are absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    pub aspect_std_position: f64,
    pub aspect_std_velocity: f64,
    pub aspect_std_measurement: f64,
    /// Multiplies the measurement standard deviations.
    pub measurement_scale: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            aspect_std_position: 1e-2,
            aspect_std_velocity: 1e-5,
            aspect_std_measurement: 1e-1,
            measurement_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct KalmanFilter {
    pub noise: NoiseParams,
}

fn motion_matrix() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn diag_sq<const D: usize>(std: [f64; D]) -> SMatrix<f64, D, D> {
    SMatrix::<f64, D, D>::from_diagonal(&SVector::<f64, D>::from_fn(|i, _| std[i] * std[i]))
}

fn is_finite<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

impl KalmanFilter {
    pub fn new(noise: NoiseParams) -> Self {
        Self { noise }
    }

    /// Track state for a first measurement, with zero velocity and a wide
    /// velocity prior.
    pub fn initiate(&self, z: &Measurement) -> (StateVector, StateCovariance) {
        let n = &self.noise;
        let h = z[2];
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(z);
        let cov = diag_sq([
            2.0 * n.std_weight_position * h,
            2.0 * n.std_weight_position * h,
            2.0 * n.std_weight_position * h,
            n.aspect_std_position,
            10.0 * n.std_weight_velocity * h,
            10.0 * n.std_weight_velocity * h,
            10.0 * n.std_weight_velocity * h,
            n.aspect_std_velocity,
        ]);
        (mean, cov)
    }

    pub fn process_noise(&self, mean: &StateVector) -> StateCovariance {
        let n = &self.noise;
        let h = mean[2];
        diag_sq([
            n.std_weight_position * h,
            n.std_weight_position * h,
            n.std_weight_position * h,
            n.aspect_std_position,
            n.std_weight_velocity * h,
            n.std_weight_velocity * h,
            n.std_weight_velocity * h,
            n.aspect_std_velocity,
        ])
    }

    pub fn measurement_noise(&self, mean: &StateVector) -> InnovationCovariance {
        let n = &self.noise;
        let s = n.measurement_scale;
        let h = mean[2];
        diag_sq([
            s * n.std_weight_position * h,
            s * n.std_weight_position * h,
            s * n.std_weight_position * h,
            s * n.aspect_std_measurement,
        ])
    }

    /// One frame of constant-velocity propagation.
    ///
    /// A size velocity that would drive height or aspect ratio to zero or below
    /// is dropped before propagating.
    pub fn predict(
        &self,
        mean: &StateVector,
        cov: &StateCovariance,
    ) -> Result<(StateVector, StateCovariance), KalmanError> {
        if !is_finite(mean) || !is_finite(cov) {
            return Err(KalmanError::NonFinite);
        }
        let mut mean = *mean;
        if mean[2] + mean[6] <= 0.0 {
            mean[6] = 0.0;
        }
        if mean[3] + mean[7] <= 0.0 {
            mean[7] = 0.0;
        }
        let f = motion_matrix();
        let q = self.process_noise(&mean);
        let next_mean = f * mean;
        let next_cov = symmetrize(&(f * cov * f.transpose() + q));
        if !is_finite(&next_mean) || !is_finite(&next_cov) {
            return Err(KalmanError::NonFinite);
        }
        Ok((next_mean, next_cov))
    }

    /// Measurement-space mean and innovation covariance `H P Hᵀ + R`.
    pub fn project(
        &self,
        mean: &StateVector,
        cov: &StateCovariance,
    ) -> (Measurement, InnovationCovariance) {
        let projected_mean: Measurement = mean.fixed_rows::<4>(0).into_owned();
        let projected_cov: InnovationCovariance =
            cov.fixed_view::<4, 4>(0, 0).into_owned() + self.measurement_noise(mean);
        (projected_mean, projected_cov)
    }

    pub fn update(
        &self,
        mean: &StateVector,
        cov: &StateCovariance,
        z: &Measurement,
    ) -> Result<(StateVector, StateCovariance), KalmanError> {
        self.update_with_noise(mean, cov, z, &self.measurement_noise(mean))
    }

    /// Kalman update with an explicit measurement noise matrix. The covariance
    /// is updated in Joseph form and re-symmetrized so it stays PSD.
    pub fn update_with_noise(
        &self,
        mean: &StateVector,
        cov: &StateCovariance,
        z: &Measurement,
        noise: &InnovationCovariance,
    ) -> Result<(StateVector, StateCovariance), KalmanError> {
        let hp: SMatrix<f64, 4, 8> = cov.fixed_view::<4, 8>(0, 0).into_owned();
        let s: InnovationCovariance = cov.fixed_view::<4, 4>(0, 0).into_owned() + noise;
        let chol = s.cholesky().ok_or(KalmanError::NotPositiveDefinite)?;
        // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ since both P and S are symmetric.
        let gain: SMatrix<f64, 8, 4> = chol.solve(&hp).transpose();
        let innovation = z - mean.fixed_rows::<4>(0);
        let new_mean = mean + gain * innovation;

        let mut i_kh = StateCovariance::identity();
        let mut left = i_kh.fixed_view_mut::<8, 4>(0, 0);
        left -= gain;
        let new_cov = symmetrize(
            &(i_kh * cov * i_kh.transpose() + gain * noise * gain.transpose()),
        );
        if !is_finite(&new_mean) || !is_finite(&new_cov) {
            return Err(KalmanError::NonFinite);
        }
        Ok((new_mean, new_cov))
    }

    /// Squared Mahalanobis distance of `z` from the projected state.
    pub fn mahalanobis_sq(
        &self,
        mean: &StateVector,
        cov: &StateCovariance,
        z: &Measurement,
    ) -> Result<f64, KalmanError> {
        let (projected, s) = self.project(mean, cov);
        mahalanobis_sq_residual(&(z - projected), &s)
    }
}

/// `dᵀ S⁻¹ d` via a Cholesky solve.
pub fn mahalanobis_sq_residual(
    residual: &Measurement,
    innovation_cov: &InnovationCovariance,
) -> Result<f64, KalmanError> {
    let chol = innovation_cov
        .cholesky()
        .ok_or(KalmanError::NotPositiveDefinite)?;
    let solved = chol.l().solve_lower_triangular(residual).ok_or(KalmanError::NotPositiveDefinite)?;
    let d = solved.norm_squared();
    if d.is_finite() {
        Ok(d)
    } else {
        Err(KalmanError::NonFinite)
    }
}
