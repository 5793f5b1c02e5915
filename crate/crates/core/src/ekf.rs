//! Twelve-state error-state EKF for INS/DVL fusion.
//!
//! Error vector `δx = [δv_n, ε_n, δb_a, δb_g]` with the conventions
//!
//! * `v_true = v_est − δv`
//! * `C_true = (I + skew(ε)) C_est` (to first order), so the estimate is
//!   rotated by `−ε` on feedback
//! * `b_true = b_est + δb` for both bias triads
//!
//! Under these conventions the DVL measurement `h(x) = C_nb v_n` linearizes to
//! `H = [C_nb, −C_nb skew(v_n), 0, 0]`, and the innovation that multiplies the
//! Kalman gain is `predicted − measured`.

use nalgebra::{Cholesky, Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::dvl_model::BeamGeometry;
use crate::frames::{apply_small_angle_correction, skew, Rotation, Vec3};
use crate::strapdown::{mechanize_step, ImuSample, NavState, GRAVITY};
use crate::{NavError, Result};

pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Vec12 = SVector<f64, 12>;
pub type Mat3x12 = SMatrix<f64, 3, 12>;

const VEL: usize = 0;
const ATT: usize = 3;
const BA: usize = 6;
const BG: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState {
    pub delta_v_n: Vec3,
    pub eps_n: Vec3,
    pub delta_b_a: Vec3,
    pub delta_b_g: Vec3,
}

impl ErrorState {
    pub fn to_vector(&self) -> Vec12 {
        let mut v = Vec12::zeros();
        v.fixed_rows_mut::<3>(VEL).copy_from(&self.delta_v_n);
        v.fixed_rows_mut::<3>(ATT).copy_from(&self.eps_n);
        v.fixed_rows_mut::<3>(BA).copy_from(&self.delta_b_a);
        v.fixed_rows_mut::<3>(BG).copy_from(&self.delta_b_g);
        v
    }

    pub fn from_vector(v: &Vec12) -> Self {
        ErrorState {
            delta_v_n: v.fixed_rows::<3>(VEL).into(),
            eps_n: v.fixed_rows::<3>(ATT).into(),
            delta_b_a: v.fixed_rows::<3>(BA).into(),
            delta_b_g: v.fixed_rows::<3>(BG).into(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.to_vector().iter().all(|x| *x == 0.0)
    }
}

/// Symmetric 12×12 error covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance(pub Mat12);

impl Covariance {
    pub fn symmetrized(m: Mat12) -> Self {
        Covariance((m + m.transpose()) * 0.5)
    }

    pub fn matrix(&self) -> &Mat12 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.symmetric_eigenvalues().min()
    }

    pub fn is_symmetric(&self) -> bool {
        self.0 == self.0.transpose()
    }
}

/// One-sigma initial uncertainty per error block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialUncertainty {
    /// m/s
    pub velocity: f64,
    /// rad
    pub attitude: f64,
    /// m/s²
    pub accel_bias: f64,
    /// rad/s
    pub gyro_bias: f64,
}

impl Default for InitialUncertainty {
    fn default() -> Self {
        InitialUncertainty {
            velocity: 0.1,
            attitude: 0.5_f64.to_radians(),
            accel_bias: 1e-3 * GRAVITY,
            gyro_bias: (10.0_f64 / 3600.0).to_radians(),
        }
    }
}

impl InitialUncertainty {
    pub fn covariance(&self) -> Covariance {
        let mut d = Vec12::zeros();
        for (block, sigma) in [
            (VEL, self.velocity),
            (ATT, self.attitude),
            (BA, self.accel_bias),
            (BG, self.gyro_bias),
        ] {
            d.fixed_rows_mut::<3>(block).fill(sigma * sigma);
        }
        Covariance(Mat12::from_diagonal(&d))
    }
}

/// Continuous-time noise densities (one-sigma, per √Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessNoise {
    /// Velocity random walk, m/s²/√Hz.
    pub vrw: f64,
    /// Angular random walk, rad/s/√Hz.
    pub arw: f64,
    /// Accelerometer bias random walk, m/s²/√s.
    pub accel_bias_rw: f64,
    /// Gyro bias random walk, rad/s/√s.
    pub gyro_bias_rw: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        ProcessNoise {
            vrw: 57e-6 * GRAVITY,
            arw: 0.018_f64.to_radians(),
            accel_bias_rw: 1e-5,
            gyro_bias_rw: 1e-7,
        }
    }
}

impl ProcessNoise {
    /// Diagonal spectral density matrix `Q` ordered like `w = [w_a, w_g, w_ab, w_gb]`.
    pub fn q_matrix(&self) -> Mat12 {
        let mut d = Vec12::zeros();
        for (block, density) in [
            (VEL, self.vrw),
            (ATT, self.arw),
            (BA, self.accel_bias_rw),
            (BG, self.gyro_bias_rw),
        ] {
            d.fixed_rows_mut::<3>(block).fill(density * density);
        }
        Mat12::from_diagonal(&d)
    }
}

/// DVL velocity measurement covariance, (m/s)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementNoise(pub Matrix3<f64>);

impl MeasurementNoise {
    /// `σ²·(AᵀA)⁻¹`: beam white noise carried through the LS solve.
    pub fn from_beam_noise(noise_std: f64, geom: &BeamGeometry) -> Result<Self> {
        Ok(MeasurementNoise(geom.normal_inverse()? * noise_std.powi(2)))
    }

    pub fn isotropic(std: f64) -> Self {
        MeasurementNoise(Matrix3::identity() * std * std)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        MeasurementNoise(self.0 * factor)
    }
}

/// Error-dynamics matrix of the local-level model.
pub fn assemble_f(state: &NavState, imu: &ImuSample) -> Mat12 {
    let c = state.c_bn.matrix();
    let f_n = c * (imu.f_b - state.b_a);
    let mut f = Mat12::zeros();
    f.fixed_view_mut::<3, 3>(VEL, ATT).copy_from(&skew(&f_n));
    f.fixed_view_mut::<3, 3>(VEL, BA).copy_from(c);
    f.fixed_view_mut::<3, 3>(ATT, BG).copy_from(&-c);
    f
}

/// Noise-shaping matrix: sensor white noise enters through the attitude,
/// bias random walks enter directly.
pub fn assemble_g(state: &NavState) -> Mat12 {
    let c = state.c_bn.matrix();
    let mut g = Mat12::zeros();
    g.fixed_view_mut::<3, 3>(VEL, VEL).copy_from(c);
    g.fixed_view_mut::<3, 3>(ATT, ATT).copy_from(&-c);
    g.fixed_view_mut::<3, 3>(BA, BA).copy_from(&Matrix3::identity());
    g.fixed_view_mut::<3, 3>(BG, BG).copy_from(&Matrix3::identity());
    g
}

/// `Σ_{r=0}^{order} (F τ)^r / r!`
pub fn transition_matrix(f: &Mat12, tau: f64, order: usize) -> Mat12 {
    let ft = f * tau;
    let mut phi = Mat12::identity();
    let mut term = Mat12::identity();
    for r in 1..=order {
        term = term * ft / r as f64;
        phi += term;
    }
    phi
}

/// Mid-point discretization `½(Φ G Q Gᵀ + G Q Gᵀ Φᵀ)·dt`, symmetrized.
pub fn discretize_q(phi: &Mat12, g: &Mat12, q: &Mat12, dt: f64) -> Mat12 {
    let gqg = g * q * g.transpose();
    let qk = (phi * gqg + gqg * phi.transpose()) * (0.5 * dt);
    (qk + qk.transpose()) * 0.5
}

/// `P⁻ = Φ P⁺ Φᵀ + Q_k`. The error state itself is zero after prediction.
pub fn predict(p: &Covariance, phi: &Mat12, qk: &Mat12) -> Covariance {
    Covariance::symmetrized(phi * p.0 * phi.transpose() + qk)
}

pub fn assemble_h(state: &NavState) -> Mat3x12 {
    let c_nb = state.c_bn.matrix().transpose();
    let mut h = Mat3x12::zeros();
    h.fixed_view_mut::<3, 3>(0, VEL).copy_from(&c_nb);
    h.fixed_view_mut::<3, 3>(0, ATT).copy_from(&(-c_nb * skew(&state.v_n)));
    h
}

/// Predicted minus measured body velocity.
pub fn innovation(state: &NavState, measured_body_velocity: &Vec3) -> Vec3 {
    state.body_velocity() - measured_body_velocity
}

/// Kalman update. Returns the error estimate `K·dz` and `(I − K H) P⁻`.
pub fn update(
    p: &Covariance,
    h: &Mat3x12,
    r: &MeasurementNoise,
    dz: &Vec3,
) -> Result<(ErrorState, Covariance)> {
    let s = h * p.0 * h.transpose() + r.0;
    let s_inv = Cholesky::new(s)
        .ok_or(NavError::Singular("innovation covariance"))?
        .inverse();
    let k = p.0 * h.transpose() * s_inv;
    let p_post = (Mat12::identity() - k * h) * p.0;
    Ok((
        ErrorState::from_vector(&(k * dz)),
        Covariance::symmetrized(p_post),
    ))
}

/// Removes the estimated error from the navigation state.
pub fn feedback(state: &NavState, dx: &ErrorState) -> NavState {
    NavState {
        t: state.t,
        v_n: state.v_n - dx.delta_v_n,
        c_bn: apply_small_angle_correction(&state.c_bn, &-dx.eps_n),
        p_n: state.p_n,
        b_a: state.b_a + dx.delta_b_a,
        b_g: state.b_g + dx.delta_b_g,
    }
}

/// Estimate that carries error `dx` relative to `truth`, using the exact
/// exponential map for attitude. Inverse of [`error_between`].
pub fn perturb(truth: &NavState, dx: &ErrorState) -> NavState {
    NavState {
        t: truth.t,
        v_n: truth.v_n + dx.delta_v_n,
        c_bn: Rotation::exp(&-dx.eps_n).compose(&truth.c_bn),
        p_n: truth.p_n,
        b_a: truth.b_a - dx.delta_b_a,
        b_g: truth.b_g - dx.delta_b_g,
    }
}

/// Error of `estimate` relative to `truth` in the filter's conventions.
pub fn error_between(estimate: &NavState, truth: &NavState) -> ErrorState {
    let rel = estimate.c_bn.compose(&truth.c_bn.transpose());
    ErrorState {
        delta_v_n: estimate.v_n - truth.v_n,
        eps_n: -rel.log(),
        delta_b_a: truth.b_a - estimate.b_a,
        delta_b_g: truth.b_g - estimate.b_g,
    }
}

/// Filter settings shared by every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    pub initial: InitialUncertainty,
    pub process: ProcessNoise,
    pub taylor_order: usize,
    /// Scalar one-sigma override for the DVL velocity noise, m/s. When absent
    /// the noise is derived from the beam noise and geometry.
    pub dvl_velocity_std: Option<f64>,
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            initial: InitialUncertainty::default(),
            process: ProcessNoise::default(),
            taylor_order: 2,
            dvl_velocity_std: None,
        }
    }
}

/// Closed-loop filter: nominal state plus error covariance. The error state
/// is fed back after every update, so it is always zero between calls.
#[derive(Debug, Clone)]
pub struct Ekf {
    pub state: NavState,
    pub p: Covariance,
    q: Mat12,
    taylor_order: usize,
    g_n: Vec3,
}

impl Ekf {
    pub fn new(initial: NavState, config: &EkfConfig, g_n: Vec3) -> Self {
        Ekf {
            state: initial,
            p: config.initial.covariance(),
            q: config.process.q_matrix(),
            taylor_order: config.taylor_order.max(1),
            g_n,
        }
    }

    /// Covariance prediction followed by mechanization of `imu`.
    pub fn propagate(&mut self, imu: &ImuSample, dt: f64) {
        let f = assemble_f(&self.state, imu);
        let phi = transition_matrix(&f, dt, self.taylor_order);
        let qk = discretize_q(&phi, &assemble_g(&self.state), &self.q, dt);
        self.p = predict(&self.p, &phi, &qk);
        self.state = mechanize_step(&self.state, imu, dt, &self.g_n);
    }

    /// DVL body-velocity update with feedback. Returns the innovation.
    pub fn update_velocity(&mut self, body_velocity: &Vec3, r: &MeasurementNoise) -> Result<Vec3> {
        let dz = innovation(&self.state, body_velocity);
        let (dx, p) = update(&self.p, &assemble_h(&self.state), r, &dz)?;
        self.p = p;
        self.state = feedback(&self.state, &dx);
        Ok(dz)
    }
}
