//! Local-level strapdown mechanization and its inverse.
//!
//! The model is a flat, non-rotating NED frame with constant gravity: no Earth
//! rate, no transport rate, no coning or sculling terms. Each IMU sample
//! stamped `t` describes the interval `(t - dt, t]` and carries the mid-interval
//! specific force and angular rate; the inverse mechanization emits samples in
//! exactly that form, so the pair integrates with second-order accuracy.

use nalgebra::Matrix3;

use crate::frames::{Rotation, Vec3};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

/// NED gravity vector (z down).
pub fn gravity_ned() -> Vec3 {
    Vec3::new(0.0, 0.0, GRAVITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force, m/s².
    pub f_b: Vec3,
    /// Angular rate, rad/s.
    pub omega_b: Vec3,
}

impl ImuSample {
    pub fn channels(&self) -> [f64; 6] {
        [
            self.f_b.x,
            self.f_b.y,
            self.f_b.z,
            self.omega_b.x,
            self.omega_b.y,
            self.omega_b.z,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub t: f64,
    pub v_n: Vec3,
    pub c_bn: Rotation,
    pub p_n: Vec3,
    pub b_a: Vec3,
    pub b_g: Vec3,
}

impl NavState {
    pub fn new(t: f64, v_n: Vec3, c_bn: Rotation, p_n: Vec3) -> Self {
        NavState {
            t,
            v_n,
            c_bn,
            p_n,
            b_a: Vec3::zeros(),
            b_g: Vec3::zeros(),
        }
    }

    /// Velocity expressed in the body frame, `C_nb v_n`.
    pub fn body_velocity(&self) -> Vec3 {
        self.c_bn.inverse_rotate(&self.v_n)
    }

    pub fn is_finite(&self) -> bool {
        self.v_n.iter().chain(self.p_n.iter()).all(|x| x.is_finite())
            && self.c_bn.matrix().iter().all(|x| x.is_finite())
    }
}

/// One Newton step of the polar iteration `R (3I − RᵀR) / 2`; removes the
/// round-off drift accumulated by a single rotation product.
fn renormalize(m: &Matrix3<f64>) -> Rotation {
    let gram = m.transpose() * m;
    Rotation::from_matrix_unchecked(m * (Matrix3::identity() * 3.0 - gram) * 0.5)
}

/// Propagates `state` across one IMU interval of length `dt`.
pub fn mechanize_step(state: &NavState, imu: &ImuSample, dt: f64, g_n: &Vec3) -> NavState {
    let omega = imu.omega_b - state.b_g;
    let f = imu.f_b - state.b_a;
    let c = state.c_bn.matrix();
    let c_mid = c * Rotation::exp(&(omega * (0.5 * dt))).matrix();
    let c_new = renormalize(&(c * Rotation::exp(&(omega * dt)).matrix()));
    let v_new = state.v_n + (c_mid * f + g_n) * dt;
    let p_new = state.p_n + (state.v_n + v_new) * (0.5 * dt);
    NavState {
        t: state.t + dt,
        v_n: v_new,
        c_bn: c_new,
        p_n: p_new,
        b_a: state.b_a,
        b_g: state.b_g,
    }
}

/// Ground-truth kinematics at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicSample {
    pub t: f64,
    pub p_n: Vec3,
    pub v_n: Vec3,
    /// dv_n/dt
    pub a_n: Vec3,
    pub c_bn: Rotation,
    /// Body angular rate satisfying `dC_bn/dt = C_bn · skew(omega_b)`.
    pub omega_b: Vec3,
}

impl KinematicSample {
    pub fn nav_state(&self) -> NavState {
        NavState::new(self.t, self.v_n, self.c_bn, self.p_n)
    }
}

/// A twice-differentiable vehicle trajectory with analytic derivatives.
pub trait Trajectory {
    fn sample(&self, t: f64) -> KinematicSample;
}

impl<F: Fn(f64) -> KinematicSample> Trajectory for F {
    fn sample(&self, t: f64) -> KinematicSample {
        self(t)
    }
}

/// Body rate from Euler angles and their rates (ZYX convention).
pub fn body_rate_from_euler_rates(roll: f64, pitch: f64, rates: &Vec3) -> Vec3 {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (dr, dp, dy) = (rates.x, rates.y, rates.z);
    Vec3::new(
        dr - dy * sp,
        dp * cr + dy * sr * cp,
        -dp * sr + dy * cr * cp,
    )
}

/// Ideal (noise- and bias-free) IMU readings for the `n` intervals following
/// `t0`. Sample `k` is stamped `t0 + k·dt` (k = 1..=n) and holds mid-interval
/// values: `f_b = C_bnᵀ (dv_n/dt − g_n)` and the body rate.
pub fn inverse_mechanize<T: Trajectory + ?Sized>(
    traj: &T,
    t0: f64,
    n: usize,
    dt: f64,
    g_n: &Vec3,
) -> Vec<ImuSample> {
    (1..=n)
        .map(|k| {
            let t = t0 + k as f64 * dt;
            let mid = traj.sample(t - 0.5 * dt);
            ImuSample {
                t,
                f_b: mid.c_bn.inverse_rotate(&(mid.a_n - g_n)),
                omega_b: mid.omega_b,
            }
        })
        .collect()
}

/// Runs the mechanization over a whole IMU stream without aiding.
pub fn integrate(initial: &NavState, imu: &[ImuSample], dt: f64, g_n: &Vec3) -> Vec<NavState> {
    let mut out = Vec::with_capacity(imu.len() + 1);
    out.push(*initial);
    let mut state = *initial;
    for sample in imu {
        state = mechanize_step(&state, sample, dt, g_n);
        out.push(state);
    }
    out
}
