//! Rotations between the body frame and the local-level NED navigation frame.
//!
//! Attitude is carried as a direction-cosine matrix `C_bn` mapping body
//! vectors into NED. Euler angles follow the ZYX (yaw, pitch, roll) intrinsic
//! convention with z pointing down.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;

/// Cross-product matrix: `skew(v) * u == v.cross(&u)`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the antisymmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Body-to-navigation direction-cosine matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Rotation::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Nearest rotation to `m` in the Frobenius sense (symmetric
    /// orthogonalization, `m (mᵀm)^{-1/2}`).
    pub fn orthonormalized(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        Rotation(u * v_t)
    }

    /// Wraps a matrix the caller knows to be a proper rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        Rotation(Matrix3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        ))
    }

    /// `(roll, pitch, yaw)`; unique for `|pitch| < π/2`.
    pub fn to_euler(&self) -> (f64, f64, f64) {
        let m = &self.0;
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        (roll, pitch, yaw)
    }

    /// Rodrigues exponential of the rotation vector `phi`.
    pub fn exp(phi: &Vec3) -> Self {
        let angle = phi.norm();
        let k = skew(phi);
        if angle < 1e-8 {
            // Series to second order; the remainder is below f64 resolution.
            return Rotation(Matrix3::identity() + k + k * k * 0.5);
        }
        let a = angle.sin() / angle;
        let b = (1.0 - angle.cos()) / (angle * angle);
        Rotation(Matrix3::identity() + k * a + k * k * b)
    }

    /// Rotation vector of `self` (inverse of [`Rotation::exp`] for angles < π).
    pub fn log(&self) -> Vec3 {
        let cos = ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let angle = cos.acos();
        let axis_scaled = vee(&self.0);
        if angle < 1e-8 {
            return axis_scaled;
        }
        axis_scaled * (angle / angle.sin())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `C_nb`, mapping navigation vectors into the body frame.
    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.0.tr_mul(v)
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// `‖RᵀR − I‖` (max abs entry).
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }
}

/// `(I − skew(eps))·R`, re-orthonormalized. Valid for `|eps|` well below 0.1 rad.
pub fn apply_small_angle_correction(r: &Rotation, eps: &Vec3) -> Rotation {
    Rotation::orthonormalized(&((Matrix3::identity() - skew(eps)) * r.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn skew_is_cross_product() {
        let s = skew(&Vec3::x());
        assert_eq!(s * Vec3::y(), Vec3::z());
        assert_eq!(skew(&Vec3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn euler_identity_and_yaw() {
        assert_eq!(Rotation::from_euler(0.0, 0.0, 0.0), Rotation::identity());
        let r = Rotation::from_euler(0.0, 0.0, FRAC_PI_2);
        // Forward body axis points east after a 90° yaw.
        assert!((r.rotate(&Vec3::x()) - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn zero_correction_is_identity() {
        let r = Rotation::from_euler(0.1, -0.2, 2.0);
        let c = apply_small_angle_correction(&r, &Vec3::zeros());
        assert!((c.matrix() - r.matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn tiny_correction_matches_direct_product() {
        let r = Rotation::from_euler(0.3, 0.1, -1.0);
        let eps = Vec3::new(1e-6, 0.0, 0.0);
        let direct = (Matrix3::identity() - skew(&eps)) * r.matrix();
        let c = apply_small_angle_correction(&r, &eps);
        assert!((c.matrix() - direct).norm() < 1e-12);
    }

    #[test]
    fn exp_log_roundtrip() {
        let phi = Vec3::new(0.3, -1.2, 0.7);
        assert!((Rotation::exp(&phi).log() - phi).norm() < 1e-12);
        assert!(Rotation::exp(&Vec3::new(0.0, 0.0, PI / 3.0))
            .matrix()
            .relative_eq(Rotation::from_euler(0.0, 0.0, PI / 3.0).matrix(), 1e-14, 1e-14));
    }

    fn angle() -> impl Strategy<Value = f64> {
        -PI..PI
    }

    proptest! {
        #[test]
        fn skew_antisymmetric_and_linear(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64,
                                         a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let u = Vec3::new(x, y, z);
            let v = Vec3::new(z, x, -y);
            prop_assert!((skew(&u) + skew(&u).transpose()).abs().max() == 0.0);
            let lhs = skew(&(u * a + v * b));
            let rhs = skew(&u) * a + skew(&v) * b;
            prop_assert!((lhs - rhs).abs().max() < 1e-12);
        }

        #[test]
        fn euler_roundtrip(roll in angle(), pitch in -(FRAC_PI_2 - 0.01)..(FRAC_PI_2 - 0.01), yaw in angle()) {
            let r = Rotation::from_euler(roll, pitch, yaw);
            prop_assert!(r.orthonormality_error() < 1e-12);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
            let (r2, p2, y2) = r.to_euler();
            let wrap = |d: f64| (d + PI).rem_euclid(2.0 * PI) - PI;
            prop_assert!(wrap(r2 - roll).abs() < 1e-9);
            prop_assert!((p2 - pitch).abs() < 1e-9);
            prop_assert!(wrap(y2 - yaw).abs() < 1e-9);
        }

        #[test]
        fn correction_orthonormal_and_reversible(roll in angle(), yaw in angle(),
                                                 ex in -0.05..0.05f64, ey in -0.05..0.05f64, ez in -0.05..0.05f64) {
            let r = Rotation::from_euler(roll, 0.2, yaw);
            let eps = Vec3::new(ex, ey, ez);
            let c = apply_small_angle_correction(&r, &eps);
            prop_assert!(c.orthonormality_error() < 1e-12);
            prop_assert!((c.matrix().determinant() - 1.0).abs() < 1e-12);
            let back = apply_small_angle_correction(&c, &-eps);
            let n2 = eps.norm_squared();
            prop_assert!((back.matrix() - r.matrix()).abs().max() <= 2.0 * n2 + 1e-14);
        }
    }
}
