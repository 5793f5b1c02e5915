//! Four-beam DVL in the "×" (Janus) arrangement: beam geometry, the beam error
//! model, and least-squares recovery of the body-frame velocity.

use nalgebra::{Matrix3, Matrix4x3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::frames::Vec3;
use crate::{NavError, Result};

/// Default beam pitch angle (20°).
pub const DEFAULT_BEAM_PITCH: f64 = 20.0 * std::f64::consts::PI / 180.0;

/// Beam geometry: row `i` of `a` is the unit direction of beam `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamGeometry {
    pub theta: f64,
    pub a: Matrix4x3<f64>,
}

/// Yaw of beam `i` (1-based): 45°, 135°, 225°, 315°.
pub fn beam_yaw(i: usize) -> f64 {
    (i as f64 - 1.0) * std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_4
}

pub fn beam_directions(theta: f64) -> Result<BeamGeometry> {
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return Err(NavError::invalid(format!(
            "beam pitch {theta} rad outside (0, π/2)"
        )));
    }
    let (st, ct) = theta.sin_cos();
    let mut a = Matrix4x3::zeros();
    for i in 0..4 {
        let (sp, cp) = beam_yaw(i + 1).sin_cos();
        a[(i, 0)] = cp * st;
        a[(i, 1)] = sp * st;
        a[(i, 2)] = ct;
    }
    Ok(BeamGeometry { theta, a })
}

impl BeamGeometry {
    /// `(AᵀA)⁻¹`, the LS covariance factor.
    pub fn normal_inverse(&self) -> Result<Matrix3<f64>> {
        let ata = self.a.transpose() * self.a;
        // Reject near-degenerate pitches, not only exact singularity.
        if ata.determinant().abs() < 1e-12 {
            return Err(NavError::Singular("AᵀA of beam geometry"));
        }
        ata.try_inverse().ok_or(NavError::Singular("AᵀA of beam geometry"))
    }

    pub fn project(&self, v_body: &Vec3) -> Vector4<f64> {
        self.a * v_body
    }
}

/// Per-beam scale factor, per-beam bias, and white-noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DvlErrorParams {
    pub scale: [f64; 4],
    /// m/s
    pub bias: [f64; 4],
    /// m/s, standard deviation of the per-beam white noise
    pub noise_std: f64,
}

impl Default for DvlErrorParams {
    fn default() -> Self {
        DvlErrorParams {
            scale: [0.007; 4],
            bias: [0.0001; 4],
            noise_std: 0.042,
        }
    }
}

impl DvlErrorParams {
    pub fn ideal() -> Self {
        DvlErrorParams {
            scale: [0.0; 4],
            bias: [0.0; 4],
            noise_std: 0.0,
        }
    }
}

/// Measured beam velocities `ỹ_i = (A v)_i (1 + s_i) + b_i + ν_i`.
pub fn synthesize_beams<R: Rng + ?Sized>(
    v_body: &Vec3,
    geom: &BeamGeometry,
    err: &DvlErrorParams,
    rng: &mut R,
) -> Vector4<f64> {
    let ideal = geom.project(v_body);
    let normal = (err.noise_std > 0.0).then(|| Normal::new(0.0, err.noise_std).unwrap());
    Vector4::from_fn(|i, _| {
        let noise = normal.as_ref().map_or(0.0, |n| n.sample(rng));
        ideal[i] * (1.0 + err.scale[i]) + err.bias[i] + noise
    })
}

/// Least-squares body velocity `(AᵀA)⁻¹Aᵀ ỹ`.
pub fn ls_solve(beams: &Vector4<f64>, geom: &BeamGeometry) -> Result<Vec3> {
    Ok(geom.normal_inverse()? * (geom.a.transpose() * beams))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DvlMeasurement {
    pub t: f64,
    /// Raw beam velocities, when the source provides them.
    pub beams: Option<Vector4<f64>>,
    pub body_velocity: Vec3,
    pub valid: bool,
    /// Produced by the outage predictor rather than the sensor.
    pub predicted: bool,
}

impl DvlMeasurement {
    pub fn from_beams(t: f64, beams: Vector4<f64>, geom: &BeamGeometry) -> Result<Self> {
        Ok(DvlMeasurement {
            t,
            beams: Some(beams),
            body_velocity: ls_solve(&beams, geom)?,
            valid: true,
            predicted: false,
        })
    }

    pub fn predicted(t: f64, body_velocity: Vec3) -> Self {
        DvlMeasurement {
            t,
            beams: None,
            body_velocity,
            valid: true,
            predicted: true,
        }
    }
}

const TIME_TOL: f64 = 1e-9;

/// Whether `t` falls in the half-open outage window `[t_init, t_init + duration)`.
pub fn in_outage(t: f64, t_init: f64, t_duration: f64) -> bool {
    t >= t_init - TIME_TOL && t < t_init + t_duration - TIME_TOL
}

/// Marks every measurement in `[t_init, t_init + t_duration)` invalid.
pub fn apply_outage(
    stream: &[DvlMeasurement],
    t_init: f64,
    t_duration: f64,
) -> Result<Vec<DvlMeasurement>> {
    if t_duration < 0.0 || !t_duration.is_finite() || !t_init.is_finite() {
        return Err(NavError::invalid(format!(
            "bad outage window t_init={t_init}, duration={t_duration}"
        )));
    }
    if t_duration > 0.0 {
        let (first, last) = match (stream.first(), stream.last()) {
            (Some(f), Some(l)) => (f.t, l.t),
            _ => return Err(NavError::invalid("outage on an empty DVL stream")),
        };
        let period = if stream.len() > 1 {
            (last - first) / (stream.len() - 1) as f64
        } else {
            0.0
        };
        if t_init < first - TIME_TOL || t_init + t_duration > last + period + TIME_TOL {
            return Err(NavError::invalid(format!(
                "outage [{t_init}, {}) outside stream span [{first}, {last}]",
                t_init + t_duration
            )));
        }
    }
    Ok(stream
        .iter()
        .map(|m| {
            let mut m = m.clone();
            if in_outage(m.t, t_init, t_duration) {
                m.valid = false;
            }
            m
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pseudoinverse solution through an SVD of `A`, independent of the normal
    /// equations used by `ls_solve`.
    fn svd_oracle(beams: &Vector4<f64>, geom: &BeamGeometry) -> Vec3 {
        let a = DMatrix::from_fn(4, 3, |i, j| geom.a[(i, j)]);
        let pinv = a.pseudo_inverse(1e-14).unwrap();
        let x = pinv * DVector::from_column_slice(beams.as_slice());
        Vec3::new(x[0], x[1], x[2])
    }

    #[test]
    fn beam_yaws() {
        let deg: Vec<f64> = (1..=4).map(|i| beam_yaw(i).to_degrees()).collect();
        for (d, e) in deg.iter().zip([45.0, 135.0, 225.0, 315.0]) {
            assert!((d - e).abs() < 1e-12);
        }
    }

    #[test]
    fn geometry_rows() {
        let g = beam_directions(20f64.to_radians()).unwrap();
        // cos45·sin20, sin45·sin20, cos20
        assert!((g.a[(0, 0)] - 0.241_844_762_647_975).abs() < 1e-12);
        assert!((g.a[(0, 1)] - 0.241_844_762_647_975).abs() < 1e-12);
        assert!((g.a[(0, 2)] - 0.939_692_620_785_908).abs() < 1e-12);
        for i in 0..4 {
            assert!((g.a.row(i).norm() - 1.0).abs() < 1e-15);
        }
        let tiny = beam_directions(1e-9).unwrap();
        for i in 0..4 {
            assert!((tiny.a.row(i) - nalgebra::RowVector3::new(0.0, 0.0, 1.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn degenerate_geometry_rejected() {
        assert!(beam_directions(0.0).is_err());
        assert!(beam_directions(std::f64::consts::FRAC_PI_2).is_err());
        assert!(beam_directions(-0.1).is_err());
        let flat = beam_directions(1e-9).unwrap();
        assert!(matches!(ls_solve(&Vector4::zeros(), &flat), Err(NavError::Singular(_))));
    }

    #[test]
    fn error_free_synthesis() {
        let g = beam_directions(DEFAULT_BEAM_PITCH).unwrap();
        let v = Vec3::new(1.5, -0.3, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(synthesize_beams(&v, &g, &DvlErrorParams::ideal(), &mut rng), g.a * v);
        let bias_only = DvlErrorParams {
            bias: [0.1, -0.2, 0.3, 0.05],
            ..DvlErrorParams::ideal()
        };
        let y = synthesize_beams(&Vec3::zeros(), &g, &bias_only, &mut rng);
        assert_eq!(y, Vector4::new(0.1, -0.2, 0.3, 0.05));
    }

    #[test]
    fn synthesis_sample_mean() {
        let g = beam_directions(DEFAULT_BEAM_PITCH).unwrap();
        let err = DvlErrorParams::default();
        let v = Vec3::new(2.0, 0.4, -0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut sum = Vector4::zeros();
        for _ in 0..n {
            sum += synthesize_beams(&v, &g, &err, &mut rng);
        }
        let mean = sum / n as f64;
        let ideal = g.a * v;
        for i in 0..4 {
            let expected = ideal[i] * (1.0 + err.scale[i]) + err.bias[i];
            assert!((mean[i] - expected).abs() < 4.0 * err.noise_std / (n as f64).sqrt());
        }
    }

    #[test]
    fn ls_consistent_system() {
        let g = beam_directions(DEFAULT_BEAM_PITCH).unwrap();
        let v = Vec3::new(1.0, 0.5, -0.2);
        assert!((ls_solve(&(g.a * v), &g).unwrap() - v).norm() < 1e-12);
        assert_eq!(ls_solve(&Vector4::zeros(), &g).unwrap(), Vec3::zeros());
    }

    #[test]
    fn ls_matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let theta = rng.random_range(0.05..1.5);
            let g = beam_directions(theta).unwrap();
            let v = Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let beams = g.a * v;
            let diff = (ls_solve(&beams, &g).unwrap() - svd_oracle(&beams, &g)).abs().max();
            assert!(diff < 1e-9, "theta {theta}: {diff}");
        }
    }

    #[test]
    fn ls_mean_recovers_velocity() {
        let g = beam_directions(DEFAULT_BEAM_PITCH).unwrap();
        let err = DvlErrorParams {
            noise_std: 0.042,
            ..DvlErrorParams::ideal()
        };
        let v = Vec3::new(1.2, -0.6, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mut acc = Vec3::zeros();
        for _ in 0..n {
            acc += ls_solve(&synthesize_beams(&v, &g, &err, &mut rng), &g).unwrap();
        }
        let cov = g.normal_inverse().unwrap() * err.noise_std.powi(2);
        let mean = acc / n as f64;
        for i in 0..3 {
            assert!((mean[i] - v[i]).abs() < 4.0 * (cov[(i, i)] / n as f64).sqrt());
        }
    }

    fn stream(n: usize) -> Vec<DvlMeasurement> {
        (0..n)
            .map(|i| DvlMeasurement::predicted(i as f64, Vec3::zeros()))
            .map(|mut m| {
                m.predicted = false;
                m
            })
            .collect()
    }

    #[test]
    fn outage_counts() {
        let s = stream(100);
        assert_eq!(apply_outage(&s, 10.0, 0.0).unwrap(), s);
        let out = apply_outage(&s, 10.0, 30.0).unwrap();
        assert_eq!(out.iter().filter(|m| !m.valid).count(), 30);
        assert!(!out[10].valid && !out[39].valid && out[40].valid);
        assert_eq!(apply_outage(&out, 10.0, 30.0).unwrap(), out);
        assert!(apply_outage(&s, 90.0, 30.0).is_err());
        assert!(apply_outage(&s, -5.0, 3.0).is_err());
    }

    proptest! {
        #[test]
        fn ls_noiseless_roundtrip(theta in 0.05f64..1.5, x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
            let g = beam_directions(theta).unwrap();
            let v = Vec3::new(x, y, z);
            prop_assert!((ls_solve(&(g.a * v), &g).unwrap() - v).abs().max() < 1e-12 * (1.0 + v.norm()) / theta.sin().min(theta.cos()));
        }

        #[test]
        fn ls_minimizes_residual(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = beam_directions(rng.random_range(0.1..1.4)).unwrap();
            let y = Vector4::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let best = (y - g.a * ls_solve(&y, &g).unwrap()).norm();
            for _ in 0..100 {
                let cand = Vec3::from_fn(|_, _| rng.random_range(-4.0..4.0));
                prop_assert!(best <= (y - g.a * cand).norm() + 1e-12);
            }
        }
    }
}
