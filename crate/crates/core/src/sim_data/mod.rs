//! Synthetic missions, training windows and the CSV recording format.

mod csv;
mod trajectory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dvl_model::{synthesize_beams, BeamGeometry, DvlErrorParams, DvlMeasurement};
use crate::frames::Vec3;
use crate::set_transformer::{TrainingWindow, N_IMU, N_PAST_DVL};
use crate::strapdown::{inverse_mechanize, gravity_ned, ImuSample, NavState, Trajectory, GRAVITY};
use crate::{NavError, Result};

pub use csv::{export_mission, ingest_external, read_dvl_csv, read_gt_csv, read_imu_csv, Provenance};
pub use trajectory::{PathKind, Sinusoid, SmoothTrajectory, TrajectorySpec};

pub const IMU_RATE_HZ: f64 = 100.0;
pub const DVL_RATE_HZ: f64 = 1.0;

/// Inertial sensor errors. Densities use the datasheet units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuNoiseParams {
    /// Velocity random walk, µg/√Hz.
    pub vrw: f64,
    /// Angular random walk, °/√Hz.
    pub arw: f64,
    /// Constant accelerometer bias, m/s².
    pub accel_bias: [f64; 3],
    /// Constant gyro bias, rad/s.
    pub gyro_bias: [f64; 3],
    /// Accelerometer bias random walk, m/s²/√s.
    pub accel_bias_rw: f64,
    /// Gyro bias random walk, rad/s/√s.
    pub gyro_bias_rw: f64,
}

impl Default for ImuNoiseParams {
    fn default() -> Self {
        ImuNoiseParams {
            vrw: 57.0,
            arw: 0.018,
            accel_bias: [0.0; 3],
            gyro_bias: [0.0; 3],
            accel_bias_rw: 0.0,
            gyro_bias_rw: 0.0,
        }
    }
}

impl ImuNoiseParams {
    pub fn noiseless() -> Self {
        ImuNoiseParams {
            vrw: 0.0,
            arw: 0.0,
            ..Default::default()
        }
    }

    /// Per-sample white-noise std of the accelerometer, m/s².
    pub fn accel_sample_std(&self, rate_hz: f64) -> f64 {
        self.vrw * 1e-6 * GRAVITY * rate_hz.sqrt()
    }

    /// Per-sample white-noise std of the gyro, rad/s.
    pub fn gyro_sample_std(&self, rate_hz: f64) -> f64 {
        self.arw.to_radians() * rate_hz.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.vrw, self.arw, self.accel_bias_rw, self.gyro_bias_rw];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(NavError::invalid("IMU noise densities must be finite and nonnegative"));
        }
        if self.accel_bias.iter().chain(&self.gyro_bias).any(|v| !v.is_finite()) {
            return Err(NavError::invalid("IMU biases must be finite"));
        }
        Ok(())
    }
}

/// Time-aligned sensor streams and ground truth for one mission.
///
/// Ground truth is sampled at `k·imu_dt` for `k = 0..=N`; IMU sample `k`
/// (1-based) covers `((k−1)·dt, k·dt]`; DVL epochs fall on IMU epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionRecord {
    pub id: String,
    pub imu_dt: f64,
    pub dvl_period: f64,
    pub imu: Vec<ImuSample>,
    pub dvl: Vec<DvlMeasurement>,
    pub ground_truth: Vec<NavState>,
}

impl MissionRecord {
    pub fn duration(&self) -> f64 {
        self.ground_truth.last().map_or(0.0, |s| s.t) - self.ground_truth.first().map_or(0.0, |s| s.t)
    }

    pub fn start_time(&self) -> f64 {
        self.ground_truth.first().map_or(0.0, |s| s.t)
    }

    /// Index of the ground-truth state stamped `t`.
    pub fn gt_index(&self, t: f64) -> Option<usize> {
        let k = ((t - self.start_time()) / self.imu_dt).round();
        (k >= 0.0 && (k as usize) < self.ground_truth.len()).then_some(k as usize)
    }

    /// Index of the DVL measurement stamped `t`.
    pub fn dvl_index(&self, t: f64) -> Option<usize> {
        self.dvl.iter().position(|m| (m.t - t).abs() < 0.5 * self.imu_dt)
    }
}

/// Builds a mission from an analytic trajectory. Biases and noise are drawn
/// from a `ChaCha8` stream seeded by `seed`.
pub fn generate_mission(
    id: &str,
    spec: &TrajectorySpec,
    noise: &ImuNoiseParams,
    dvl_err: &DvlErrorParams,
    geom: &BeamGeometry,
    seed: u64,
) -> Result<MissionRecord> {
    noise.validate()?;
    let dt = 1.0 / IMU_RATE_HZ;
    let traj = SmoothTrajectory::new(spec, dt)?;
    let n = (spec.duration * IMU_RATE_HZ).round() as usize;
    let g = gravity_ned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let ground_truth: Vec<NavState> = (0..=n)
        .map(|k| traj.sample(k as f64 * dt).nav_state())
        .collect();

    let mut imu = inverse_mechanize(&traj, 0.0, n, dt, &g);
    let acc_std = noise.accel_sample_std(IMU_RATE_HZ);
    let gyro_std = noise.gyro_sample_std(IMU_RATE_HZ);
    let mut b_a = Vec3::from(noise.accel_bias);
    let mut b_g = Vec3::from(noise.gyro_bias);
    let (rw_a, rw_g) = (noise.accel_bias_rw * dt.sqrt(), noise.gyro_bias_rw * dt.sqrt());
    let gauss = |rng: &mut ChaCha8Rng| -> Vec3 {
        Vec3::from_fn(|_, _| StandardNormal.sample(rng))
    };
    for s in imu.iter_mut() {
        s.f_b += b_a + gauss(&mut rng) * acc_std;
        s.omega_b += b_g + gauss(&mut rng) * gyro_std;
        if rw_a > 0.0 {
            b_a += gauss(&mut rng) * rw_a;
        }
        if rw_g > 0.0 {
            b_g += gauss(&mut rng) * rw_g;
        }
    }

    let steps_per_dvl = (IMU_RATE_HZ / DVL_RATE_HZ).round() as usize;
    let mut dvl = Vec::with_capacity(n / steps_per_dvl);
    for k in (steps_per_dvl..=n).step_by(steps_per_dvl) {
        let gt = &ground_truth[k];
        let beams = synthesize_beams(&gt.body_velocity(), geom, dvl_err, &mut rng);
        dvl.push(DvlMeasurement::from_beams(gt.t, beams, geom)?);
    }
    Ok(MissionRecord {
        id: id.to_string(),
        imu_dt: dt,
        dvl_period: 1.0 / DVL_RATE_HZ,
        imu,
        dvl,
        ground_truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// One target every four seconds.
    #[default]
    Disjoint,
    /// One target every second.
    Strided,
}

/// Supervised windows: the target is the DVL velocity at epoch `j`, the
/// inputs are the DVL velocities at `j−3, j−2, j−1` and the IMU samples
/// covering `(j−4 s, j]`.
pub fn build_windows(mission: &MissionRecord, mode: WindowMode) -> Result<Vec<TrainingWindow>> {
    let span = (N_PAST_DVL + 1) as f64 * mission.dvl_period;
    if mission.duration() + 1e-9 < span {
        return Err(NavError::invalid(format!(
            "mission {} is {:.1} s long; windows need {span} s",
            mission.id,
            mission.duration()
        )));
    }
    let hop = match mode {
        WindowMode::Disjoint => N_PAST_DVL + 1,
        WindowMode::Strided => 1,
    };
    let t0 = mission.start_time();
    let mut out = Vec::new();
    let mut j = N_PAST_DVL;
    while j < mission.dvl.len() {
        let target = &mission.dvl[j];
        let past = &mission.dvl[j - N_PAST_DVL..j];
        // IMU sample k (0-based) is stamped t0 + (k+1)·dt.
        let end = ((target.t - t0) / mission.imu_dt).round() as usize;
        let times = [past[0].t, past[1].t, past[2].t, target.t];
        let contiguous = times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - mission.dvl_period).abs() < 1e-6);
        if target.valid && past.iter().all(|m| m.valid) && contiguous && end >= N_IMU && end <= mission.imu.len() {
            let imu = &mission.imu[end - N_IMU..end];
            debug_assert!((imu[N_IMU - 1].t - target.t).abs() < 1e-6);
            out.push(TrainingWindow::new(
                target.t,
                [past[0].body_velocity, past[1].body_velocity, past[2].body_velocity],
                imu.iter().map(ImuSample::channels).collect(),
                target.body_velocity,
            )?);
        }
        j += hop;
    }
    Ok(out)
}

/// Varied mission layouts for a synthetic corpus, drawn from `seed`.
pub fn corpus_specs(count: usize, duration: f64, seed: u64) -> Vec<TrajectorySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let speed = rng.random_range(1.6..2.4);
            let path = match i % 4 {
                0 => PathKind::Lawnmower {
                    leg_length: rng.random_range(120.0..220.0),
                    turn_duration: rng.random_range(20.0..35.0),
                },
                1 => PathKind::FigureEight {
                    radius: rng.random_range(50.0..90.0),
                },
                2 => PathKind::Circle {
                    radius: rng.random_range(60.0..120.0),
                },
                _ => {
                    let mut wp = vec![[0.0, 0.0]];
                    let mut heading: f64 = 0.0;
                    let mut p = [0.0, 0.0];
                    for _ in 0..12 {
                        let leg = rng.random_range(80.0..200.0);
                        p = [p[0] + leg * heading.cos(), p[1] + leg * heading.sin()];
                        wp.push(p);
                        heading += rng.random_range(-2.0..2.0);
                    }
                    PathKind::SplineWaypoints {
                        waypoints: wp,
                        turn_duration: rng.random_range(20.0..30.0),
                    }
                }
            };
            TrajectorySpec {
                path,
                speed: Sinusoid {
                    mean: speed,
                    amplitude: rng.random_range(0.1..0.4),
                    period: rng.random_range(60.0..150.0),
                },
                depth: Sinusoid {
                    mean: rng.random_range(10.0..40.0),
                    amplitude: rng.random_range(1.0..4.0),
                    period: rng.random_range(80.0..200.0),
                },
                pitch: Sinusoid {
                    mean: 0.0,
                    amplitude: rng.random_range(0.01..0.04),
                    period: rng.random_range(40.0..90.0),
                },
                bank_gain: rng.random_range(0.5..2.0),
                initial_heading: 0.0,
                duration,
            }
        })
        .collect()
}
