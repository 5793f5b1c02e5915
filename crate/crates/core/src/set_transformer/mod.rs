//! Two-branch set-transformer that regresses the next DVL body velocity from
//! the three previous DVL velocities and the last four seconds of IMU data.
//!
//! Each branch embeds its time series into patches with a strided
//! convolution, refines them with a stack of set-attention blocks, pools to a
//! fixed number of seed rows and decodes them into a flat vector. The two
//! vectors are concatenated and regressed to ℝ³ by a two-layer head.
//!
//! The head's output is the standardized change relative to the most recent
//! DVL velocity in the window; [`StModel`] converts it back to m/s.

mod network;
mod persist;
mod train;

use serde::{Deserialize, Serialize};

use crate::dvl_model::{in_outage, DvlMeasurement};
use crate::frames::Vec3;
use crate::strapdown::ImuSample;
use crate::{NavError, Result};

pub use network::{forward, forward_batch, mab, patch_embed, pma, sab, Params, StWeights};
pub use train::{mse, persist_last_mse, train, validation_split, EpochLoss, TrainReport};

/// DVL velocities per window.
pub const N_PAST_DVL: usize = 3;
/// IMU samples per window (four seconds at 100 Hz).
pub const N_IMU: usize = 400;
pub const IMU_CHANNELS: usize = 6;

/// One supervised example: the three DVL velocities before the target epoch,
/// the IMU samples of the four seconds ending at the target epoch, and the
/// DVL velocity that was withheld.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    /// Time of the withheld DVL epoch, s.
    pub t: f64,
    /// Oldest first, m/s.
    pub dvl_past: [Vec3; N_PAST_DVL],
    /// `[fx, fy, fz, wx, wy, wz]` rows, oldest first.
    pub imu_past: Vec<[f64; IMU_CHANNELS]>,
    pub target: Vec3,
}

impl TrainingWindow {
    pub fn new(t: f64, dvl_past: [Vec3; N_PAST_DVL], imu_past: Vec<[f64; IMU_CHANNELS]>, target: Vec3) -> Result<Self> {
        if imu_past.len() != N_IMU {
            return Err(NavError::invalid(format!(
                "window needs {N_IMU} IMU rows, got {}",
                imu_past.len()
            )));
        }
        Ok(TrainingWindow {
            t,
            dvl_past,
            imu_past,
            target,
        })
    }

    pub fn last_dvl(&self) -> Vec3 {
        self.dvl_past[N_PAST_DVL - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum.
    Momentum,
    Adam,
}

/// Architecture and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StHyperParams {
    /// IMU patch kernel length, samples.
    pub alpha: usize,
    /// IMU patch stride, samples.
    pub beta: usize,
    /// Time rows per convolution column; only 1 is supported.
    pub gamma: usize,
    /// DVL patch kernel length.
    pub dvl_alpha: usize,
    /// DVL patch stride.
    pub dvl_beta: usize,
    /// Latent width `D`, shared by the decoder.
    pub d_model: usize,
    /// Encoder SAB count `b`.
    pub n_sab: usize,
    /// Attention heads `h`.
    pub heads: usize,
    /// Feed-forward expansion width.
    pub ffe: usize,
    /// PMA seed vectors `k`.
    pub seeds: usize,
    /// SABs in the decoder.
    pub decoder_sabs: usize,
    pub dropout: f64,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
}

impl StHyperParams {
    /// Full-size network.
    pub fn full() -> Self {
        StHyperParams {
            alpha: 200,
            beta: 100,
            gamma: 1,
            dvl_alpha: 3,
            dvl_beta: 1,
            d_model: 128,
            n_sab: 16,
            heads: 2,
            ffe: 256,
            seeds: 3,
            decoder_sabs: 1,
            dropout: 0.2,
            optimizer: Optimizer::Momentum,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 128,
            epochs: 500,
            validation_fraction: 0.25,
        }
    }

    /// Desk-scale network used by tests and the default configuration.
    pub fn toy() -> Self {
        StHyperParams {
            d_model: 16,
            n_sab: 2,
            heads: 2,
            ffe: 32,
            seeds: 3,
            batch_size: 32,
            epochs: 50,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" | "paper" => Some(Self::full()),
            "toy" => Some(Self::toy()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("dvl_alpha", self.dvl_alpha),
            ("dvl_beta", self.dvl_beta),
            ("d_model", self.d_model),
            ("n_sab", self.n_sab),
            ("heads", self.heads),
            ("ffe", self.ffe),
            ("seeds", self.seeds),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(NavError::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(NavError::Config(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.gamma != 1 {
            return Err(NavError::Config("only gamma = 1 is supported".into()));
        }
        if self.alpha > N_IMU || self.dvl_alpha > N_PAST_DVL {
            return Err(NavError::Config("patch kernel longer than its input".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NavError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NavError::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NavError::Config("momentum outside [0, 1)".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(NavError::Config("validation_fraction outside (0, 1)".into()));
        }
        Ok(())
    }

    pub fn imu_patches(&self) -> usize {
        (N_IMU - self.alpha) / self.beta + 1
    }

    pub fn dvl_patches(&self) -> usize {
        (N_PAST_DVL - self.dvl_alpha) / self.dvl_beta + 1
    }
}

/// Per-channel standardization learned from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub imu_mean: [f64; IMU_CHANNELS],
    pub imu_std: [f64; IMU_CHANNELS],
    pub dvl_mean: [f64; 3],
    pub dvl_std: [f64; 3],
    /// RMS of `target − last DVL velocity`. The residual is not centered:
    /// the prediction is fed back recursively during an outage, and any
    /// offset would accumulate once per epoch.
    pub delta_std: [f64; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            imu_mean: [0.0; IMU_CHANNELS],
            imu_std: [1.0; IMU_CHANNELS],
            dvl_mean: [0.0; 3],
            dvl_std: [1.0; 3],
            delta_std: [1.0; 3],
        }
    }
}

fn mean_std<const N: usize>(rows: impl Iterator<Item = [f64; N]>) -> ([f64; N], [f64; N]) {
    let mut sum = [0.0; N];
    let mut sq = [0.0; N];
    let mut n = 0usize;
    for row in rows {
        for i in 0..N {
            sum[i] += row[i];
            sq[i] += row[i] * row[i];
        }
        n += 1;
    }
    let n = n.max(1) as f64;
    let mut std = [1.0; N];
    let mut mean = [0.0; N];
    for i in 0..N {
        mean[i] = sum[i] / n;
        let var = (sq[i] / n - mean[i] * mean[i]).max(0.0);
        if var.sqrt() > 1e-9 {
            std[i] = var.sqrt();
        }
    }
    (mean, std)
}

impl Normalization {
    pub fn fit(windows: &[&TrainingWindow]) -> Self {
        let (imu_mean, imu_std) = mean_std(windows.iter().flat_map(|w| w.imu_past.iter().copied()));
        let (dvl_mean, dvl_std) = mean_std(
            windows
                .iter()
                .flat_map(|w| w.dvl_past.iter().map(|v| [v.x, v.y, v.z])),
        );
        let mut sq = [0.0; 3];
        for w in windows {
            let d = w.target - w.last_dvl();
            for i in 0..3 {
                sq[i] += d[i] * d[i];
            }
        }
        let delta_std = sq.map(|s| {
            let rms = (s / windows.len().max(1) as f64).sqrt();
            if rms > 1e-9 { rms } else { 1.0 }
        });
        Normalization {
            imu_mean,
            imu_std,
            dvl_mean,
            dvl_std,
            delta_std,
        }
    }

    fn target(&self, w: &TrainingWindow) -> [f64; 3] {
        let d = w.target - w.last_dvl();
        std::array::from_fn(|i| d[i] / self.delta_std[i])
    }

    fn velocity(&self, w: &TrainingWindow, out: &[f64]) -> Vec3 {
        w.last_dvl() + Vec3::from_fn(|i, _| self.delta_std[i] * out[i])
    }
}

/// Anything that can stand in for a missing DVL velocity.
pub trait VelocityPredictor: Sync {
    /// Body velocity at epoch `t` from the three preceding velocities (oldest
    /// first) and the [`N_IMU`] IMU samples ending at `t`.
    fn predict(&self, t: f64, dvl_past: &[Vec3; N_PAST_DVL], imu_past: &[ImuSample]) -> Result<Vec3>;
}

/// Trained network packaged as a predictor.
#[derive(Debug, Clone)]
pub struct StModel {
    pub weights: StWeights,
}

impl StModel {
    pub fn new(weights: StWeights) -> Self {
        StModel { weights }
    }

    pub fn predict_windows(&self, windows: &[&TrainingWindow]) -> Result<Vec<Vec3>> {
        network::predict_velocities(&self.weights, windows)
    }
}

impl VelocityPredictor for StModel {
    fn predict(&self, t: f64, dvl_past: &[Vec3; N_PAST_DVL], imu_past: &[ImuSample]) -> Result<Vec3> {
        let window = TrainingWindow::new(
            t,
            *dvl_past,
            imu_past.iter().map(ImuSample::channels).collect(),
            Vec3::zeros(),
        )?;
        Ok(self.predict_windows(&[&window])?[0])
    }
}

/// Index of the IMU sample stamped `t`, if the stream contains it.
fn imu_index(imu: &[ImuSample], dt: f64, t: f64) -> Option<usize> {
    let first = imu.first()?;
    let k = ((t - first.t) / dt).round();
    if k < 0.0 {
        return None;
    }
    let k = k as usize;
    (k < imu.len() && (imu[k].t - t).abs() < 1e-6 * dt.max(1.0)).then_some(k)
}

/// Recursive outage bridging: at each DVL epoch inside the outage the
/// predictor sees the three most recent velocities, real before the outage
/// and its own predictions afterwards, plus the IMU window ending at that
/// epoch.
pub fn predict_outage_sequence(
    predictor: &dyn VelocityPredictor,
    past_dvl: [Vec3; N_PAST_DVL],
    imu: &[ImuSample],
    imu_dt: f64,
    dvl_period: f64,
    t_init: f64,
    t_duration: f64,
) -> Result<Vec<DvlMeasurement>> {
    if t_duration < 0.0 || dvl_period <= 0.0 {
        return Err(NavError::invalid("outage duration and DVL period must be nonnegative/positive"));
    }
    let mut ring = past_dvl;
    let mut out = Vec::new();
    let first_epoch = (t_init / dvl_period - 1e-9).ceil() as i64;
    for n in first_epoch.. {
        let t = n as f64 * dvl_period;
        if !in_outage(t, t_init, t_duration) {
            break;
        }
        let end = imu_index(imu, imu_dt, t)
            .ok_or_else(|| NavError::invalid(format!("no IMU sample at outage epoch {t}")))?;
        if end + 1 < N_IMU {
            return Err(NavError::invalid(format!(
                "outage epoch {t} has only {} IMU samples of history",
                end + 1
            )));
        }
        let v = predictor.predict(t, &ring, &imu[end + 1 - N_IMU..=end])?;
        ring.rotate_left(1);
        ring[N_PAST_DVL - 1] = v;
        out.push(DvlMeasurement::predicted(t, v));
    }
    Ok(out)
}
