//! Outage experiments: the filter aided by predicted DVL velocities versus
//! the unaided filter, scored against ground truth.

mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dvl_model::{in_outage, BeamGeometry, DvlMeasurement};
use crate::ekf::{Ekf, EkfConfig, MeasurementNoise};
use crate::frames::Vec3;
use crate::set_transformer::{predict_outage_sequence, VelocityPredictor, N_PAST_DVL};
use crate::sim_data::MissionRecord;
use crate::strapdown::{gravity_ned, ImuSample, NavState};
use crate::{NavError, Result};

pub use report::{svg_trajectory, write_scenarios_csv, write_summary_csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Outage lengths, s.
    pub durations: Vec<f64>,
    /// Start times drawn per mission, shared by every duration.
    pub n_starts: usize,
    /// Earliest outage start, s.
    pub warmup: f64,
    /// Minimum time left after the longest outage, s.
    pub end_margin: f64,
    /// Extra seconds after the outage included in the position RMSE.
    pub position_tail: f64,
    /// Scale on the DVL measurement covariance for predicted updates.
    pub inflation: f64,
    /// Beam noise used to derive the DVL measurement covariance, m/s.
    /// Filled in from the DVL settings of a run configuration.
    #[serde(skip)]
    pub dvl_noise_std: f64,
    #[serde(skip)]
    pub ekf: EkfConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            durations: vec![30.0, 40.0, 50.0],
            n_starts: 5,
            warmup: 60.0,
            end_margin: 5.0,
            position_tail: 10.0,
            inflation: 1.0,
            dvl_noise_std: crate::dvl_model::DvlErrorParams::default().noise_std,
            ekf: EkfConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.durations.is_empty() || self.durations.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(NavError::Config("durations must be nonempty and nonnegative".into()));
        }
        if self.n_starts == 0 {
            return Err(NavError::Config("n_starts must be at least 1".into()));
        }
        if !(self.inflation > 0.0) || !(self.dvl_noise_std > 0.0) {
            return Err(NavError::Config("inflation and dvl_noise_std must be positive".into()));
        }
        Ok(())
    }

    pub fn measurement_noise(&self, geom: &BeamGeometry) -> Result<MeasurementNoise> {
        match self.ekf.dvl_velocity_std {
            Some(std) => Ok(MeasurementNoise::isotropic(std)),
            None => MeasurementNoise::from_beam_noise(self.dvl_noise_std, geom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageScenario {
    pub mission: usize,
    pub t_init: f64,
    pub t_duration: f64,
}

/// What the filter receives at DVL epochs inside the outage.
#[derive(Debug, Clone)]
pub enum Aiding {
    /// No outage: every valid DVL measurement is used.
    Full,
    /// Prediction only during the outage.
    Blackout,
    /// Surrogate measurements during the outage.
    Predicted(Vec<DvlMeasurement>),
}

/// Filter output at every IMU epoch from the mission start.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub states: Vec<NavState>,
    pub p_trace: Vec<f64>,
    /// Surrogate measurements consumed.
    pub predicted_updates: usize,
}

/// Runs the closed-loop filter from the ground-truth initial state up to
/// `t_end`.
pub fn run_filter(
    mission: &MissionRecord,
    scenario: &OutageScenario,
    aiding: &Aiding,
    r: &MeasurementNoise,
    r_predicted: &MeasurementNoise,
    ekf_cfg: &EkfConfig,
    t_end: f64,
) -> Result<FilterTrace> {
    let mut initial = mission.ground_truth[0];
    initial.b_a = Vec3::zeros();
    initial.b_g = Vec3::zeros();
    let mut ekf = Ekf::new(initial, ekf_cfg, gravity_ned());
    let n = mission
        .imu
        .iter()
        .take_while(|s| s.t <= t_end + 1e-9)
        .count();
    let mut states = Vec::with_capacity(n + 1);
    let mut p_trace = Vec::with_capacity(n + 1);
    states.push(ekf.state);
    p_trace.push(ekf.p.trace());
    let predictions: &[DvlMeasurement] = match aiding {
        Aiding::Predicted(p) => p,
        _ => &[],
    };
    let mut dvl = mission.dvl.iter().peekable();
    let mut pred = predictions.iter().peekable();
    let mut predicted_updates = 0;
    let tol = 0.5 * mission.imu_dt;
    for sample in &mission.imu[..n] {
        ekf.propagate(sample, mission.imu_dt);
        ekf.state.t = sample.t;
        while dvl.peek().is_some_and(|m| m.t < sample.t - tol) {
            dvl.next();
        }
        while pred.peek().is_some_and(|m| m.t < sample.t - tol) {
            pred.next();
        }
        let outage = in_outage(sample.t, scenario.t_init, scenario.t_duration);
        let measurement = if !outage || matches!(aiding, Aiding::Full) {
            dvl.peek()
                .filter(|m| (m.t - sample.t).abs() <= tol && m.valid)
                .map(|m| (m.body_velocity, r))
        } else {
            pred.peek()
                .filter(|m| (m.t - sample.t).abs() <= tol)
                .map(|m| {
                    predicted_updates += 1;
                    (m.body_velocity, r_predicted)
                })
        };
        if let Some((z, noise)) = measurement {
            ekf.update_velocity(&z, noise)?;
        }
        if !ekf.state.is_finite() {
            return Err(NavError::Singular("navigation state became non-finite"));
        }
        states.push(ekf.state);
        p_trace.push(ekf.p.trace());
    }
    Ok(FilterTrace {
        states,
        p_trace,
        predicted_updates,
    })
}

/// Velocity RMSE: `sqrt(Σᵢ‖xᵢ − x̂ᵢ‖² / N)`.
pub fn velocity_rmse(est: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(NavError::invalid(format!(
            "sequence lengths differ: {} vs {}",
            est.len(),
            gt.len()
        )));
    }
    if est.is_empty() {
        return Err(NavError::invalid("empty sequences"));
    }
    let sum: f64 = est.iter().zip(gt).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok((sum / est.len() as f64).sqrt())
}

/// Mean absolute per-axis error of the final position.
pub fn afpe(p_final_est: &Vec3, p_final_gt: &Vec3) -> f64 {
    (p_final_est - p_final_gt).abs().sum() / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// m/s over the outage.
    pub vel_rmse: f64,
    /// m over the outage plus the tail.
    pub pos_rmse: f64,
    /// m at the end of the outage.
    pub afpe: f64,
}

/// Scores of one method on one scenario plus the north/east track used for plots.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub metrics: Metrics,
    /// (t, position) from the outage start to the end of the scoring window.
    pub track: Vec<(f64, Vec3)>,
    pub trace: FilterTrace,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: OutageScenario,
    pub st_aided: MethodRun,
    pub pure_ins: MethodRun,
    /// The same filter with no outage, scored on the same window.
    pub reference: Metrics,
    pub gt_track: Vec<(f64, Vec3)>,
}

impl RunResult {
    pub fn improvement(&self) -> Metrics {
        let pct = |ours: f64, base: f64| (base - ours) / base * 100.0;
        let (a, b) = (&self.st_aided.metrics, &self.pure_ins.metrics);
        Metrics {
            vel_rmse: pct(a.vel_rmse, b.vel_rmse),
            pos_rmse: pct(a.pos_rmse, b.pos_rmse),
            afpe: pct(a.afpe, b.afpe),
        }
    }
}

struct Window {
    start: usize,
    outage_end: usize,
    end: usize,
}

fn scoring_window(mission: &MissionRecord, scenario: &OutageScenario, tail: f64) -> Result<Window> {
    let idx = |t: f64| {
        mission
            .gt_index(t)
            .ok_or_else(|| NavError::invalid(format!("time {t} outside mission {}", mission.id)))
    };
    let last = mission.ground_truth.len() - 1;
    let start = idx(scenario.t_init)?;
    let outage_end = idx(scenario.t_init + scenario.t_duration)?;
    let end = idx((scenario.t_init + scenario.t_duration + tail).min(mission.ground_truth[last].t))?;
    Ok(Window {
        start,
        outage_end,
        end,
    })
}

fn score(mission: &MissionRecord, trace: FilterTrace, w: &Window) -> Result<MethodRun> {
    let gt = &mission.ground_truth;
    // Outage epochs are [t_init, t_init + duration); the state at t_init is
    // the last one shaped by real DVL, so the velocity window starts one
    // epoch later and ends at the outage end.
    let vel_range = (w.start + 1).min(w.outage_end)..=w.outage_end;
    let est_v: Vec<Vec3> = vel_range.clone().map(|k| trace.states[k].v_n).collect();
    let gt_v: Vec<Vec3> = vel_range.map(|k| gt[k].v_n).collect();
    let vel_rmse = velocity_rmse(&est_v, &gt_v)?;

    let mut p = gt[w.start].p_n;
    let mut track = Vec::with_capacity(w.end - w.start + 1);
    track.push((gt[w.start].t, p));
    for k in w.start + 1..=w.end {
        p += (trace.states[k - 1].v_n + trace.states[k].v_n) * (0.5 * mission.imu_dt);
        track.push((gt[k].t, p));
    }
    let pos_sq: f64 = track
        .iter()
        .zip(&gt[w.start..=w.end])
        .map(|((_, p), g)| (p - g.p_n).norm_squared())
        .sum();
    let pos_rmse = (pos_sq / track.len() as f64).sqrt();
    let afpe = afpe(&track[w.outage_end - w.start].1, &gt[w.outage_end].p_n);
    Ok(MethodRun {
        metrics: Metrics {
            vel_rmse,
            pos_rmse,
            afpe,
        },
        track,
        trace,
    })
}

/// The three DVL velocities immediately preceding the outage.
fn pre_outage_history(mission: &MissionRecord, t_init: f64) -> Result<[Vec3; N_PAST_DVL]> {
    let before: Vec<&DvlMeasurement> = mission
        .dvl
        .iter()
        .filter(|m| m.t < t_init - 0.5 * mission.imu_dt)
        .collect();
    if before.len() < N_PAST_DVL {
        return Err(NavError::invalid(format!(
            "outage at {t_init} s leaves only {} DVL epochs of history",
            before.len()
        )));
    }
    let tail = &before[before.len() - N_PAST_DVL..];
    if tail.iter().any(|m| !m.valid) {
        return Err(NavError::invalid(format!("DVL history before {t_init} s contains invalid epochs")));
    }
    Ok([tail[0].body_velocity, tail[1].body_velocity, tail[2].body_velocity])
}

/// Surrogate DVL measurements for the outage.
pub fn outage_predictions(
    mission: &MissionRecord,
    scenario: &OutageScenario,
    predictor: &dyn VelocityPredictor,
) -> Result<Vec<DvlMeasurement>> {
    let history = pre_outage_history(mission, scenario.t_init)?;
    predict_outage_sequence(
        predictor,
        history,
        &mission.imu,
        mission.imu_dt,
        mission.dvl_period,
        scenario.t_init,
        scenario.t_duration,
    )
}

/// Both methods and the no-outage reference on one scenario.
pub fn run_scenario(
    mission: &MissionRecord,
    scenario: &OutageScenario,
    predictor: &dyn VelocityPredictor,
    geom: &BeamGeometry,
    cfg: &EvalConfig,
) -> Result<RunResult> {
    let w = scoring_window(mission, scenario, cfg.position_tail)?;
    let t_end = mission.ground_truth[w.end].t;
    let r = cfg.measurement_noise(geom)?;
    let r_pred = r.scaled(cfg.inflation);
    let predictions = outage_predictions(mission, scenario, predictor)?;
    let run = |aiding: &Aiding| run_filter(mission, scenario, aiding, &r, &r_pred, &cfg.ekf, t_end);
    let st = score(mission, run(&Aiding::Predicted(predictions))?, &w)?;
    let ins = score(mission, run(&Aiding::Blackout)?, &w)?;
    let reference = score(mission, run(&Aiding::Full)?, &w)?.metrics;
    let gt_track = mission.ground_truth[w.start..=w.end]
        .iter()
        .map(|s| (s.t, s.p_n))
        .collect();
    Ok(RunResult {
        scenario: *scenario,
        st_aided: st,
        pure_ins: ins,
        reference,
        gt_track,
    })
}

/// Seeded outage start times for one mission, rounded to whole seconds.
pub fn sample_start_times(
    mission: &MissionRecord,
    cfg: &EvalConfig,
    seed: u64,
    mission_index: usize,
) -> Result<Vec<f64>> {
    let longest = cfg.durations.iter().cloned().fold(0.0, f64::max);
    let t0 = mission.start_time();
    let lo = (t0 + cfg.warmup).ceil();
    let hi = (t0 + mission.duration() - longest - cfg.end_margin).floor();
    if hi < lo {
        return Err(NavError::invalid(format!(
            "mission {} ({:.0} s) is too short for a {longest} s outage after {} s warm-up",
            mission.id,
            mission.duration(),
            cfg.warmup
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (mission_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    Ok((0..cfg.n_starts)
        .map(|_| rng.random_range(lo..=hi).round())
        .collect())
}

/// Mean metrics of one mission × duration cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub mission: String,
    pub duration: f64,
    pub st_aided: Metrics,
    pub pure_ins: Metrics,
    pub reference: Metrics,
}

impl SummaryCell {
    pub fn improvement(&self) -> Metrics {
        let pct = |ours: f64, base: f64| (base - ours) / base * 100.0;
        let (a, b) = (&self.st_aided, &self.pure_ins);
        Metrics {
            vel_rmse: pct(a.vel_rmse, b.vel_rmse),
            pos_rmse: pct(a.pos_rmse, b.pos_rmse),
            afpe: pct(a.afpe, b.afpe),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub mission_ids: Vec<String>,
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryCell>,
}

fn mean_metrics<'a>(items: impl Iterator<Item = &'a Metrics>) -> Metrics {
    let (mut v, mut p, mut a, mut n) = (0.0, 0.0, 0.0, 0usize);
    for m in items {
        v += m.vel_rmse;
        p += m.pos_rmse;
        a += m.afpe;
        n += 1;
    }
    let n = n.max(1) as f64;
    Metrics {
        vel_rmse: v / n,
        pos_rmse: p / n,
        afpe: a / n,
    }
}

/// Every mission × duration × start time, evaluated in parallel and
/// aggregated in scenario order.
pub fn sweep(
    missions: &[MissionRecord],
    predictor: &dyn VelocityPredictor,
    geom: &BeamGeometry,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<SweepReport> {
    cfg.validate()?;
    let mut scenarios = Vec::new();
    for (i, m) in missions.iter().enumerate() {
        let starts = sample_start_times(m, cfg, seed, i)?;
        for &d in &cfg.durations {
            for &t in &starts {
                scenarios.push(OutageScenario {
                    mission: i,
                    t_init: t,
                    t_duration: d,
                });
            }
        }
    }
    let runs = scenarios
        .par_iter()
        .map(|s| run_scenario(&missions[s.mission], s, predictor, geom, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    for (i, m) in missions.iter().enumerate() {
        for &d in &cfg.durations {
            let cell: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.scenario.mission == i && r.scenario.t_duration == d)
                .collect();
            summary.push(SummaryCell {
                mission: m.id.clone(),
                duration: d,
                st_aided: mean_metrics(cell.iter().map(|r| &r.st_aided.metrics)),
                pure_ins: mean_metrics(cell.iter().map(|r| &r.pure_ins.metrics)),
                reference: mean_metrics(cell.iter().map(|r| &r.reference)),
            });
        }
    }
    Ok(SweepReport {
        mission_ids: missions.iter().map(|m| m.id.clone()).collect(),
        runs,
        summary,
    })
}

/// Returns the ground-truth body velocity at each requested epoch.
pub struct OraclePredictor<'a> {
    pub mission: &'a MissionRecord,
}

impl VelocityPredictor for OraclePredictor<'_> {
    fn predict(&self, t: f64, _: &[Vec3; N_PAST_DVL], _: &[ImuSample]) -> Result<Vec3> {
        let k = self
            .mission
            .gt_index(t)
            .ok_or_else(|| NavError::invalid(format!("no ground truth at {t}")))?;
        Ok(self.mission.ground_truth[k].body_velocity())
    }
}

/// Repeats the most recent velocity.
pub struct PersistLastPredictor;

impl VelocityPredictor for PersistLastPredictor {
    fn predict(&self, _: f64, past: &[Vec3; N_PAST_DVL], _: &[ImuSample]) -> Result<Vec3> {
        Ok(past[N_PAST_DVL - 1])
    }
}
