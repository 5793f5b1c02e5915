use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::frames::{Rotation, Vec3};
use crate::strapdown::{body_rate_from_euler_rates, KinematicSample, Trajectory};
use crate::{NavError, Result};

/// Horizontal path shape. Turns are smooth heading-rate pulses, so every
/// path is twice differentiable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathKind {
    /// Straight legs joined by alternating 180° turns.
    Lawnmower { leg_length: f64, turn_duration: f64 },
    /// Constant turn rate after a short straight lead-in.
    Circle { radius: f64 },
    /// Alternating full circles.
    FigureEight { radius: f64 },
    /// Straight segments between horizontal waypoints (north, east in m),
    /// joined by smooth turns.
    SplineWaypoints { waypoints: Vec<[f64; 2]>, turn_duration: f64 },
}

/// `mean + amplitude·sin(2π t / period)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sinusoid {
    pub mean: f64,
    pub amplitude: f64,
    pub period: f64,
}

impl Default for Sinusoid {
    fn default() -> Self {
        Sinusoid {
            mean: 0.0,
            amplitude: 0.0,
            period: 100.0,
        }
    }
}

impl Sinusoid {
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let w = 2.0 * PI / self.period;
        let (s, c) = (w * t).sin_cos();
        (
            self.mean + self.amplitude * s,
            self.amplitude * w * c,
            -self.amplitude * w * w * s,
        )
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.period > 0.0 && self.mean.is_finite() && self.amplitude.is_finite()) {
            return Err(NavError::invalid(format!("{name}: period must be positive and values finite")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub path: PathKind,
    /// Horizontal speed, m/s.
    pub speed: Sinusoid,
    /// Depth, m (positive down).
    pub depth: Sinusoid,
    /// Pitch oscillation, rad.
    #[serde(default)]
    pub pitch: Sinusoid,
    /// Roll per unit turn rate, s.
    #[serde(default)]
    pub bank_gain: f64,
    #[serde(default)]
    pub initial_heading: f64,
    /// Mission length, s.
    pub duration: f64,
}

/// A heading-rate pulse: rate `rate` for about `length` seconds from `start`,
/// with `tanh` edges of width `edge`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Turn {
    start: f64,
    length: f64,
    rate: f64,
}

/// `ln cosh x`, stable for large |x|.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

const EDGE: f64 = 2.0;

impl Turn {
    /// (heading change so far, rate, rate derivative)
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (a, b) = ((t - self.start) / EDGE, (t - self.start - self.length) / EDGE);
        let pulse = 0.5 * ((a).tanh() - (b).tanh());
        let integral = 0.5 * EDGE * (ln_cosh(a) - ln_cosh(b)) + 0.5 * self.length;
        let d_pulse = 0.5 / EDGE * (sech2(a) - sech2(b));
        (self.rate * integral, self.rate * pulse, self.rate * d_pulse)
    }
}

/// Smooth analytic mission trajectory with numerically integrated position.
#[derive(Debug, Clone)]
pub struct SmoothTrajectory {
    spec: TrajectorySpec,
    turns: Vec<Turn>,
    base_rate: f64,
    grid_dt: f64,
    positions: Vec<Vec3>,
}

impl SmoothTrajectory {
    pub fn new(spec: &TrajectorySpec, grid_dt: f64) -> Result<Self> {
        if !(spec.duration > 0.0 && spec.duration.is_finite()) {
            return Err(NavError::invalid("trajectory duration must be positive"));
        }
        spec.speed.check("speed")?;
        spec.depth.check("depth")?;
        spec.pitch.check("pitch")?;
        let min_speed = spec.speed.mean - spec.speed.amplitude.abs();
        if min_speed <= 0.0 {
            return Err(NavError::invalid("speed profile must stay positive"));
        }
        if spec.pitch.amplitude.abs() + spec.pitch.mean.abs() > 1.2 {
            return Err(NavError::invalid("pitch profile too large"));
        }
        let (turns, base_rate) = plan_turns(spec)?;
        let mut traj = SmoothTrajectory {
            spec: spec.clone(),
            turns,
            base_rate,
            grid_dt,
            positions: Vec::new(),
        };
        let n = (spec.duration / grid_dt).ceil() as usize + 1;
        let mut p = Vec3::zeros();
        let mut positions = Vec::with_capacity(n + 1);
        positions.push(p);
        for k in 0..n {
            let t = k as f64 * grid_dt;
            p += simpson(&traj, t, t + grid_dt);
            positions.push(p);
        }
        traj.positions = positions;
        Ok(traj)
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    /// (heading, rate, rate derivative)
    fn heading(&self, t: f64) -> (f64, f64, f64) {
        let mut out = (self.spec.initial_heading + self.base_rate * t, self.base_rate, 0.0);
        for turn in &self.turns {
            let (h, r, dr) = turn.eval(t);
            out.0 += h;
            out.1 += r;
            out.2 += dr;
        }
        out
    }

    fn velocity(&self, t: f64) -> (Vec3, Vec3) {
        let (yaw, rate, _) = self.heading(t);
        let (u, du, _) = self.spec.speed.eval(t);
        let (_, vd, ad) = self.spec.depth.eval(t);
        let (s, c) = yaw.sin_cos();
        (
            Vec3::new(u * c, u * s, vd),
            Vec3::new(du * c - u * rate * s, du * s + u * rate * c, ad),
        )
    }
}

fn simpson(traj: &SmoothTrajectory, a: f64, b: f64) -> Vec3 {
    let h = b - a;
    (traj.velocity(a).0 + traj.velocity(0.5 * (a + b)).0 * 4.0 + traj.velocity(b).0) * (h / 6.0)
}

fn plan_turns(spec: &TrajectorySpec) -> Result<(Vec<Turn>, f64)> {
    let speed = spec.speed.mean;
    let mut turns = Vec::new();
    match &spec.path {
        PathKind::Lawnmower {
            leg_length,
            turn_duration,
        } => {
            if *leg_length <= 0.0 || *turn_duration <= 2.0 * EDGE {
                return Err(NavError::invalid("lawnmower legs and turns must be long enough"));
            }
            let leg_time = leg_length / speed;
            let mut t = leg_time;
            let mut sign = 1.0;
            while t < spec.duration {
                turns.push(Turn {
                    start: t,
                    length: *turn_duration,
                    rate: sign * PI / turn_duration,
                });
                t += turn_duration + leg_time;
                sign = -sign;
            }
            Ok((turns, 0.0))
        }
        PathKind::Circle { radius } => {
            if *radius <= 0.0 {
                return Err(NavError::invalid("circle radius must be positive"));
            }
            let length = spec.duration + 10.0 * EDGE;
            turns.push(Turn {
                start: 10.0,
                length,
                rate: speed / radius,
            });
            Ok((turns, 0.0))
        }
        PathKind::FigureEight { radius } => {
            if *radius <= 0.0 {
                return Err(NavError::invalid("figure-eight radius must be positive"));
            }
            let rate = speed / radius;
            let lobe = 2.0 * PI / rate;
            let mut t = 10.0;
            let mut sign = 1.0;
            while t < spec.duration {
                turns.push(Turn {
                    start: t,
                    length: lobe,
                    rate: sign * rate,
                });
                t += lobe;
                sign = -sign;
            }
            Ok((turns, 0.0))
        }
        PathKind::SplineWaypoints {
            waypoints,
            turn_duration,
        } => {
            if waypoints.len() < 2 || *turn_duration <= 2.0 * EDGE {
                return Err(NavError::invalid("need at least two waypoints and turns longer than the edge width"));
            }
            let bearing = |a: &[f64; 2], b: &[f64; 2]| (b[1] - a[1]).atan2(b[0] - a[0]);
            let mut t = 0.0;
            let mut heading = bearing(&waypoints[0], &waypoints[1]);
            if (heading - spec.initial_heading).abs() > 1e-12 {
                return Err(NavError::invalid("initial_heading must match the first waypoint leg"));
            }
            for i in 1..waypoints.len() {
                let a = &waypoints[i - 1];
                let b = &waypoints[i];
                let dist = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                if dist <= 0.0 {
                    return Err(NavError::invalid("repeated waypoint"));
                }
                t += dist / speed;
                if let Some(c) = waypoints.get(i + 1) {
                    let next = bearing(b, c);
                    let delta = (next - heading + PI).rem_euclid(2.0 * PI) - PI;
                    turns.push(Turn {
                        start: t - 0.5 * turn_duration,
                        length: *turn_duration,
                        rate: delta / turn_duration,
                    });
                    heading = next;
                }
            }
            Ok((turns, 0.0))
        }
    }
}

impl Trajectory for SmoothTrajectory {
    fn sample(&self, t: f64) -> KinematicSample {
        let (yaw, rate, d_rate) = self.heading(t);
        let (v, a) = self.velocity(t);
        let (pitch, d_pitch, _) = self.spec.pitch.eval(t);
        let roll = self.spec.bank_gain * rate;
        let d_roll = self.spec.bank_gain * d_rate;
        let c_bn = Rotation::from_euler(roll, pitch, yaw);
        let k = ((t / self.grid_dt).floor().max(0.0) as usize).min(self.positions.len() - 1);
        let t0 = k as f64 * self.grid_dt;
        let p = self.positions[k] + if t > t0 { simpson(self, t0, t) } else { Vec3::zeros() };
        KinematicSample {
            t,
            p_n: p,
            v_n: v,
            a_n: a,
            c_bn,
            omega_b: body_rate_from_euler_rates(roll, pitch, &Vec3::new(d_roll, d_pitch, rate)),
        }
    }
}
