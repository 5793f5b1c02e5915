use std::collections::HashMap;

use dvlnav_tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Normalization, StHyperParams, TrainingWindow, IMU_CHANNELS, N_IMU, N_PAST_DVL};
use crate::frames::Vec3;
use crate::{NavError, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`
    FanIn(usize),
    Ones,
    Zeros,
}

struct Layout(Vec<(String, Vec<usize>, Init)>);

impl Layout {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.0.push((name, shape, init));
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        self.push(format!("{name}.w"), vec![fan_in, fan_out], Init::FanIn(fan_in));
        self.push(format!("{name}.b"), vec![fan_out], Init::FanIn(fan_in));
    }

    fn layer_norm(&mut self, name: &str, d: usize) {
        self.push(format!("{name}.g"), vec![d], Init::Ones);
        self.push(format!("{name}.b"), vec![d], Init::Zeros);
    }

    fn mab(&mut self, prefix: &str, hp: &StHyperParams) {
        let d = hp.d_model;
        for proj in ["q", "k", "v", "o"] {
            self.linear(&format!("{prefix}.{proj}"), d, d);
        }
        self.layer_norm(&format!("{prefix}.ln1"), d);
        self.linear(&format!("{prefix}.ff1"), d, hp.ffe);
        self.linear(&format!("{prefix}.ff2"), hp.ffe, d);
        self.layer_norm(&format!("{prefix}.ln2"), d);
    }

    fn branch(&mut self, prefix: &str, channels: usize, kernel: usize, hp: &StHyperParams) {
        let d = hp.d_model;
        let fan = channels * kernel;
        self.push(format!("{prefix}.embed.w"), vec![d, channels, kernel], Init::FanIn(fan));
        self.push(format!("{prefix}.embed.b"), vec![d], Init::FanIn(fan));
        for i in 0..hp.n_sab {
            self.mab(&format!("{prefix}.enc{i}"), hp);
        }
        self.push(format!("{prefix}.pma.seeds"), vec![hp.seeds, d], Init::FanIn(d));
        self.linear(&format!("{prefix}.pma.rff1"), d, hp.ffe);
        self.linear(&format!("{prefix}.pma.rff2"), hp.ffe, d);
        self.mab(&format!("{prefix}.pma.mab"), hp);
        for i in 0..hp.decoder_sabs {
            self.mab(&format!("{prefix}.dec{i}"), hp);
        }
    }

    fn of(hp: &StHyperParams) -> Self {
        let mut l = Layout(Vec::new());
        l.branch("imu", IMU_CHANNELS, hp.alpha, hp);
        l.branch("dvl", 3, hp.dvl_alpha, hp);
        let flat = 2 * hp.seeds * hp.d_model;
        l.linear("head.fc1", flat, hp.d_model);
        l.linear("head.fc2", hp.d_model, 3);
        l
    }
}

/// Trainable tensors plus the settings and input statistics they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct StWeights {
    pub hyper: StHyperParams,
    pub seed: u64,
    pub norm: Normalization,
    params: Vec<(String, Tensor)>,
}

impl StWeights {
    /// Seeded fan-in uniform initialization.
    pub fn init(hyper: &StHyperParams, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Layout::of(hyper)
            .0
            .into_iter()
            .map(|(name, shape, init)| {
                let t = match init {
                    Init::FanIn(fan) => Tensor::uniform(&shape, 1.0 / (fan as f64).sqrt(), &mut rng),
                    Init::Ones => Tensor::ones(&shape),
                    Init::Zeros => Tensor::zeros(&shape),
                };
                (name, t)
            })
            .collect();
        Ok(StWeights {
            hyper: hyper.clone(),
            seed,
            norm: Normalization::default(),
            params,
        })
    }

    /// Rebuilds weights from named tensors, checking them against the layout.
    pub fn from_parts(
        hyper: StHyperParams,
        seed: u64,
        norm: Normalization,
        params: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        hyper.validate()?;
        let layout = Layout::of(&hyper).0;
        if layout.len() != params.len() {
            return Err(NavError::Weights(format!(
                "expected {} tensors, found {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape, _), (pname, t)) in layout.iter().zip(&params) {
            if name != pname || shape.as_slice() != t.shape() {
                return Err(NavError::Weights(format!(
                    "tensor {pname} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(NavError::Weights(format!("tensor {pname} is not finite")));
            }
        }
        Ok(StWeights {
            hyper,
            seed,
            norm,
            params,
        })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|(_, t)| t.is_finite())
    }
}

/// The weights placed on a tape, addressable by name.
pub struct Params<'t> {
    by_name: HashMap<String, usize>,
    vars: Vec<Var<'t>>,
}

impl<'t> Params<'t> {
    /// Leaves when `trainable`, constants otherwise.
    pub fn bind(tape: &'t Tape, weights: &StWeights, trainable: bool) -> Self {
        let mut by_name = HashMap::with_capacity(weights.params.len());
        let mut vars = Vec::with_capacity(weights.params.len());
        for (i, (name, t)) in weights.params.iter().enumerate() {
            by_name.insert(name.clone(), i);
            vars.push(if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            });
        }
        Params { by_name, vars }
    }

    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.by_name
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| NavError::Weights(format!("missing tensor {name}")))
    }

    /// In the same order as [`StWeights::tensors`].
    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }
}

fn last_axis(x: &Var<'_>) -> usize {
    x.shape().len() - 1
}

fn linear<'t>(p: &Params<'t>, name: &str, x: Var<'t>) -> Result<Var<'t>> {
    Ok(x.matmul(p.get(&format!("{name}.w"))?)?
        .add_bias(p.get(&format!("{name}.b"))?)?)
}

fn layer_norm<'t>(p: &Params<'t>, name: &str, x: Var<'t>) -> Result<Var<'t>> {
    Ok(x.layer_norm(p.get(&format!("{name}.g"))?, p.get(&format!("{name}.b"))?, LN_EPS)?)
}

fn rff<'t>(p: &Params<'t>, first: &str, second: &str, x: Var<'t>) -> Result<Var<'t>> {
    linear(p, second, linear(p, first, x)?.relu())
}

/// Strided-convolution patch embedding of `x = [.., L, C]` into `[.., P, D]`.
pub fn patch_embed<'t>(x: Var<'t>, weight: Var<'t>, bias: Var<'t>, stride: usize) -> Result<Var<'t>> {
    let channels_first = x.transpose()?;
    Ok(channels_first.conv1d(weight, stride)?.transpose()?.add_bias(bias)?)
}

/// Multihead attention block `LN(H + rFF(H))`, `H = LN(X + MHA(X, Y, Y))`.
pub fn mab<'t>(p: &Params<'t>, prefix: &str, x: Var<'t>, y: Var<'t>, heads: usize) -> Result<Var<'t>> {
    let axis = last_axis(&x);
    let d = x.shape()[axis];
    let dh = d / heads;
    let q = linear(p, &format!("{prefix}.q"), x)?;
    let k = linear(p, &format!("{prefix}.k"), y)?;
    let v = linear(p, &format!("{prefix}.v"), y)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut per_head = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.narrow(axis, h * dh, dh)?;
        let kh = k.narrow(axis, h * dh, dh)?;
        let vh = v.narrow(axis, h * dh, dh)?;
        let weights = qh.matmul(kh.transpose()?)?.scale(scale).softmax();
        per_head.push(weights.matmul(vh)?);
    }
    let attended = linear(p, &format!("{prefix}.o"), Var::concat(&per_head, axis)?)?;
    let h = layer_norm(p, &format!("{prefix}.ln1"), x.add(attended)?)?;
    let ff = rff(p, &format!("{prefix}.ff1"), &format!("{prefix}.ff2"), h)?;
    layer_norm(p, &format!("{prefix}.ln2"), h.add(ff)?)
}

/// Set attention block, `MAB(X, X)`.
pub fn sab<'t>(p: &Params<'t>, prefix: &str, x: Var<'t>, heads: usize) -> Result<Var<'t>> {
    mab(p, prefix, x, x, heads)
}

/// Pooling by multihead attention: the seed rows attend over `rFF(Z)`.
pub fn pma<'t>(p: &Params<'t>, prefix: &str, z: Var<'t>, heads: usize) -> Result<Var<'t>> {
    let seeds = p.get(&format!("{prefix}.seeds"))?;
    let queries = match z.shape().as_slice() {
        [batch, _, _] => seeds.expand_batch(*batch),
        _ => seeds,
    };
    let processed = rff(p, &format!("{prefix}.rff1"), &format!("{prefix}.rff2"), z)?;
    mab(p, &format!("{prefix}.mab"), queries, processed, heads)
}

fn branch<'t>(p: &Params<'t>, prefix: &str, x: Var<'t>, stride: usize, hp: &StHyperParams) -> Result<Var<'t>> {
    let mut h = patch_embed(
        x,
        p.get(&format!("{prefix}.embed.w"))?,
        p.get(&format!("{prefix}.embed.b"))?,
        stride,
    )?;
    for i in 0..hp.n_sab {
        h = sab(p, &format!("{prefix}.enc{i}"), h, hp.heads)?;
    }
    let mut pooled = pma(p, &format!("{prefix}.pma"), h, hp.heads)?;
    for i in 0..hp.decoder_sabs {
        pooled = sab(p, &format!("{prefix}.dec{i}"), pooled, hp.heads)?;
    }
    let batch = pooled.shape()[0];
    Ok(pooled.reshape(&[batch, hp.seeds * hp.d_model])?)
}

/// Batched network: `imu = [B, 400, 6]`, `dvl = [B, 3, 3]` (both already
/// standardized) to `[B, 3]` in standardized output units.
pub fn forward_batch<'t, R: Rng + ?Sized>(
    p: &Params<'t>,
    hp: &StHyperParams,
    imu: Var<'t>,
    dvl: Var<'t>,
    training: bool,
    rng: &mut R,
) -> Result<Var<'t>> {
    let a = branch(p, "imu", imu, hp.beta, hp)?;
    let b = branch(p, "dvl", dvl, hp.dvl_beta, hp)?;
    let joint = Var::concat(&[a, b], 1)?;
    let hidden = linear(p, "head.fc1", joint)?
        .dropout(hp.dropout, training, rng)?
        .tanh();
    linear(p, "head.fc2", hidden)
}

/// Standardized input tensors for a batch of windows.
pub(crate) fn batch_inputs(norm: &Normalization, windows: &[&TrainingWindow]) -> (Tensor, Tensor) {
    let b = windows.len();
    let mut imu = Vec::with_capacity(b * N_IMU * IMU_CHANNELS);
    let mut dvl = Vec::with_capacity(b * N_PAST_DVL * 3);
    for w in windows {
        for row in &w.imu_past {
            imu.extend((0..IMU_CHANNELS).map(|c| (row[c] - norm.imu_mean[c]) / norm.imu_std[c]));
        }
        for v in &w.dvl_past {
            dvl.extend((0..3).map(|c| (v[c] - norm.dvl_mean[c]) / norm.dvl_std[c]));
        }
    }
    (
        Tensor::new(&[b, N_IMU, IMU_CHANNELS], imu).expect("window rows are validated"),
        Tensor::new(&[b, N_PAST_DVL, 3], dvl).expect("fixed DVL history length"),
    )
}

pub(crate) fn batch_targets(norm: &Normalization, windows: &[&TrainingWindow]) -> Tensor {
    let data = windows.iter().flat_map(|w| norm.target(w)).collect();
    Tensor::new(&[windows.len(), 3], data).expect("three components per target")
}

/// Inference in m/s.
pub(crate) fn predict_velocities(w: &StWeights, windows: &[&TrainingWindow]) -> Result<Vec<Vec3>> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let tape = Tape::new();
    let p = Params::bind(&tape, w, false);
    let (imu, dvl) = batch_inputs(&w.norm, windows);
    let out = forward_batch(
        &p,
        &w.hyper,
        tape.constant(imu),
        tape.constant(dvl),
        false,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let out = out.value();
    Ok(windows
        .iter()
        .zip(out.data().chunks(3))
        .map(|(win, o)| w.norm.velocity(win, o))
        .collect())
}

/// Single-window forward pass in m/s.
pub fn forward<R: Rng + ?Sized>(
    window: &TrainingWindow,
    w: &StWeights,
    training: bool,
    rng: &mut R,
) -> Result<Vec3> {
    let tape = Tape::new();
    let p = Params::bind(&tape, w, false);
    let (imu, dvl) = batch_inputs(&w.norm, &[window]);
    let out = forward_batch(&p, &w.hyper, tape.constant(imu), tape.constant(dvl), training, rng)?;
    Ok(w.norm.velocity(window, out.value().data()))
}
