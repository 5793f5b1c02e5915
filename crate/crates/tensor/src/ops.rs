use std::rc::Rc;

use rand::Rng;

use crate::tape::Var;
use crate::{Result, Tensor, TensorError};

/// Splits `shape` around `axis` into (outer, axis length, inner) element counts.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_dim(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

// c[m×n] += a[m×k] · b[k×n]
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ip * b_pj;
            }
        }
    }
}

// da[m×k] += g[m×n] · bᵀ  (b is k×n)
fn gemm_a_bt_acc(g: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let dot: f64 = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            da[i * k + p] += dot;
        }
    }
}

// db[k×n] += aᵀ · g  (a is m×k, g is m×n)
fn gemm_at_b_acc(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let db_row = &mut db[p * n..(p + 1) * n];
            for (d, &gv) in db_row.iter_mut().zip(g_row) {
                *d += a_ip * gv;
            }
        }
    }
}

/// Matrix offsets (in units of whole matrices) for each output batch entry
/// under right-aligned batch broadcasting.
struct BatchPlan {
    out_batch: Vec<usize>,
    a_idx: Vec<usize>,
    b_idx: Vec<usize>,
}

fn batch_plan(a_batch: &[usize], b_batch: &[usize]) -> Option<BatchPlan> {
    let rank = a_batch.len().max(b_batch.len());
    let pad = |s: &[usize]| -> Vec<usize> {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a_batch), pad(b_batch));
    let mut out = Vec::with_capacity(rank);
    for (&x, &y) in pa.iter().zip(&pb) {
        out.push(match (x, y) {
            _ if x == y => x,
            (1, _) => y,
            (_, 1) => x,
            _ => return None,
        });
    }
    let strides = |s: &[usize]| -> Vec<usize> {
        let mut st = vec![0; rank];
        let mut acc = 1;
        for d in (0..rank).rev() {
            st[d] = if s[d] == 1 { 0 } else { acc };
            acc *= s[d];
        }
        st
    };
    let (sa, sb) = (strides(&pa), strides(&pb));
    let total: usize = out.iter().product();
    let mut a_idx = Vec::with_capacity(total);
    let mut b_idx = Vec::with_capacity(total);
    let mut index = vec![0usize; rank];
    for _ in 0..total {
        a_idx.push(index.iter().zip(&sa).map(|(i, s)| i * s).sum());
        b_idx.push(index.iter().zip(&sb).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            index[d] += 1;
            if index[d] < out[d] {
                break;
            }
            index[d] = 0;
        }
    }
    Some(BatchPlan {
        out_batch: out,
        a_idx,
        b_idx,
    })
}

impl<'t> Var<'t> {
    fn same_shape(&self, other: Var<'t>, op: &'static str) -> Result<Vec<usize>> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(TensorError::mismatch(op, &a, &b));
        }
        Ok(a)
    }

    fn unary(self, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var<'t> {
        let x = self.value();
        let y = Rc::new(x.map(f));
        let out = (*y).clone();
        self.tape().record(
            out,
            &[self],
            Box::new(move |g| {
                let data = g
                    .data()
                    .iter()
                    .zip(x.data().iter().zip(y.data()))
                    .map(|(&gi, (&xi, &yi))| gi * df(xi, yi))
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            }),
        )
    }

    /// Batched matrix product over the last two axes. Leading (batch) axes
    /// broadcast with the usual right-aligned rules; a rank-2 operand is
    /// shared by every batch entry of the other.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(TensorError::invalid("matmul", "operands need rank >= 2"));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(TensorError::mismatch("matmul", sa, sb));
        }
        let plan = batch_plan(&sa[..sa.len() - 2], &sb[..sb.len() - 2])
            .ok_or_else(|| TensorError::mismatch("matmul", sa, sb))?;
        let batches = plan.a_idx.len();
        let mut out = vec![0.0; batches * m * n];
        for (bi, (&ia, &ib)) in plan.a_idx.iter().zip(&plan.b_idx).enumerate() {
            gemm_acc(
                &a.data()[ia * m * k..(ia + 1) * m * k],
                &b.data()[ib * k * n..(ib + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = plan.out_batch.clone();
        shape.extend([m, n]);
        let (a_shape, b_shape) = (sa.to_vec(), sb.to_vec());
        Ok(self.tape().record(
            Tensor::from_parts(shape, out),
            &[self, other],
            Box::new(move |g| {
                let mut da = vec![0.0; a.numel()];
                let mut db = vec![0.0; b.numel()];
                for (bi, (&ia, &ib)) in plan.a_idx.iter().zip(&plan.b_idx).enumerate() {
                    let gs = &g.data()[bi * m * n..(bi + 1) * m * n];
                    gemm_a_bt_acc(
                        gs,
                        &b.data()[ib * k * n..(ib + 1) * k * n],
                        &mut da[ia * m * k..(ia + 1) * m * k],
                        m,
                        k,
                        n,
                    );
                    gemm_at_b_acc(
                        &a.data()[ia * m * k..(ia + 1) * m * k],
                        gs,
                        &mut db[ib * k * n..(ib + 1) * k * n],
                        m,
                        k,
                        n,
                    );
                }
                vec![
                    Some(Tensor::from_parts(a_shape.clone(), da)),
                    Some(Tensor::from_parts(b_shape.clone(), db)),
                ]
            }),
        ))
    }

    /// One-dimensional cross-correlation (no kernel flip, no padding).
    ///
    /// `self` is `[C_in, L]` or `[B, C_in, L]`, `weight` is `[C_out, C_in, K]`.
    /// The output is `[C_out, L_out]` (or `[B, C_out, L_out]`) with
    /// `L_out = (L - K) / stride + 1`.
    pub fn conv1d(self, weight: Var<'t>, stride: usize) -> Result<Var<'t>> {
        let (x, w) = (self.value(), weight.value());
        let (xs, ws) = (x.shape().to_vec(), w.shape().to_vec());
        if stride == 0 {
            return Err(TensorError::invalid("conv1d", "stride must be >= 1"));
        }
        let (batch, c_in, len) = match xs.as_slice() {
            [c, l] => (1, *c, *l),
            [b, c, l] => (*b, *c, *l),
            _ => return Err(TensorError::invalid("conv1d", "input must be [C, L] or [B, C, L]")),
        };
        let [c_out, wc_in, kernel] = ws.as_slice() else {
            return Err(TensorError::invalid("conv1d", "weight must be [C_out, C_in, K]"));
        };
        let (c_out, kernel) = (*c_out, *kernel);
        if *wc_in != c_in {
            return Err(TensorError::mismatch("conv1d", &xs, &ws));
        }
        if kernel > len || kernel == 0 {
            return Err(TensorError::invalid(
                "conv1d",
                format!("kernel {kernel} does not fit input length {len}"),
            ));
        }
        let l_out = (len - kernel) / stride + 1;
        let mut out = vec![0.0; batch * c_out * l_out];
        for b in 0..batch {
            let xb = &x.data()[b * c_in * len..(b + 1) * c_in * len];
            for o in 0..c_out {
                for p in 0..l_out {
                    let start = p * stride;
                    let mut acc = 0.0;
                    for c in 0..c_in {
                        let wr = &w.data()[(o * c_in + c) * kernel..(o * c_in + c + 1) * kernel];
                        let xr = &xb[c * len + start..c * len + start + kernel];
                        acc += wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                    }
                    out[(b * c_out + o) * l_out + p] = acc;
                }
            }
        }
        let mut shape = if xs.len() == 3 { vec![batch] } else { Vec::new() };
        shape.extend([c_out, l_out]);
        Ok(self.tape().record(
            Tensor::from_parts(shape, out),
            &[self, weight],
            Box::new(move |g| {
                let mut dx = vec![0.0; x.numel()];
                let mut dw = vec![0.0; w.numel()];
                for b in 0..batch {
                    let xb = &x.data()[b * c_in * len..(b + 1) * c_in * len];
                    let dxb = &mut dx[b * c_in * len..(b + 1) * c_in * len];
                    for o in 0..c_out {
                        for p in 0..l_out {
                            let gv = g.data()[(b * c_out + o) * l_out + p];
                            if gv == 0.0 {
                                continue;
                            }
                            let start = p * stride;
                            for c in 0..c_in {
                                let wo = (o * c_in + c) * kernel;
                                let xo = c * len + start;
                                for t in 0..kernel {
                                    dw[wo + t] += gv * xb[xo + t];
                                    dxb[xo + t] += gv * w.data()[wo + t];
                                }
                            }
                        }
                    }
                }
                vec![
                    Some(Tensor::from_parts(xs.clone(), dx)),
                    Some(Tensor::from_parts(ws.clone(), dw)),
                ]
            }),
        ))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let shape = self.same_shape(other, "add")?;
        let (a, b) = (self.value(), other.value());
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        Ok(self.tape().record(
            Tensor::from_parts(shape, data),
            &[self, other],
            Box::new(|g| vec![Some(g.clone()), Some(g.clone())]),
        ))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let shape = self.same_shape(other, "sub")?;
        let (a, b) = (self.value(), other.value());
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        Ok(self.tape().record(
            Tensor::from_parts(shape, data),
            &[self, other],
            Box::new(|g| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        ))
    }

    /// Adds a vector `bias` of length `n` to every row of `self = [..., n]`.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (x, b) = (self.value(), bias.value());
        let n = last_dim(x.shape());
        if b.shape() != [n] {
            return Err(TensorError::mismatch("add_bias", x.shape(), b.shape()));
        }
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + b.data()[i % n])
            .collect();
        Ok(self.tape().record(
            Tensor::from_parts(x.shape().to_vec(), data),
            &[self, bias],
            Box::new(move |g| {
                let mut db = vec![0.0; n];
                for (i, v) in g.data().iter().enumerate() {
                    db[i % n] += v;
                }
                vec![Some(g.clone()), Some(Tensor::from_parts(vec![n], db))]
            }),
        ))
    }

    pub fn scale(self, factor: f64) -> Var<'t> {
        let x = self.value();
        self.tape().record(
            x.map(|v| v * factor),
            &[self],
            Box::new(move |g| vec![Some(g.map(|v| v * factor))]),
        )
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Numerically stable softmax along the last axis.
    pub fn softmax(self) -> Var<'t> {
        let x = self.value();
        let n = last_dim(x.shape());
        let mut y = vec![0.0; x.numel()];
        for (xr, yr) in x.data().chunks(n).zip(y.chunks_mut(n)) {
            let max = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (yv, xv) in yr.iter_mut().zip(xr) {
                *yv = (xv - max).exp();
                total += *yv;
            }
            yr.iter_mut().for_each(|v| *v /= total);
        }
        let y = Rc::new(Tensor::from_parts(x.shape().to_vec(), y));
        let out = (*y).clone();
        self.tape().record(
            out,
            &[self],
            Box::new(move |g| {
                let mut dx = vec![0.0; y.numel()];
                for ((gr, yr), dr) in g.data().chunks(n).zip(y.data().chunks(n)).zip(dx.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, gv), yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = yv * (gv - dot);
                    }
                }
                vec![Some(Tensor::from_parts(y.shape().to_vec(), dx))]
            }),
        )
    }

    /// Per-row normalization over the last axis followed by the affine map
    /// `gain * x_hat + offset`. Variance is the biased (population) estimate.
    pub fn layer_norm(self, gain: Var<'t>, offset: Var<'t>, eps: f64) -> Result<Var<'t>> {
        let (x, gm, bt) = (self.value(), gain.value(), offset.value());
        let n = last_dim(x.shape());
        if gm.shape() != [n] || bt.shape() != [n] {
            return Err(TensorError::mismatch("layer_norm", x.shape(), gm.shape()));
        }
        let rows = x.numel() / n.max(1);
        let mut x_hat = vec![0.0; x.numel()];
        let mut inv_std = vec![0.0; rows];
        for (r, (xr, hr)) in x.data().chunks(n).zip(x_hat.chunks_mut(n)).enumerate() {
            let mean = xr.iter().sum::<f64>() / n as f64;
            let var = xr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for (h, v) in hr.iter_mut().zip(xr) {
                *h = (v - mean) * is;
            }
        }
        let out = x_hat
            .iter()
            .enumerate()
            .map(|(i, h)| h * gm.data()[i % n] + bt.data()[i % n])
            .collect();
        let shape = x.shape().to_vec();
        Ok(self.tape().record(
            Tensor::from_parts(shape.clone(), out),
            &[self, gain, offset],
            Box::new(move |g| {
                let mut dx = vec![0.0; x_hat.len()];
                let mut dgain = vec![0.0; n];
                let mut doffset = vec![0.0; n];
                for r in 0..rows {
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let hr = &x_hat[r * n..(r + 1) * n];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..n {
                        dgain[j] += gr[j] * hr[j];
                        doffset[j] += gr[j];
                        let dh = gr[j] * gm.data()[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh /= n as f64;
                    mean_dh_h /= n as f64;
                    for j in 0..n {
                        let dh = gr[j] * gm.data()[j];
                        dx[r * n + j] = inv_std[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
                vec![
                    Some(Tensor::from_parts(shape.clone(), dx)),
                    Some(Tensor::from_parts(vec![n], dgain)),
                    Some(Tensor::from_parts(vec![n], doffset)),
                ]
            }),
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`. Identity
    /// otherwise.
    pub fn dropout<R: Rng + ?Sized>(self, p: f64, training: bool, rng: &mut R) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::invalid("dropout", format!("p = {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(self);
        }
        let x = self.value();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = x.shape().to_vec();
        Ok(self.tape().record(
            Tensor::from_parts(shape.clone(), data),
            &[self],
            Box::new(move |g| {
                let d = g.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                vec![Some(Tensor::from_parts(shape.clone(), d))]
            }),
        ))
    }

    /// Concatenation along `axis`; all other axes must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::invalid("concat", "no inputs"))?;
        let tape = first.tape();
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(TensorError::invalid("concat", format!("axis {axis} out of range")));
        }
        let mut widths = Vec::with_capacity(values.len());
        for v in &values {
            let s = v.shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(TensorError::mismatch("concat", &base, s));
            }
            widths.push(s[axis]);
        }
        let (outer, _, inner) = split_at_axis(&base, axis);
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, w) in values.iter().zip(&widths) {
                data.extend_from_slice(&v.data()[o * w * inner..(o + 1) * w * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        Ok(tape.record(
            Tensor::from_parts(shape, data),
            parts,
            Box::new(move |g| {
                let mut grads: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(outer * w * inner)).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (gv, w) in grads.iter_mut().zip(&widths) {
                        gv.extend_from_slice(&g.data()[pos..pos + w * inner]);
                        pos += w * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(&shapes)
                    .map(|(d, s)| Some(Tensor::from_parts(s.clone(), d)))
                    .collect()
            }),
        ))
    }

    /// Sub-range `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(TensorError::invalid(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, dim, inner) = split_at_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        Ok(self.tape().record(
            Tensor::from_parts(out_shape, data),
            &[self],
            Box::new(move |g| {
                let mut dx = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    let base = o * dim * inner + start * inner;
                    dx[base..base + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(Tensor::from_parts(shape.clone(), dx))]
            }),
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(self) -> Result<Var<'t>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let r = shape.len();
        if r < 2 {
            return Err(TensorError::invalid("transpose", "rank must be >= 2"));
        }
        let (m, n) = (shape[r - 2], shape[r - 1]);
        let swap = move |src: &[f64], rows: usize, cols: usize| -> Vec<f64> {
            let mut dst = vec![0.0; src.len()];
            for (sb, db) in src.chunks(rows * cols).zip(dst.chunks_mut(rows * cols)) {
                for i in 0..rows {
                    for j in 0..cols {
                        db[j * rows + i] = sb[i * cols + j];
                    }
                }
            }
            dst
        };
        let mut out_shape = shape.clone();
        out_shape.swap(r - 2, r - 1);
        Ok(self.tape().record(
            Tensor::from_parts(out_shape, swap(x.data(), m, n)),
            &[self],
            Box::new(move |g| vec![Some(Tensor::from_parts(shape.clone(), swap(g.data(), n, m)))]),
        ))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let target = x.reshape(shape)?;
        let original = x.shape().to_vec();
        Ok(self.tape().record(
            target,
            &[self],
            Box::new(move |g| vec![Some(Tensor::from_parts(original.clone(), g.data().to_vec()))]),
        ))
    }

    /// Repeats `self` along a new leading batch axis of size `batch`.
    pub fn expand_batch(self, batch: usize) -> Var<'t> {
        let x = self.value();
        let n = x.numel();
        let mut data = Vec::with_capacity(batch * n);
        for _ in 0..batch {
            data.extend_from_slice(x.data());
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(x.shape());
        let original = x.shape().to_vec();
        self.tape().record(
            Tensor::from_parts(shape, data),
            &[self],
            Box::new(move |g| {
                let mut dx = vec![0.0; n];
                for chunk in g.data().chunks(n.max(1)) {
                    for (d, v) in dx.iter_mut().zip(chunk) {
                        *d += v;
                    }
                }
                vec![Some(Tensor::from_parts(original.clone(), dx))]
            }),
        )
    }

    pub fn sum(self) -> Var<'t> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.tape().record(
            Tensor::scalar(x.data().iter().sum()),
            &[self],
            Box::new(move |g| vec![Some(Tensor::full(&shape, g.data()[0]))]),
        )
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Mean over all elements of `(self - target)^2`.
    pub fn mse_loss(self, target: Var<'t>) -> Result<Var<'t>> {
        let diff = self.sub(target)?;
        let d = diff.value();
        let n = d.numel() as f64;
        let loss = d.data().iter().map(|v| v * v).sum::<f64>() / n;
        Ok(self.tape().record(
            Tensor::scalar(loss),
            &[diff],
            Box::new(move |g| {
                let s = 2.0 * g.data()[0] / n;
                vec![Some(d.map(|v| v * s))]
            }),
        ))
    }
}
