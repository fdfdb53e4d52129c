//! Forward pass and exact backpropagation through time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{LstmOffsets, ModelParams};
use crate::ctc::{ctc_loss_grad_logits, LabelSequence};
use crate::error::{Error, Result};
use crate::lattice::{ProbLattice, NUM_CLASSES};

const LN_EPS: f64 = 1e-5;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out += M x` for row-major `M` (`out.len()` rows).
fn gemv_acc(out: &mut [f64], m: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += M^T v` for row-major `M` with `v.len()` rows.
fn gemv_t_acc(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = out.len();
    for (&vr, row) in v.iter().zip(m.chunks_exact(cols)) {
        if vr != 0.0 {
            axpy(out, vr, row);
        }
    }
}

/// `G += v x^T`.
fn outer_acc(g: &mut [f64], v: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&vr, row) in v.iter().zip(g.chunks_exact_mut(cols)) {
        if vr != 0.0 {
            axpy(row, vr, x);
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_finite(values: &[f64], layer: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: layer() })
    }
}

#[derive(Clone, Debug)]
struct DirCache {
    /// Activated gates `i, f, g, o` per frame, `T x 4H`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    dirs: [DirCache; 2],
    /// Output after dropout, `T x 2H`; input to the next stage.
    out: Vec<f64>,
    mask: Option<Vec<f64>>,
}

/// Intermediate activations kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    frames: usize,
    layers: Vec<LayerCache>,
    dense_pre: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    dense_out: Vec<f64>,
    dense_mask: Option<Vec<f64>>,
    probs: Vec<f64>,
}

impl ForwardCache {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn lattice(&self) -> ProbLattice {
        ProbLattice::from_raw_unchecked(self.frames, self.probs.clone())
    }
}

fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

fn run_direction(
    p: &[f64],
    o: LstmOffsets,
    in_dim: usize,
    hid: usize,
    x: &[f64],
    frames: usize,
    reverse: bool,
) -> DirCache {
    let g4 = 4 * hid;
    let w = &p[o.w..o.w + g4 * in_dim];
    let u = &p[o.u..o.u + g4 * hid];
    let b = &p[o.b..o.b + g4];

    let mut z = vec![0.0; frames * g4];
    for t in 0..frames {
        let zt = &mut z[t * g4..(t + 1) * g4];
        zt.copy_from_slice(b);
        let xt = &x[t * in_dim..(t + 1) * in_dim];
        let nnz = xt.iter().filter(|&&v| v != 0.0).count();
        if nnz * 4 < in_dim {
            // sparse (one-hot) input: gather columns
            for (k, &v) in xt.iter().enumerate() {
                if v != 0.0 {
                    for (r, zr) in zt.iter_mut().enumerate() {
                        *zr += w[r * in_dim + k] * v;
                    }
                }
            }
        } else {
            gemv_acc(zt, w, xt);
        }
    }

    let mut cache = DirCache {
        gates: vec![0.0; frames * g4],
        c: vec![0.0; frames * hid],
        tanh_c: vec![0.0; frames * hid],
        h: vec![0.0; frames * hid],
    };
    let zeros = vec![0.0; hid];
    let mut prev: Option<usize> = None;
    for step in 0..frames {
        let t = if reverse { frames - 1 - step } else { step };
        let zt = &mut z[t * g4..(t + 1) * g4];
        let (h_prev, c_prev) = match prev {
            Some(tp) => (
                cache.h[tp * hid..(tp + 1) * hid].to_vec(),
                cache.c[tp * hid..(tp + 1) * hid].to_vec(),
            ),
            None => (zeros.clone(), zeros.clone()),
        };
        gemv_acc(zt, u, &h_prev);
        let gates = &mut cache.gates[t * g4..(t + 1) * g4];
        for j in 0..hid {
            let i = sigmoid(zt[j]);
            let f = sigmoid(zt[hid + j]);
            let g = zt[2 * hid + j].tanh();
            let og = sigmoid(zt[3 * hid + j]);
            gates[j] = i;
            gates[hid + j] = f;
            gates[2 * hid + j] = g;
            gates[3 * hid + j] = og;
            let c = f * c_prev[j] + i * g;
            let tc = c.tanh();
            cache.c[t * hid + j] = c;
            cache.tanh_c[t * hid + j] = tc;
            cache.h[t * hid + j] = og * tc;
        }
        prev = Some(t);
    }
    cache
}

#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    p: &[f64],
    o: LstmOffsets,
    in_dim: usize,
    hid: usize,
    x: &[f64],
    frames: usize,
    reverse: bool,
    cache: &DirCache,
    dh_out: &[f64],
    grad: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let g4 = 4 * hid;
    let w = &p[o.w..o.w + g4 * in_dim];
    let u = &p[o.u..o.u + g4 * hid];
    let zeros = vec![0.0; hid];
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    let mut dz = vec![0.0; g4];

    for step in 0..frames {
        // walk the recurrence backwards
        let t = if reverse { step } else { frames - 1 - step };
        let tp = if reverse {
            (t + 1 < frames).then_some(t + 1)
        } else {
            t.checked_sub(1)
        };
        let (h_prev, c_prev) = match tp {
            Some(tp) => (
                &cache.h[tp * hid..(tp + 1) * hid],
                &cache.c[tp * hid..(tp + 1) * hid],
            ),
            None => (&zeros[..], &zeros[..]),
        };
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        for j in 0..hid {
            let (i, f, g, og) = (gates[j], gates[hid + j], gates[2 * hid + j], gates[3 * hid + j]);
            let tc = cache.tanh_c[t * hid + j];
            let dh = dh_out[t * hid + j] + dh_next[j];
            let d_o = dh * tc;
            let dc = dc_next[j] + dh * og * (1.0 - tc * tc);
            dc_next[j] = dc * f;
            dz[j] = dc * g * i * (1.0 - i);
            dz[hid + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * hid + j] = dc * i * (1.0 - g * g);
            dz[3 * hid + j] = d_o * og * (1.0 - og);
        }
        axpy(&mut grad[o.b..o.b + g4], 1.0, &dz);
        outer_acc(&mut grad[o.u..o.u + g4 * hid], &dz, h_prev);
        dh_next.fill(0.0);
        gemv_t_acc(&mut dh_next, u, &dz);

        let xt = &x[t * in_dim..(t + 1) * in_dim];
        let gw = &mut grad[o.w..o.w + g4 * in_dim];
        for (k, &v) in xt.iter().enumerate() {
            if v != 0.0 {
                for (r, &d) in dz.iter().enumerate() {
                    gw[r * in_dim + k] += d * v;
                }
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            gemv_t_acc(&mut dx[t * in_dim..(t + 1) * in_dim], w, &dz);
        }
    }
}

impl ModelParams {
    fn check_input(&self, input: &[f64], frames: usize) -> Result<()> {
        let want = frames * self.config().input_dim;
        if frames == 0 || input.len() != want {
            return Err(Error::ShapeMismatch {
                what: "model input".into(),
                expected: format!("{frames} x {}", self.config().input_dim),
                actual: format!("{} values", input.len()),
            });
        }
        Ok(())
    }

    /// Runs the network. With `dropout` set, masks are drawn from that
    /// stream (training mode); otherwise dropout is the identity.
    pub fn forward_cached(
        &self,
        input: &[f64],
        frames: usize,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache> {
        self.check_input(input, frames)?;
        let cfg = *self.config();
        let p = self.as_slice();
        let off = &self.offsets;
        let hid = cfg.hidden_dim;
        let rate = cfg.dropout_rate;

        let mut layers: Vec<LayerCache> = Vec::with_capacity(cfg.lstm_layers);
        for layer in 0..cfg.lstm_layers {
            let in_dim = cfg.layer_input(layer);
            let x: &[f64] = if layer == 0 { input } else { &layers[layer - 1].out };
            let fwd = run_direction(p, off.lstm[layer][0], in_dim, hid, x, frames, false);
            let bwd = run_direction(p, off.lstm[layer][1], in_dim, hid, x, frames, true);
            let mut out = vec![0.0; frames * 2 * hid];
            for t in 0..frames {
                out[t * 2 * hid..t * 2 * hid + hid].copy_from_slice(&fwd.h[t * hid..(t + 1) * hid]);
                out[t * 2 * hid + hid..(t + 1) * 2 * hid].copy_from_slice(&bwd.h[t * hid..(t + 1) * hid]);
            }
            check_finite(&out, || format!("lstm layer {layer}"))?;
            let mask = match dropout.as_deref_mut() {
                Some(rng) if rate > 0.0 => {
                    let m = dropout_mask(out.len(), rate, rng);
                    for (v, k) in out.iter_mut().zip(&m) {
                        *v *= k;
                    }
                    Some(m)
                }
                _ => None,
            };
            layers.push(LayerCache {
                dirs: [fwd, bwd],
                out,
                mask,
            });
        }

        let d = cfg.dense_dim;
        let top = &layers[cfg.lstm_layers - 1].out;
        let wd = &p[off.dense_w..off.dense_w + d * 2 * hid];
        let bd = &p[off.dense_b..off.dense_b + d];
        let gain = &p[off.ln_gain..off.ln_gain + d];
        let beta = &p[off.ln_bias..off.ln_bias + d];
        let mut dense_pre = vec![0.0; frames * d];
        let mut xhat = vec![0.0; frames * d];
        let mut inv_std = vec![0.0; frames];
        let mut dense_out = vec![0.0; frames * d];
        for t in 0..frames {
            let a = &mut dense_pre[t * d..(t + 1) * d];
            a.copy_from_slice(bd);
            gemv_acc(a, wd, &top[t * 2 * hid..(t + 1) * 2 * hid]);
            let mean = a.iter().map(|&v| v.max(0.0)).sum::<f64>() / d as f64;
            let var = a.iter().map(|&v| (v.max(0.0) - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[t] = inv;
            for j in 0..d {
                let xh = (a[j].max(0.0) - mean) * inv;
                xhat[t * d + j] = xh;
                dense_out[t * d + j] = gain[j] * xh + beta[j];
            }
        }
        check_finite(&dense_out, || "dense block".to_string())?;
        let dense_mask = match dropout {
            Some(rng) if rate > 0.0 => {
                let m = dropout_mask(dense_out.len(), rate, rng);
                for (v, k) in dense_out.iter_mut().zip(&m) {
                    *v *= k;
                }
                Some(m)
            }
            _ => None,
        };

        let wo = &p[off.out_w..off.out_w + NUM_CLASSES * d];
        let bo = &p[off.out_b..off.out_b + NUM_CLASSES];
        let mut probs = vec![0.0; frames * NUM_CLASSES];
        for t in 0..frames {
            let row = &mut probs[t * NUM_CLASSES..(t + 1) * NUM_CLASSES];
            row.copy_from_slice(bo);
            gemv_acc(row, wo, &dense_out[t * d..(t + 1) * d]);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        check_finite(&probs, || "output projection".to_string())?;

        Ok(ForwardCache {
            frames,
            layers,
            dense_pre,
            xhat,
            inv_std,
            dense_out,
            dense_mask,
            probs,
        })
    }

    /// Output lattice for a `frames x input_dim` row-major input.
    pub fn forward(&self, input: &[f64], frames: usize, dropout: Option<&mut ChaCha8Rng>) -> Result<ProbLattice> {
        Ok(self.forward_cached(input, frames, dropout)?.lattice())
    }

    /// Adds the CTC gradient of one sample to `grad` and returns its loss.
    /// Weight decay is not included.
    pub fn accumulate_gradient(
        &self,
        input: &[f64],
        cache: &ForwardCache,
        target: &LabelSequence,
        grad: &mut [f64],
    ) -> Result<f64> {
        let frames = cache.frames;
        let (loss, dlogits) = ctc_loss_grad_logits(&cache.probs, frames, target)?;
        self.backprop(input, cache, &dlogits, grad);
        Ok(loss)
    }

    /// Backpropagates `dlogits` (`T x 27`, gradient w.r.t. pre-softmax
    /// outputs) into `grad`.
    pub(crate) fn backprop(&self, input: &[f64], cache: &ForwardCache, dlogits: &[f64], grad: &mut [f64]) {
        let cfg = *self.config();
        let p = self.as_slice();
        let off = &self.offsets;
        let frames = cache.frames;
        let hid = cfg.hidden_dim;
        let d = cfg.dense_dim;
        let h2 = 2 * hid;

        let wo = &p[off.out_w..off.out_w + NUM_CLASSES * d];
        let wd = &p[off.dense_w..off.dense_w + d * h2];
        let gain = &p[off.ln_gain..off.ln_gain + d];
        let top = &cache.layers[cfg.lstm_layers - 1].out;

        let mut d_top = vec![0.0; frames * h2];
        let mut dy = vec![0.0; d];
        let mut da = vec![0.0; d];
        for t in 0..frames {
            let dl = &dlogits[t * NUM_CLASSES..(t + 1) * NUM_CLASSES];
            let y = &cache.dense_out[t * d..(t + 1) * d];
            axpy(&mut grad[off.out_b..off.out_b + NUM_CLASSES], 1.0, dl);
            outer_acc(&mut grad[off.out_w..off.out_w + NUM_CLASSES * d], dl, y);
            dy.fill(0.0);
            gemv_t_acc(&mut dy, wo, dl);
            if let Some(m) = &cache.dense_mask {
                for (v, k) in dy.iter_mut().zip(&m[t * d..(t + 1) * d]) {
                    *v *= k;
                }
            }
            let xh = &cache.xhat[t * d..(t + 1) * d];
            let mut mean_dx = 0.0;
            let mut mean_dx_xh = 0.0;
            for j in 0..d {
                grad[off.ln_gain + j] += dy[j] * xh[j];
                grad[off.ln_bias + j] += dy[j];
                let dxh = dy[j] * gain[j];
                da[j] = dxh;
                mean_dx += dxh;
                mean_dx_xh += dxh * xh[j];
            }
            mean_dx /= d as f64;
            mean_dx_xh /= d as f64;
            let inv = cache.inv_std[t];
            let pre = &cache.dense_pre[t * d..(t + 1) * d];
            for j in 0..d {
                let dr = inv * (da[j] - mean_dx - xh[j] * mean_dx_xh);
                da[j] = if pre[j] > 0.0 { dr } else { 0.0 };
            }
            axpy(&mut grad[off.dense_b..off.dense_b + d], 1.0, &da);
            outer_acc(&mut grad[off.dense_w..off.dense_w + d * h2], &da, &top[t * h2..(t + 1) * h2]);
            gemv_t_acc(&mut d_top[t * h2..(t + 1) * h2], wd, &da);
        }

        let mut d_out = d_top;
        for layer in (0..cfg.lstm_layers).rev() {
            let lc = &cache.layers[layer];
            if let Some(m) = &lc.mask {
                for (v, k) in d_out.iter_mut().zip(m) {
                    *v *= k;
                }
            }
            let mut dh = [vec![0.0; frames * hid], vec![0.0; frames * hid]];
            for t in 0..frames {
                dh[0][t * hid..(t + 1) * hid].copy_from_slice(&d_out[t * h2..t * h2 + hid]);
                dh[1][t * hid..(t + 1) * hid].copy_from_slice(&d_out[t * h2 + hid..(t + 1) * h2]);
            }
            let in_dim = cfg.layer_input(layer);
            let x: &[f64] = if layer == 0 { input } else { &cache.layers[layer - 1].out };
            let mut dx = if layer > 0 { Some(vec![0.0; frames * in_dim]) } else { None };
            for (dir, dh_dir) in dh.iter().enumerate() {
                backprop_direction(
                    p,
                    off.lstm[layer][dir],
                    in_dim,
                    hid,
                    x,
                    frames,
                    dir == 1,
                    &lc.dirs[dir],
                    dh_dir,
                    grad,
                    dx.as_deref_mut(),
                );
            }
            if let Some(dx) = dx {
                d_out = dx;
            }
        }
    }

    /// CTC loss plus `weight_decay * |θ|² / 2` and its exact gradient, with
    /// dropout disabled.
    pub fn loss_and_gradient(
        &self,
        input: &[f64],
        frames: usize,
        target: &LabelSequence,
        weight_decay: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let cache = self.forward_cached(input, frames, None)?;
        let mut grad = self.zeros_like();
        let mut loss = self.accumulate_gradient(input, &cache, target, &mut grad)?;
        if weight_decay > 0.0 {
            loss += 0.5 * weight_decay * self.squared_norm();
            axpy(&mut grad, weight_decay, self.as_slice());
        }
        Ok((loss, grad))
    }

    /// CTC loss alone (no weight decay), dropout disabled.
    pub fn loss(&self, input: &[f64], frames: usize, target: &LabelSequence) -> Result<f64> {
        let lattice = self.forward(input, frames, None)?;
        crate::ctc::ctc_loss(&lattice, target)
    }
}
