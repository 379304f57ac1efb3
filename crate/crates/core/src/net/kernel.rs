//! Batched forward and backward passes over small chunks of samples.
//!
//! Activations are stored unit-major: the values of one unit for every
//! sample of the chunk are contiguous. Every inner loop then runs over the
//! chunk, whatever the layer widths. Reductions over the chunk use a fixed
//! set of partial sums, so results do not depend on how chunks are
//! scheduled.

use rand::Rng;

use super::loss::focal_loss_and_logit_grad;
use super::{Layer, Layout, Standardization};

const LANES: usize = 8;

/// Per-chunk activation buffers; each holds `units x capacity` values.
pub(crate) struct Workspace {
    cap: usize,
    x: Vec<f64>,
    zf: Vec<f64>,
    af: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    m1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    m2: Vec<f64>,
    probs: Vec<f64>,
    dz3: Vec<f64>,
    da2: Vec<f64>,
    da1: Vec<f64>,
    daf: Vec<f64>,
    classes: usize,
}

impl Workspace {
    pub(crate) fn new(layout: &Layout, cap: usize) -> Self {
        let z = |w: usize| vec![0.0; cap * w];
        Workspace {
            cap,
            x: z(layout.input_width),
            zf: z(layout.fused_width()),
            af: z(layout.fused_width()),
            z1: z(layout.hidden1.outputs),
            a1: z(layout.hidden1.outputs),
            m1: z(layout.hidden1.outputs),
            z2: z(layout.hidden2.outputs),
            a2: z(layout.hidden2.outputs),
            m2: z(layout.hidden2.outputs),
            probs: z(layout.output.outputs),
            dz3: z(layout.output.outputs),
            da2: z(layout.hidden2.outputs),
            da1: z(layout.hidden1.outputs),
            daf: z(layout.fused_width()),
            classes: layout.output.outputs,
        }
    }

    /// Standardizes one raw sample into slot `b`.
    #[inline]
    pub(crate) fn load<T: Copy + Into<f64>>(&mut self, b: usize, raw: &[T], st: &Standardization) {
        for (u, ((&r, m), s)) in raw.iter().zip(&st.mean).zip(&st.std).enumerate() {
            self.x[u * self.cap + b] = (r.into() - m) / s;
        }
    }

    /// Copies the class probabilities of slot `b` into `out`.
    #[inline]
    pub(crate) fn probabilities(&self, b: usize, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.classes) {
            *o = self.probs[c * self.cap + b];
        }
    }
}

#[inline]
fn unit(buf: &[f64], cap: usize, u: usize, rows: usize) -> &[f64] {
    &buf[u * cap..u * cap + rows]
}

#[inline]
fn unit_mut(buf: &mut [f64], cap: usize, u: usize, rows: usize) -> &mut [f64] {
    &mut buf[u * cap..u * cap + rows]
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with a fixed partial-sum pattern.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    acc.iter().sum::<f64>() + s
}

#[inline]
fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let c = a.chunks_exact(LANES);
    let r: f64 = c.remainder().iter().sum();
    for x in c {
        for l in 0..LANES {
            acc[l] += x[l];
        }
    }
    acc.iter().sum::<f64>() + r
}

/// `out[out_off + j] = b[j] + sum_i W[j, i] x[x_off + i]` for every sample.
#[allow(clippy::too_many_arguments)]
#[inline]
fn affine(
    layer: &Layer,
    params: &[f64],
    x: &[f64],
    x_off: usize,
    out: &mut [f64],
    out_off: usize,
    cap: usize,
    rows: usize,
) {
    let w = &params[layer.weights()];
    let bias = &params[layer.biases()];
    for j in 0..layer.outputs {
        let o = unit_mut(out, cap, out_off + j, rows);
        o.fill(bias[j]);
        for i in 0..layer.inputs {
            axpy(o, w[j * layer.inputs + i], unit(x, cap, x_off + i, rows));
        }
    }
}

/// Accumulates `dW[j, i] += sum_b dz[j] x[i]` and `db[j] += sum_b dz[j]`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn weight_grad(
    layer: &Layer,
    dz: &[f64],
    dz_off: usize,
    x: &[f64],
    x_off: usize,
    cap: usize,
    rows: usize,
    grad: &mut [f64],
) {
    let (gw, gb) = split_grad(grad, layer);
    for j in 0..layer.outputs {
        let d = unit(dz, cap, dz_off + j, rows);
        gb[j] += sum(d);
        for i in 0..layer.inputs {
            gw[j * layer.inputs + i] += dot(d, unit(x, cap, x_off + i, rows));
        }
    }
}

/// `dx[i] = sum_j W[j, i] dz[j]`.
#[inline]
fn input_grad(layer: &Layer, params: &[f64], dz: &[f64], dx: &mut [f64], cap: usize, rows: usize) {
    let w = &params[layer.weights()];
    for i in 0..layer.inputs {
        let o = unit_mut(dx, cap, i, rows);
        o.fill(0.0);
        for j in 0..layer.outputs {
            axpy(o, w[j * layer.inputs + i], unit(dz, cap, j, rows));
        }
    }
}

#[inline]
fn leaky(z: &[f64], a: &mut [f64], slope: f64) {
    for (ai, &zi) in a.iter_mut().zip(z) {
        *ai = if zi > 0.0 { zi } else { slope * zi };
    }
}

/// Multiplies `d` by the leaky-ReLU derivative at `z`.
#[inline]
fn leaky_backward(d: &mut [f64], z: &[f64], slope: f64) {
    for (di, &zi) in d.iter_mut().zip(z) {
        if zi <= 0.0 {
            *di *= slope;
        }
    }
}

/// Applies activation, then dropout (if any) to `units` rows of a layer.
#[allow(clippy::too_many_arguments)]
fn activate<R: Rng>(
    z: &[f64],
    a: &mut [f64],
    mask: &mut [f64],
    units: usize,
    cap: usize,
    rows: usize,
    slope: f64,
    dropout: Option<(f64, &mut R)>,
) {
    for u in 0..units {
        leaky(unit(z, cap, u, rows), unit_mut(a, cap, u, rows), slope);
    }
    match dropout {
        Some((p, rng)) if p > 0.0 => {
            let keep = 1.0 / (1.0 - p);
            // A unit is dropped when a uniform 32-bit draw falls below p * 2^32.
            let cut = (p * 4_294_967_296.0) as u64;
            for u in 0..units {
                let m = unit_mut(mask, cap, u, rows);
                for v in m.iter_mut() {
                    let kept = (rng.next_u32() as u64 >= cut) as u8;
                    *v = keep * f64::from(kept);
                }
                for (ai, &mi) in unit_mut(a, cap, u, rows).iter_mut().zip(unit(mask, cap, u, rows)) {
                    *ai *= mi;
                }
            }
        }
        _ => {
            for u in 0..units {
                unit_mut(mask, cap, u, rows).fill(1.0);
            }
        }
    }
}

/// Runs the network on the first `rows` samples loaded into `ws`, leaving
/// class probabilities in the workspace. With a dropout generator the
/// hidden masks are drawn and kept for the backward pass.
pub(crate) fn forward<R: Rng>(
    layout: &Layout,
    params: &[f64],
    slope: f64,
    mut dropout: Option<(f64, &mut R)>,
    rows: usize,
    ws: &mut Workspace,
) {
    let cap = ws.cap;
    let fusion = &layout.fusion;
    for pair in 0..layout.pairs {
        affine(fusion, params, &ws.x, pair * layout.row_width, &mut ws.zf, pair * fusion.outputs, cap, rows);
    }
    for u in 0..layout.fused_width() {
        leaky(unit(&ws.zf, cap, u, rows), unit_mut(&mut ws.af, cap, u, rows), slope);
    }

    let h1 = &layout.hidden1;
    affine(h1, params, &ws.af, 0, &mut ws.z1, 0, cap, rows);
    let d1 = dropout.as_mut().map(|(p, r)| (*p, &mut **r));
    activate(&ws.z1, &mut ws.a1, &mut ws.m1, h1.outputs, cap, rows, slope, d1);

    let h2 = &layout.hidden2;
    affine(h2, params, &ws.a1, 0, &mut ws.z2, 0, cap, rows);
    activate(&ws.z2, &mut ws.a2, &mut ws.m2, h2.outputs, cap, rows, slope, dropout);

    let out = &layout.output;
    affine(out, params, &ws.a2, 0, &mut ws.probs, 0, cap, rows);
    let c = out.outputs;
    let mut row = [0.0; 8];
    for b in 0..rows {
        for (k, v) in row[..c].iter_mut().enumerate() {
            *v = ws.probs[k * cap + b];
        }
        softmax_in_place(&mut row[..c]);
        for (k, v) in row[..c].iter().enumerate() {
            ws.probs[k * cap + b] = *v;
        }
    }
}

#[inline]
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Backpropagates the focal loss of the last forward pass. Gradients are
/// scaled by `scale` (typically 1 / batch size) and added into `grad`.
/// Returns the unscaled summed loss of the chunk.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    layout: &Layout,
    params: &[f64],
    slope: f64,
    classes: &[usize],
    gamma: f64,
    scale: f64,
    ws: &mut Workspace,
    grad: &mut [f64],
) -> f64 {
    let rows = classes.len();
    let cap = ws.cap;
    let out = &layout.output;
    let h2 = &layout.hidden2;
    let h1 = &layout.hidden1;
    let fusion = &layout.fusion;
    let c = out.outputs;

    let mut loss = 0.0;
    let (mut p, mut g) = ([0.0; 8], [0.0; 8]);
    for (b, &t) in classes.iter().enumerate() {
        for (k, v) in p[..c].iter_mut().enumerate() {
            *v = ws.probs[k * cap + b];
        }
        loss += focal_loss_and_logit_grad(&p[..c], t, gamma, scale, &mut g[..c]);
        for (k, v) in g[..c].iter().enumerate() {
            ws.dz3[k * cap + b] = *v;
        }
    }

    weight_grad(out, &ws.dz3, 0, &ws.a2, 0, cap, rows, grad);
    input_grad(out, params, &ws.dz3, &mut ws.da2, cap, rows);
    for u in 0..h2.outputs {
        let d = unit_mut(&mut ws.da2, cap, u, rows);
        for (di, &mi) in d.iter_mut().zip(unit(&ws.m2, cap, u, rows)) {
            *di *= mi;
        }
        leaky_backward(d, unit(&ws.z2, cap, u, rows), slope);
    }

    weight_grad(h2, &ws.da2, 0, &ws.a1, 0, cap, rows, grad);
    input_grad(h2, params, &ws.da2, &mut ws.da1, cap, rows);
    for u in 0..h1.outputs {
        let d = unit_mut(&mut ws.da1, cap, u, rows);
        for (di, &mi) in d.iter_mut().zip(unit(&ws.m1, cap, u, rows)) {
            *di *= mi;
        }
        leaky_backward(d, unit(&ws.z1, cap, u, rows), slope);
    }

    weight_grad(h1, &ws.da1, 0, &ws.af, 0, cap, rows, grad);
    input_grad(h1, params, &ws.da1, &mut ws.daf, cap, rows);
    for u in 0..layout.fused_width() {
        leaky_backward(unit_mut(&mut ws.daf, cap, u, rows), unit(&ws.zf, cap, u, rows), slope);
    }

    // The fusion map is shared: every pair adds its contribution.
    for pair in 0..layout.pairs {
        weight_grad(
            fusion,
            &ws.daf,
            pair * fusion.outputs,
            &ws.x,
            pair * layout.row_width,
            cap,
            rows,
            grad,
        );
    }
    loss
}

fn split_grad<'g>(grad: &'g mut [f64], layer: &Layer) -> (&'g mut [f64], &'g mut [f64]) {
    let w = layer.weights();
    let b = layer.biases();
    debug_assert_eq!(w.end, b.start);
    grad[w.start..b.end].split_at_mut(w.len())
}
