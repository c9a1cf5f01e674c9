//! Layer primitives with hand-written backward passes. Every
//! differentiable op here is covered by central finite-difference checks
//! in the tests.

use crate::activations::Activation;
use crate::filters::Kernel;
use crate::nn::tensor::Tensor;
use crate::{Error, Result};

/// Cross-correlation with zero padding `k/2` ("same" geometry before
/// striding). Weights are [out_ch, in_ch, k, k].
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &[f64], stride: usize) -> Result<Tensor> {
    let [n, ci, h, width] = x.shape;
    let [co, wci, k, k2] = w.shape;
    if wci != ci || k != k2 {
        return Err(Error::Shape(format!(
            "conv weights {:?} incompatible with input {:?}",
            w.shape, x.shape
        )));
    }
    if b.len() != co {
        return Err(Error::Shape("bias length != out channels".into()));
    }
    let geom = ConvGeom::new(ci, h, width, k, stride);
    let (ho, wo, howo, kk) = (geom.ho, geom.wo, geom.howo, geom.kk);
    let mut out = Tensor::zeros([n, co, ho, wo]);
    let mut patches = vec![0.0; kk * howo];
    for ni in 0..n {
        geom.im2col(x.sample_slice(ni), &mut patches);
        for oc in 0..co {
            let wrow = &w.data[oc * kk..(oc + 1) * kk];
            let orow = out.plane_mut(ni, oc);
            orow.fill(b[oc]);
            // out[oc] = bias + sum_j w[oc][j] * patches[j]; each term is a
            // contiguous scaled add over the whole output plane
            for (j, &wv) in wrow.iter().enumerate() {
                let prow = &patches[j * howo..(j + 1) * howo];
                for (o, pv) in orow.iter_mut().zip(prow) {
                    *o += wv * pv;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients for [`conv2d_forward`]: input, weight and bias gradients.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Vec<f64>) {
    let [n, ci, h, width] = x.shape;
    let [co, _, k, _] = w.shape;
    let [gn, gco, _, _] = grad_out.shape;
    debug_assert_eq!((gn, gco), (n, co));
    let geom = ConvGeom::new(ci, h, width, k, stride);
    let (howo, kk) = (geom.howo, geom.kk);
    let mut gx = Tensor::zeros(x.shape);
    let mut gw = Tensor::zeros(w.shape);
    let mut gb = vec![0.0; co];
    let mut patches = vec![0.0; kk * howo];
    let mut gpatches = vec![0.0; kk * howo];
    for ni in 0..n {
        geom.im2col(x.sample_slice(ni), &mut patches);
        gpatches.fill(0.0);
        for oc in 0..co {
            let grow = grad_out.plane(ni, oc);
            gb[oc] += grow.iter().sum::<f64>();
            let gwrow = &mut gw.data[oc * kk..(oc + 1) * kk];
            let wrow = &w.data[oc * kk..(oc + 1) * kk];
            for j in 0..kk {
                let prow = &patches[j * howo..(j + 1) * howo];
                let gprow = &mut gpatches[j * howo..(j + 1) * howo];
                let wv = wrow[j];
                // fused: gw[oc][j] += <grad, patch_j>, four-way split so
                // the reduction does not serialize, and
                // gpatch_j += w[oc][j] * grad
                let mut acc = [0.0f64; 4];
                let chunks = howo / 4 * 4;
                let mut i = 0;
                while i < chunks {
                    acc[0] += grow[i] * prow[i];
                    acc[1] += grow[i + 1] * prow[i + 1];
                    acc[2] += grow[i + 2] * prow[i + 2];
                    acc[3] += grow[i + 3] * prow[i + 3];
                    gprow[i] += grow[i] * wv;
                    gprow[i + 1] += grow[i + 1] * wv;
                    gprow[i + 2] += grow[i + 2] * wv;
                    gprow[i + 3] += grow[i + 3] * wv;
                    i += 4;
                }
                while i < howo {
                    acc[0] += grow[i] * prow[i];
                    gprow[i] += grow[i] * wv;
                    i += 1;
                }
                gwrow[j] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
            }
        }
        geom.col2im_add(&gpatches, gx.sample_slice_mut(ni));
    }
    (gx, gw, gb)
}

/// Patch-matrix geometry shared by the conv passes: row `j = (ic*k+ky)*k+kx`
/// of the patch matrix holds, for every output position, the input value
/// under kernel tap (ic, ky, kx), zero where the tap falls in padding.
struct ConvGeom {
    ci: usize,
    h: usize,
    width: usize,
    k: usize,
    stride: usize,
    p: usize,
    ho: usize,
    wo: usize,
    howo: usize,
    kk: usize,
}

impl ConvGeom {
    fn new(ci: usize, h: usize, width: usize, k: usize, stride: usize) -> ConvGeom {
        let p = k / 2;
        let ho = (h + 2 * p - k) / stride + 1;
        let wo = (width + 2 * p - k) / stride + 1;
        ConvGeom {
            ci,
            h,
            width,
            k,
            stride,
            p,
            ho,
            wo,
            howo: ho * wo,
            kk: ci * k * k,
        }
    }

    fn im2col(&self, sample: &[f64], patches: &mut [f64]) {
        patches.fill(0.0);
        let (k, s, p) = (self.k, self.stride, self.p);
        for ic in 0..self.ci {
            let plane = &sample[ic * self.h * self.width..(ic + 1) * self.h * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let j = (ic * k + ky) * k + kx;
                    let off = kx as isize - p as isize;
                    let (lo, hi) = ox_range(off, s, self.width, self.wo);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..self.ho {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let xrow = &plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        let dst = &mut patches[j * self.howo + oy * self.wo..][lo..hi];
                        let shift = ((lo * s) as isize + off) as usize;
                        if s == 1 {
                            dst.copy_from_slice(&xrow[shift..shift + dst.len()]);
                        } else {
                            for (i, d) in dst.iter_mut().enumerate() {
                                *d = xrow[shift + i * s];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatter-add patch rows back onto
    /// the input layout.
    fn col2im_add(&self, patches: &[f64], sample: &mut [f64]) {
        let (k, s, p) = (self.k, self.stride, self.p);
        for ic in 0..self.ci {
            let plane = &mut sample[ic * self.h * self.width..(ic + 1) * self.h * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let j = (ic * k + ky) * k + kx;
                    let off = kx as isize - p as isize;
                    let (lo, hi) = ox_range(off, s, self.width, self.wo);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..self.ho {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &patches[j * self.howo + oy * self.wo..][lo..hi];
                        let xrow =
                            &mut plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        let shift = ((lo * s) as isize + off) as usize;
                        if s == 1 {
                            for (xv, sv) in xrow[shift..shift + src.len()].iter_mut().zip(src) {
                                *xv += sv;
                            }
                        } else {
                            for (i, sv) in src.iter().enumerate() {
                                xrow[shift + i * s] += sv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `ox` for which `ox*stride + off` lands inside `[0, width)`.
#[inline]
fn ox_range(off: isize, stride: usize, width: usize, wo: usize) -> (usize, usize) {
    let lo = if off < 0 {
        ((-off) as usize + stride - 1) / stride
    } else {
        0
    };
    let max_ix = width as isize - 1 - off;
    let hi = if max_ix < 0 {
        0
    } else {
        (max_ix as usize / stride + 1).min(wo)
    };
    (lo.min(hi), hi)
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize) - 2;
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// 1-D blur + subsample along the last axis of a row-major plane,
/// reflect padding. `rows` independent signals of length `len`.
fn axis_blur_down(src: &[f64], rows: usize, len: usize, taps: &[f64], stride: usize) -> Vec<f64> {
    let c = taps.len() / 2;
    let out_len = (len + stride - 1) / stride;
    let mut out = vec![0.0; rows * out_len];
    for r in 0..rows {
        let row = &src[r * len..(r + 1) * len];
        let orow = &mut out[r * out_len..(r + 1) * out_len];
        for (oi, o) in orow.iter_mut().enumerate() {
            let base = (oi * stride) as isize - c as isize;
            let mut acc = 0.0;
            for (t, &tap) in taps.iter().enumerate() {
                acc += tap * row[reflect(base + t as isize, len)];
            }
            *o = acc;
        }
    }
    out
}

/// Exact adjoint of [`axis_blur_down`].
fn axis_blur_down_adjoint(
    grad: &[f64],
    rows: usize,
    len: usize,
    taps: &[f64],
    stride: usize,
) -> Vec<f64> {
    let c = taps.len() / 2;
    let out_len = (len + stride - 1) / stride;
    let mut gx = vec![0.0; rows * len];
    for r in 0..rows {
        let grow = &grad[r * out_len..(r + 1) * out_len];
        let xrow = &mut gx[r * len..(r + 1) * len];
        for (oi, &g) in grow.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let base = (oi * stride) as isize - c as isize;
            for (t, &tap) in taps.iter().enumerate() {
                xrow[reflect(base + t as isize, len)] += tap * g;
            }
        }
    }
    gx
}

fn transpose_plane(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Fixed anti-aliasing layer: per-channel separable blur (reflect
/// padding) followed by subsampling. No trainable parameters.
pub fn blur_forward(x: &Tensor, kern: &Kernel, stride: usize) -> Tensor {
    let [n, c, h, w] = x.shape;
    let taps = kern.taps();
    let ho = (h + stride - 1) / stride;
    let wo = (w + stride - 1) / stride;
    let mut out = Tensor::zeros([n, c, ho, wo]);
    for ni in 0..n {
        for ci in 0..c {
            // width pass, then height pass on the transposed plane
            let wpass = axis_blur_down(x.plane(ni, ci), h, w, taps, stride);
            let t = transpose_plane(&wpass, h, wo);
            let hpass = axis_blur_down(&t, wo, h, taps, stride);
            let plane = transpose_plane(&hpass, wo, ho);
            out.plane_mut(ni, ci).copy_from_slice(&plane);
        }
    }
    out
}

/// Input gradient for [`blur_forward`]: the transpose operator
/// (upsample-then-correlate through the same reflected index map).
pub fn blur_backward(x_shape: [usize; 4], kern: &Kernel, stride: usize, grad_out: &Tensor) -> Tensor {
    let [n, c, h, w] = x_shape;
    let taps = kern.taps();
    let ho = (h + stride - 1) / stride;
    let wo = (w + stride - 1) / stride;
    let mut gx = Tensor::zeros(x_shape);
    for ni in 0..n {
        for ci in 0..c {
            let plane = grad_out.plane(ni, ci);
            let hpass = transpose_plane(plane, ho, wo);
            let gh = axis_blur_down_adjoint(&hpass, wo, h, taps, stride);
            let t = transpose_plane(&gh, wo, h);
            let gw = axis_blur_down_adjoint(&t, h, w, taps, stride);
            gx.plane_mut(ni, ci).copy_from_slice(&gw);
        }
    }
    gx
}

pub struct PoolCache {
    /// Flat input index of the winning element per output position.
    pub argmax: Vec<usize>,
    pub in_shape: [usize; 4],
}

/// Max pooling with padding `k/2`; padded positions never win.
pub fn maxpool_forward(x: &Tensor, k: usize, stride: usize) -> (Tensor, PoolCache) {
    let [n, c, h, w] = x.shape;
    let p = k / 2;
    let ho = (h + 2 * p - k) / stride + 1;
    let wo = (w + 2 * p - k) / stride + 1;
    let mut out = Tensor::zeros([n, c, ho, wo]);
    let mut argmax = vec![0usize; n * c * ho * wo];
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = x.idx(ni, ci, iy as usize, ix as usize);
                            if x.data[xi] > best {
                                best = x.data[xi];
                                best_idx = xi;
                            }
                        }
                    }
                    let o = out.idx(ni, ci, oy, ox);
                    out.data[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    (
        out,
        PoolCache {
            argmax,
            in_shape: x.shape,
        },
    )
}

pub fn maxpool_backward(cache: &PoolCache, grad_out: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros(cache.in_shape);
    for (o, &src) in cache.argmax.iter().enumerate() {
        gx.data[src] += grad_out.data[o];
    }
    gx
}

const NORM_EPS: f64 = 1e-5;

pub struct NormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Per-sample, per-channel standardization over the spatial extent with a
/// learned affine. Plays the role batch norm does at scale while staying
/// linear per-channel for the graph lint.
pub fn norm_forward(x: &Tensor, gamma: &[f64], beta: &[f64]) -> (Tensor, NormCache) {
    let [n, c, h, w] = x.shape;
    let m = (h * w) as f64;
    let mut out = Tensor::zeros(x.shape);
    let mut normalized = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; n * c];
    for ni in 0..n {
        for ci in 0..c {
            let plane = x.plane(ni, ci);
            let mean = plane.iter().sum::<f64>() / m;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let istd = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[ni * c + ci] = istd;
            let hw = h * w;
            let start = (ni * c + ci) * hw;
            for (i, &v) in plane.iter().enumerate() {
                let z = (v - mean) * istd;
                normalized[start + i] = z;
                out.data[start + i] = gamma[ci] * z + beta[ci];
            }
        }
    }
    (out, NormCache { normalized, inv_std })
}

pub fn norm_backward(
    x: &Tensor,
    gamma: &[f64],
    cache: &NormCache,
    grad_out: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let [n, c, h, w] = x.shape;
    let m = (h * w) as f64;
    let hw = h * w;
    let mut gx = Tensor::zeros(x.shape);
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    for ni in 0..n {
        for ci in 0..c {
            let start = (ni * c + ci) * hw;
            let z = &cache.normalized[start..start + hw];
            let go = &grad_out.data[start..start + hw];
            let istd = cache.inv_std[ni * c + ci];
            let sum_go: f64 = go.iter().sum();
            let sum_go_z: f64 = go.iter().zip(z).map(|(g, zz)| g * zz).sum();
            for i in 0..hw {
                ggamma[ci] += go[i] * z[i];
                gbeta[ci] += go[i];
                gx.data[start + i] =
                    gamma[ci] * istd * (go[i] - sum_go / m - z[i] * sum_go_z / m);
            }
        }
    }
    (gx, ggamma, gbeta)
}

pub fn activation_forward(x: &Tensor, a: Activation) -> Tensor {
    Tensor {
        shape: x.shape,
        data: x.data.iter().map(|&v| a.forward(v)).collect(),
    }
}

pub fn activation_backward(x: &Tensor, a: Activation, grad_out: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape,
        data: x
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&v, &g)| a.derivative(v) * g)
            .collect(),
    }
}

pub fn global_avg_pool_forward(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape;
    let m = (h * w) as f64;
    let mut out = Tensor::zeros([n, c, 1, 1]);
    for ni in 0..n {
        for ci in 0..c {
            out.data[ni * c + ci] = x.plane(ni, ci).iter().sum::<f64>() / m;
        }
    }
    out
}

pub fn global_avg_pool_backward(in_shape: [usize; 4], grad_out: &Tensor) -> Tensor {
    let [n, c, h, w] = in_shape;
    let m = (h * w) as f64;
    let mut gx = Tensor::zeros(in_shape);
    for ni in 0..n {
        for ci in 0..c {
            let g = grad_out.data[ni * c + ci] / m;
            for v in gx.plane_mut(ni, ci) {
                *v = g;
            }
        }
    }
    gx
}

/// Fully connected head on [n, c, 1, 1] features. Weights are [out, in]
/// row-major.
pub fn linear_forward(x: &Tensor, w: &[f64], b: &[f64], out_features: usize) -> Result<Tensor> {
    let [n, c, h, width] = x.shape;
    if h != 1 || width != 1 {
        return Err(Error::Shape("linear expects [n, c, 1, 1] input".into()));
    }
    if w.len() != out_features * c {
        return Err(Error::Shape("linear weight size mismatch".into()));
    }
    let mut out = Tensor::zeros([n, out_features, 1, 1]);
    for ni in 0..n {
        let xi = &x.data[ni * c..(ni + 1) * c];
        for o in 0..out_features {
            let row = &w[o * c..(o + 1) * c];
            out.data[ni * out_features + o] =
                b[o] + row.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(out)
}

pub fn linear_backward(
    x: &Tensor,
    w: &[f64],
    grad_out: &Tensor,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let [n, c, _, _] = x.shape;
    let out_features = grad_out.shape[1];
    let mut gx = Tensor::zeros(x.shape);
    let mut gw = vec![0.0; out_features * c];
    let mut gb = vec![0.0; out_features];
    for ni in 0..n {
        let xi = &x.data[ni * c..(ni + 1) * c];
        for o in 0..out_features {
            let g = grad_out.data[ni * out_features + o];
            gb[o] += g;
            for ci in 0..c {
                gw[o * c + ci] += g * xi[ci];
                gx.data[ni * c + ci] += g * w[o * c + ci];
            }
        }
    }
    (gx, gw, gb)
}

/// Mean softmax cross-entropy over the batch, with the gradient w.r.t.
/// the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [n, k, h, w] = logits.shape;
    if h != 1 || w != 1 {
        return Err(Error::Shape("logits must be [n, k, 1, 1]".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape("label count != batch size".into()));
    }
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.shape);
    for ni in 0..n {
        let row = &logits.data[ni * k..(ni + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let label = labels[ni];
        if label >= k {
            return Err(Error::invalid(format!("label {label} out of range")));
        }
        loss += -(exps[label] / sum).ln();
        for ci in 0..k {
            grad.data[ni * k + ci] =
                (exps[ci] / sum - if ci == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

pub fn predict_classes(logits: &Tensor) -> Vec<usize> {
    let [n, k, _, _] = logits.shape;
    (0..n)
        .map(|ni| {
            let row = &logits.data[ni * k..(ni + 1) * k];
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        let data = (0..shape.iter().product())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    /// Central finite differences of a scalar-valued function of one
    /// flat parameter vector.
    fn finite_diff(f: &mut dyn FnMut(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
        let mut grad = vec![0.0; theta.len()];
        let mut t = theta.to_vec();
        for i in 0..theta.len() {
            t[i] = theta[i] + h;
            let up = f(&t);
            t[i] = theta[i] - h;
            let down = f(&t);
            t[i] = theta[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        grad
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_1x1_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_tensor([2, 3, 5, 5], &mut rng);
        // identity mapping: w[oc][ic] = delta(oc, ic)
        let mut w = Tensor::zeros([3, 3, 1, 1]);
        for i in 0..3 {
            w.data[i * 3 + i] = 1.0;
        }
        let y = conv2d_forward(&x, &w, &[0.0; 3], 1).unwrap();
        assert_eq!(x.data, y.data);
    }

    #[test]
    fn conv_shapes() {
        let x = Tensor::zeros([1, 1, 32, 32]);
        let w = Tensor::zeros([16, 1, 7, 7]);
        let y = conv2d_forward(&x, &w, &vec![0.0; 16], 2).unwrap();
        assert_eq!(y.shape, [1, 16, 16, 16]);
        let bad = Tensor::zeros([4, 2, 3, 3]);
        assert!(conv2d_forward(&x, &bad, &[0.0; 4], 1).is_err());
    }

    #[test]
    fn strided_binomial_conv_equals_blur_subsample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor([1, 1, 8, 8], &mut rng);
        let kern = Kernel::binomial(3).unwrap().normalized();
        let w = Tensor::from_vec([1, 1, 3, 3], kern.outer2d()).unwrap();
        let conv = conv2d_forward(&x, &w, &[0.0], 2).unwrap();
        let img = crate::spectral::Image2d::new(8, 8, x.data.clone()).unwrap();
        let blurred = crate::filters::blur_subsample_2d(&img, &kern, 2).unwrap();
        // interiors match exactly; borders differ between zero and
        // reflect padding
        for y in 1..3 {
            for xpos in 1..3 {
                let a = conv.at(0, 0, y, xpos);
                let b = blurred.at(y, xpos);
                assert!((a - b).abs() < 1e-12, "({y},{xpos}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor([2, 3, 8, 8], &mut rng);
        let w = rand_tensor([4, 3, 3, 3], &mut rng);
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
        for stride in [1usize, 2] {
            let y = conv2d_forward(&x, &w, &b, stride).unwrap();
            // loss = sum of outputs weighted by fixed coefficients
            let coef: Vec<f64> = (0..y.numel()).map(|i| ((i % 7) as f64 - 3.0) / 3.0).collect();
            let grad_out = Tensor::from_vec(y.shape, coef.clone()).unwrap();
            let (gx, gw, gb) = conv2d_backward(&x, &w, stride, &grad_out);

            let loss_for = |xv: &[f64], wv: &[f64], bv: &[f64]| {
                let xt = Tensor::from_vec(x.shape, xv.to_vec()).unwrap();
                let wt = Tensor::from_vec(w.shape, wv.to_vec()).unwrap();
                let y = conv2d_forward(&xt, &wt, bv, stride).unwrap();
                y.data.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>()
            };
            // the loss is linear in every argument, so central differences
            // carry no truncation error and a large step just divides the
            // floating-point noise down
            let fd_x = finite_diff(&mut |t| loss_for(t, &w.data, &b), &x.data, 1e-3);
            let fd_w = finite_diff(&mut |t| loss_for(&x.data, t, &b), &w.data, 1e-3);
            let fd_b = finite_diff(&mut |t| loss_for(&x.data, &w.data, t), &b, 1e-3);
            assert!(max_rel_err(&gx.data, &fd_x) < 1e-7, "stride {stride} input grad");
            assert!(max_rel_err(&gw.data, &fd_w) < 1e-7, "stride {stride} weight grad");
            assert!(max_rel_err(&gb, &fd_b) < 1e-7, "stride {stride} bias grad");
        }
    }

    #[test]
    fn blur_matches_filters_module() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor([1, 2, 8, 8], &mut rng);
        let kern = Kernel::binomial(5).unwrap().normalized();
        let y = blur_forward(&x, &kern, 2);
        for c in 0..2 {
            let img = crate::spectral::Image2d::new(8, 8, x.plane(0, c).to_vec()).unwrap();
            let expected = crate::filters::blur_subsample_2d(&img, &kern, 2).unwrap();
            for (a, b) in y.plane(0, c).iter().zip(&expected.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blur_dc_gain_is_one() {
        let x = Tensor::from_vec([1, 1, 8, 8], vec![3.25; 64]).unwrap();
        let kern = Kernel::binomial(3).unwrap().normalized();
        let y = blur_forward(&x, &kern, 2);
        for v in &y.data {
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_backward_is_exact_adjoint() {
        // <A x, y> == <x, A^T y> for random x, y
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kern = Kernel::binomial(5).unwrap().normalized();
        for stride in [1usize, 2, 3] {
            let x = rand_tensor([1, 2, 9, 7], &mut rng);
            let ax = blur_forward(&x, &kern, stride);
            let y = rand_tensor(ax.shape, &mut rng);
            let aty = blur_backward(x.shape, &kern, stride, &y);
            let lhs: f64 = ax.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data.iter().zip(&aty.data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "stride {stride}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn blur_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor([1, 1, 8, 8], &mut rng);
        let kern = Kernel::binomial(3).unwrap().normalized();
        let y = blur_forward(&x, &kern, 2);
        let coef: Vec<f64> = (0..y.numel()).map(|i| (i as f64).sin()).collect();
        let grad_out = Tensor::from_vec(y.shape, coef.clone()).unwrap();
        let gx = blur_backward(x.shape, &kern, 2, &grad_out);
        let fd = finite_diff(
            &mut |t| {
                let xt = Tensor::from_vec(x.shape, t.to_vec()).unwrap();
                blur_forward(&xt, &kern, 2)
                    .data
                    .iter()
                    .zip(&coef)
                    .map(|(a, c)| a * c)
                    .sum()
            },
            &x.data,
            1e-6,
        );
        assert!(max_rel_err(&gx.data, &fd) < 1e-7);
    }

    #[test]
    fn maxpool_gradient_routes_to_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_tensor([2, 2, 8, 8], &mut rng);
        let (y, cache) = maxpool_forward(&x, 3, 2);
        assert_eq!(y.shape, [2, 2, 4, 4]);
        let coef: Vec<f64> = (0..y.numel()).map(|i| 0.1 * i as f64 - 1.0).collect();
        let grad_out = Tensor::from_vec(y.shape, coef.clone()).unwrap();
        let gx = maxpool_backward(&cache, &grad_out);
        let fd = finite_diff(
            &mut |t| {
                let xt = Tensor::from_vec(x.shape, t.to_vec()).unwrap();
                let (y, _) = maxpool_forward(&xt, 3, 2);
                y.data.iter().zip(&coef).map(|(a, c)| a * c).sum()
            },
            &x.data,
            1e-7,
        );
        assert!(max_rel_err(&gx.data, &fd) < 1e-4);
    }

    #[test]
    fn norm_standardizes_and_backprops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_tensor([2, 3, 4, 4], &mut rng);
        let gamma: Vec<f64> = (0..3).map(|_| rng.gen_range(0.5..1.5)).collect();
        let beta: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let (y, cache) = norm_forward(&x, &gamma, &beta);
        for ni in 0..2 {
            for ci in 0..3 {
                let plane = y.plane(ni, ci);
                let mean = plane.iter().sum::<f64>() / 16.0;
                assert!((mean - beta[ci]).abs() < 1e-9);
            }
        }
        let coef: Vec<f64> = (0..y.numel()).map(|i| ((i * 13) % 9) as f64 / 9.0 - 0.5).collect();
        let grad_out = Tensor::from_vec(y.shape, coef.clone()).unwrap();
        let (gx, ggamma, gbeta) = norm_backward(&x, &gamma, &cache, &grad_out);
        let loss_for = |xv: &[f64], gv: &[f64], bv: &[f64]| {
            let xt = Tensor::from_vec(x.shape, xv.to_vec()).unwrap();
            let (y, _) = norm_forward(&xt, gv, bv);
            y.data.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>()
        };
        let fd_x = finite_diff(&mut |t| loss_for(t, &gamma, &beta), &x.data, 1e-6);
        let fd_g = finite_diff(&mut |t| loss_for(&x.data, t, &beta), &gamma, 1e-6);
        let fd_b = finite_diff(&mut |t| loss_for(&x.data, &gamma, t), &beta, 1e-6);
        assert!(max_rel_err(&gx.data, &fd_x) < 1e-6);
        assert!(max_rel_err(&ggamma, &fd_g) < 1e-7);
        assert!(max_rel_err(&gbeta, &fd_b) < 1e-7);
    }

    #[test]
    fn linear_and_gap_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = rand_tensor([2, 6, 1, 1], &mut rng);
        let w: Vec<f64> = (0..4 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let y = linear_forward(&x, &w, &b, 4).unwrap();
        let coef: Vec<f64> = (0..y.numel()).map(|i| i as f64 * 0.3 - 1.0).collect();
        let grad_out = Tensor::from_vec(y.shape, coef.clone()).unwrap();
        let (gx, gw, gb) = linear_backward(&x, &w, &grad_out);
        let loss_for = |xv: &[f64], wv: &[f64], bv: &[f64]| {
            let xt = Tensor::from_vec(x.shape, xv.to_vec()).unwrap();
            let y = linear_forward(&xt, wv, bv, 4).unwrap();
            y.data.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>()
        };
        assert!(max_rel_err(&gx.data, &finite_diff(&mut |t| loss_for(t, &w, &b), &x.data, 1e-6)) < 1e-7);
        assert!(max_rel_err(&gw, &finite_diff(&mut |t| loss_for(&x.data, t, &b), &w, 1e-6)) < 1e-7);
        assert!(max_rel_err(&gb, &finite_diff(&mut |t| loss_for(&x.data, &w, t), &b, 1e-6)) < 1e-7);

        let feat = rand_tensor([2, 3, 4, 4], &mut rng);
        let pooled = global_avg_pool_forward(&feat);
        assert_eq!(pooled.shape, [2, 3, 1, 1]);
        let coef: Vec<f64> = (0..pooled.numel()).map(|i| i as f64).collect();
        let grad_out = Tensor::from_vec(pooled.shape, coef.clone()).unwrap();
        let gx = global_avg_pool_backward(feat.shape, &grad_out);
        let fd = finite_diff(
            &mut |t| {
                let xt = Tensor::from_vec(feat.shape, t.to_vec()).unwrap();
                global_avg_pool_forward(&xt)
                    .data
                    .iter()
                    .zip(&coef)
                    .map(|(a, c)| a * c)
                    .sum()
            },
            &feat.data,
            1e-6,
        );
        assert!(max_rel_err(&gx.data, &fd) < 1e-7);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let logits = Tensor::zeros([4, 10, 1, 1]);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3, 5, 9]).unwrap();
        assert!((loss - 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = rand_tensor([3, 5, 1, 1], &mut rng);
        let labels = [1usize, 4, 0];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let fd = finite_diff(
            &mut |t| {
                let lt = Tensor::from_vec(logits.shape, t.to_vec()).unwrap();
                softmax_cross_entropy(&lt, &labels).unwrap().0
            },
            &logits.data,
            1e-6,
        );
        assert!(max_rel_err(&grad.data, &fd) < 1e-7);
    }

    #[test]
    fn activation_backward_through_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = rand_tensor([1, 2, 4, 4], &mut rng);
        for a in [Activation::Gelu, Activation::swish()] {
            let y = activation_forward(&x, a);
            let coef: Vec<f64> = (0..y.numel()).map(|i| (i as f64 * 0.7).cos()).collect();
            let grad_out = Tensor::from_vec(y.shape, coef.clone()).unwrap();
            let gx = activation_backward(&x, a, &grad_out);
            let fd = finite_diff(
                &mut |t| {
                    let xt = Tensor::from_vec(x.shape, t.to_vec()).unwrap();
                    activation_forward(&xt, a)
                        .data
                        .iter()
                        .zip(&coef)
                        .map(|(v, c)| v * c)
                        .sum()
                },
                &x.data,
                1e-6,
            );
            assert!(max_rel_err(&gx.data, &fd) < 1e-7);
        }
    }
}
