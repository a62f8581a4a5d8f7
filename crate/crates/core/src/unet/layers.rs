//! Single-sample layer kernels over channel-major `C×H×W` buffers.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::tensor::{gemm, gemm_strided, Strides};

/// Upper bound on im2col scratch size, in elements.
const COL_TILE_ELEMS: usize = 1 << 20;

/// Same-padded, stride-1 convolution with bias.
///
/// Weights are `c_out × (c_in·k·k)` row-major, the bias follows them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Conv {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub offset: usize,
}

impl Conv {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k * self.k
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.c_out
    }

    pub fn fan_in(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn rows_per_tile(&self, w: usize) -> usize {
        (COL_TILE_ELEMS / (self.fan_in() * w).max(1)).max(1)
    }

    /// `out = conv(input)`, optionally followed by ReLU.
    pub fn forward(&self, params: &[f64], input: &[f64], h: usize, w: usize, relu: bool) -> Vec<f64> {
        let hw = h * w;
        let kk = self.fan_in();
        let (weights, bias) = self.split(params);
        let mut out = vec![0.0; self.c_out * hw];
        if self.k == 1 {
            gemm(self.c_out, kk, hw, weights, false, input, false, 0.0, &mut out, hw);
        } else {
            let rows = self.rows_per_tile(w);
            let mut col = Vec::new();
            let mut y0 = 0;
            while y0 < h {
                let y1 = (y0 + rows).min(h);
                let n = (y1 - y0) * w;
                self.im2col(input, h, w, y0, y1, &mut col);
                gemm(self.c_out, kk, n, weights, false, &col, false, 0.0, &mut out[y0 * w..], hw);
                y0 = y1;
            }
        }
        for (co, plane) in out.chunks_exact_mut(hw).enumerate() {
            let b = bias[co];
            if relu {
                plane.iter_mut().for_each(|v| *v = (*v + b).max(0.0));
            } else {
                plane.iter_mut().for_each(|v| *v += b);
            }
        }
        out
    }

    /// Accumulates parameter gradients for `d_out` (gradient w.r.t. the
    /// pre-activation output) and returns the input gradient when asked.
    pub fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        input: &[f64],
        d_out: &[f64],
        h: usize,
        w: usize,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let hw = h * w;
        let kk = self.fan_in();
        let (weights, _) = self.split(params);
        let (d_weights, d_bias) = self.split_mut(grads);
        for (co, plane) in d_out.chunks_exact(hw).enumerate() {
            d_bias[co] += plane.iter().sum::<f64>();
        }
        let mut d_input = want_input_grad.then(|| vec![0.0; self.c_in * hw]);
        let w_t = Strides::dense(kk, self.c_out, true);
        if self.k == 1 {
            gemm(self.c_out, hw, kk, d_out, false, input, true, 1.0, d_weights, kk);
            if let Some(d_in) = d_input.as_mut() {
                gemm_strided(
                    kk,
                    self.c_out,
                    hw,
                    weights,
                    w_t,
                    d_out,
                    Strides::dense(self.c_out, hw, false),
                    0.0,
                    d_in,
                    hw,
                );
            }
            return d_input;
        }
        let rows = self.rows_per_tile(w);
        let mut col = Vec::new();
        let mut d_col = Vec::new();
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + rows).min(h);
            let n = (y1 - y0) * w;
            self.im2col(input, h, w, y0, y1, &mut col);
            let d_tile = &d_out[y0 * w..];
            let tile_strides = Strides { row: hw, col: 1 };
            // dW += dY_tile · colᵀ
            gemm_strided(
                self.c_out,
                n,
                kk,
                d_tile,
                tile_strides,
                &col,
                Strides::dense(n, kk, true),
                1.0,
                d_weights,
                kk,
            );
            if let Some(d_in) = d_input.as_mut() {
                d_col.clear();
                d_col.resize(kk * n, 0.0);
                gemm_strided(kk, self.c_out, n, weights, w_t, d_tile, tile_strides, 0.0, &mut d_col, n);
                self.col2im(&d_col, h, w, y0, y1, d_in);
            }
            y0 = y1;
        }
        d_input
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let p = &params[self.offset..self.offset + self.param_len()];
        p.split_at(self.weight_len())
    }

    fn split_mut<'a>(&self, params: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let p = &mut params[self.offset..self.offset + self.param_len()];
        p.split_at_mut(self.weight_len())
    }

    /// Fills `col` with the `(c_in·k·k) × ((y1-y0)·w)` patch matrix for
    /// output rows `y0..y1`.
    fn im2col(&self, input: &[f64], h: usize, w: usize, y0: usize, y1: usize, col: &mut Vec<f64>) {
        let k = self.k;
        let pad = k / 2;
        let n = (y1 - y0) * w;
        col.clear();
        col.resize(self.fan_in() * n, 0.0);
        for ci in 0..self.c_in {
            let plane = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((ci * k + ky) * k + kx) * n..][..n];
                    let (x_lo, x_hi) = valid_range(w, kx, pad);
                    for y in y0..y1 {
                        let sy = y + ky;
                        if sy < pad || sy - pad >= h {
                            continue;
                        }
                        let src = &plane[(sy - pad) * w..(sy - pad + 1) * w];
                        let dst = &mut row[(y - y0) * w..(y - y0 + 1) * w];
                        dst[x_lo..x_hi].copy_from_slice(&src[x_lo + kx - pad..x_hi + kx - pad]);
                    }
                }
            }
        }
    }

    /// Scatter-adds a patch-matrix gradient back onto the input plane.
    fn col2im(&self, d_col: &[f64], h: usize, w: usize, y0: usize, y1: usize, d_in: &mut [f64]) {
        let k = self.k;
        let pad = k / 2;
        let n = (y1 - y0) * w;
        for ci in 0..self.c_in {
            let plane = &mut d_in[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &d_col[((ci * k + ky) * k + kx) * n..][..n];
                    let (x_lo, x_hi) = valid_range(w, kx, pad);
                    for y in y0..y1 {
                        let sy = y + ky;
                        if sy < pad || sy - pad >= h {
                            continue;
                        }
                        let dst = &mut plane[(sy - pad) * w..(sy - pad + 1) * w];
                        let src = &row[(y - y0) * w..(y - y0 + 1) * w];
                        for (d, s) in dst[x_lo + kx - pad..x_hi + kx - pad]
                            .iter_mut()
                            .zip(&src[x_lo..x_hi])
                        {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `x` for which `x + kx - pad` lies inside `0..w`.
fn valid_range(w: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (w + pad).saturating_sub(kx).min(w);
    (lo, hi.max(lo))
}

/// Transposed convolution with kernel = stride = `s`, upsampling by `s`.
///
/// Weights are `(c_out·s·s) × c_in` row-major (row `co·s·s + dy·s + dx`),
/// the bias follows them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct UpConv {
    pub c_in: usize,
    pub c_out: usize,
    pub s: usize,
    pub offset: usize,
}

impl UpConv {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.s * self.s * self.c_in
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.c_out
    }

    /// Fan-in under the Keras convention for transposed kernels
    /// (`kernel_h · kernel_w · filters`).
    pub fn fan_in(&self) -> usize {
        self.s * self.s * self.c_out
    }

    pub fn forward(&self, params: &[f64], input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let s = self.s;
        let hw = h * w;
        let rows = self.c_out * s * s;
        let (weights, bias) = params[self.offset..self.offset + self.param_len()].split_at(self.weight_len());
        let mut y = vec![0.0; rows * hw];
        gemm(rows, self.c_in, hw, weights, false, input, false, 0.0, &mut y, hw);
        let (h2, w2) = (h * s, w * s);
        let mut out = vec![0.0; self.c_out * h2 * w2];
        for co in 0..self.c_out {
            let plane = &mut out[co * h2 * w2..(co + 1) * h2 * w2];
            for dy in 0..s {
                for dx in 0..s {
                    let src = &y[((co * s + dy) * s + dx) * hw..][..hw];
                    for yy in 0..h {
                        let dst_row = (yy * s + dy) * w2;
                        for xx in 0..w {
                            plane[dst_row + xx * s + dx] = src[yy * w + xx] + bias[co];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        input: &[f64],
        d_out: &[f64],
        h: usize,
        w: usize,
    ) -> Vec<f64> {
        let s = self.s;
        let hw = h * w;
        let rows = self.c_out * s * s;
        let (h2, w2) = (h * s, w * s);
        let mut d_y = vec![0.0; rows * hw];
        let (d_weights, d_bias) =
            grads[self.offset..self.offset + self.param_len()].split_at_mut(self.weight_len());
        for co in 0..self.c_out {
            let plane = &d_out[co * h2 * w2..(co + 1) * h2 * w2];
            d_bias[co] += plane.iter().sum::<f64>();
            for dy in 0..s {
                for dx in 0..s {
                    let dst = &mut d_y[((co * s + dy) * s + dx) * hw..][..hw];
                    for yy in 0..h {
                        let src_row = (yy * s + dy) * w2;
                        for xx in 0..w {
                            dst[yy * w + xx] = plane[src_row + xx * s + dx];
                        }
                    }
                }
            }
        }
        gemm(rows, hw, self.c_in, &d_y, false, input, true, 1.0, d_weights, self.c_in);
        let weights = &params[self.offset..self.offset + self.weight_len()];
        let mut d_in = vec![0.0; self.c_in * hw];
        gemm(self.c_in, rows, hw, weights, true, &d_y, false, 0.0, &mut d_in, hw);
        d_in
    }
}

/// Non-overlapping `p×p` max pooling. Returns the pooled map and, per
/// output element, the flat input index that won.
pub(crate) fn max_pool(input: &[f64], c: usize, h: usize, w: usize, p: usize) -> (Vec<f64>, Vec<u32>) {
    let (ho, wo) = (h / p, w / p);
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..ho {
            for x in 0..wo {
                let mut best = base + y * p * w + x * p;
                for dy in 0..p {
                    for dx in 0..p {
                        let i = base + (y * p + dy) * w + x * p + dx;
                        if input[i] > input[best] {
                            best = i;
                        }
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn max_pool_backward(d_out: &[f64], argmax: &[u32], input_len: usize) -> Vec<f64> {
    let mut d_in = vec![0.0; input_len];
    for (&g, &i) in d_out.iter().zip(argmax) {
        d_in[i as usize] += g;
    }
    d_in
}

/// Inverted dropout: returns the mask (0 or `1/(1-rate)`) after applying it.
pub(crate) fn dropout(values: &mut [f64], rate: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..values.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    values.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    mask
}

/// Zeroes gradient entries whose forward activation was clipped by ReLU.
pub(crate) fn relu_backward(grad: &mut [f64], activation: &[f64]) {
    grad.iter_mut()
        .zip(activation)
        .for_each(|(g, &a)| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
}
