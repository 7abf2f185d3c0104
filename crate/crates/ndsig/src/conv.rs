//! Convolution kernels. Stride-1 paths work on a zero-padded copy of the
//! input and accumulate output tiles in registers; strided convolution uses
//! a plain loop.

use crate::tensor::{dot, Tensor1D};

const TILE: usize = 32;

/// Channel-major copy with `pad` zeros in front and enough zeros behind for
/// a full tile read past the last position.
fn pad_channels(data: &[f64], channels: usize, len: usize, pad: usize, kernel: usize) -> (Vec<f64>, usize) {
    let pl = len + kernel - 1 + TILE;
    let mut out = vec![0.0; channels * pl];
    for c in 0..channels {
        out[c * pl + pad..c * pl + pad + len].copy_from_slice(&data[c * len..(c + 1) * len]);
    }
    (out, pl)
}

/// `out[o][t] += Σ_i Σ_k w[o][i][k] · xp[i][t + k]` for `t < len`, where
/// `out` already holds the initial values.
fn correlate_padded(
    xp: &[f64],
    pl: usize,
    cin: usize,
    len: usize,
    w: &[f64],
    cout: usize,
    kernel: usize,
    out: &mut [f64],
) {
    for o in 0..cout {
        let orow = &mut out[o * len..(o + 1) * len];
        let mut t0 = 0;
        while t0 < len {
            let tn = TILE.min(len - t0);
            let mut acc = [0.0f64; TILE];
            acc[..tn].copy_from_slice(&orow[t0..t0 + tn]);
            for i in 0..cin {
                let xr = &xp[i * pl + t0..i * pl + t0 + kernel - 1 + TILE];
                let wr = &w[(o * cin + i) * kernel..(o * cin + i + 1) * kernel];
                for (k, &wk) in wr.iter().enumerate() {
                    let xs = &xr[k..k + TILE];
                    for j in 0..TILE {
                        acc[j] += wk * xs[j];
                    }
                }
            }
            orow[t0..t0 + tn].copy_from_slice(&acc[..tn]);
            t0 += TILE;
        }
    }
}

/// Same-padded convolution; output length `ceil(len / stride)`.
pub(crate) fn conv_forward(x: &Tensor1D, w: &[f64], b: &[f64], kernel: usize, stride: usize) -> Tensor1D {
    let (cin, len) = x.shape();
    let cout = b.len();
    let pad = kernel / 2;
    let out_len = len.div_ceil(stride);
    let mut out = vec![0.0; cout * out_len];
    for o in 0..cout {
        out[o * out_len..(o + 1) * out_len].fill(b[o]);
    }
    if stride == 1 {
        let (xp, pl) = pad_channels(x.data(), cin, len, pad, kernel);
        correlate_padded(&xp, pl, cin, len, w, cout, kernel, &mut out);
    } else {
        for o in 0..cout {
            for i in 0..cin {
                let xr = x.channel(i);
                for k in 0..kernel {
                    let wk = w[(o * cin + i) * kernel + k];
                    for t in valid_outputs(k, stride, pad, len, out_len) {
                        out[o * out_len + t] += wk * xr[t * stride + k - pad];
                    }
                }
            }
        }
    }
    Tensor1D::new(cout, out_len, out).expect("conv output shape")
}

/// Output positions `t` whose source index `t·stride + k − pad` lies in
/// `[0, len)`.
#[inline]
fn valid_outputs(k: usize, stride: usize, pad: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if len + pad > k { ((len + pad - k - 1) / stride + 1).min(out_len) } else { 0 };
    lo..hi.max(lo)
}

fn grad_weight_block<const K: usize>(g: &[f64], xp: &[f64], len: usize) -> [f64; K] {
    let mut acc = [[0.0f64; 8]; K];
    let full = len / 8 * 8;
    let mut t = 0;
    while t < full {
        let gs = &g[t..t + 8];
        for (k, a) in acc.iter_mut().enumerate() {
            let xs = &xp[t + k..t + k + 8];
            for l in 0..8 {
                a[l] += gs[l] * xs[l];
            }
        }
        t += 8;
    }
    let mut out = [0.0; K];
    for k in 0..K {
        let a = &acc[k];
        let mut tail = 0.0;
        for tt in full..len {
            tail += g[tt] * xp[tt + k];
        }
        out[k] = ((a[0] + a[4]) + (a[1] + a[5])) + ((a[2] + a[6]) + (a[3] + a[7])) + tail;
    }
    out
}

pub(crate) fn conv_grad_weight(
    x: &Tensor1D,
    gy: &[f64],
    out_len: usize,
    kernel: usize,
    stride: usize,
    gw: &mut [f64],
) {
    let (cin, len) = x.shape();
    let cout = gy.len() / out_len;
    let pad = kernel / 2;
    if stride == 1 {
        let (xp, pl) = pad_channels(x.data(), cin, len, pad, kernel);
        for o in 0..cout {
            let g = &gy[o * len..(o + 1) * len];
            for i in 0..cin {
                let xr = &xp[i * pl..(i + 1) * pl];
                let dst = &mut gw[(o * cin + i) * kernel..(o * cin + i + 1) * kernel];
                if kernel == 7 {
                    for (d, v) in dst.iter_mut().zip(grad_weight_block::<7>(g, xr, len)) {
                        *d += v;
                    }
                } else {
                    for (k, d) in dst.iter_mut().enumerate() {
                        *d += dot(g, &xr[k..k + len]);
                    }
                }
            }
        }
    } else {
        for o in 0..cout {
            let g = &gy[o * out_len..(o + 1) * out_len];
            for i in 0..cin {
                let xr = x.channel(i);
                for k in 0..kernel {
                    let mut acc = 0.0;
                    for t in valid_outputs(k, stride, pad, len, out_len) {
                        acc += g[t] * xr[t * stride + k - pad];
                    }
                    gw[(o * cin + i) * kernel + k] += acc;
                }
            }
        }
    }
}

pub(crate) fn conv_grad_input(
    (cin, len): (usize, usize),
    w: &Tensor1D,
    gy: &[f64],
    out_len: usize,
    kernel: usize,
    stride: usize,
    gx: &mut [f64],
) {
    let cout = w.channels();
    let wd = w.data();
    let pad = kernel / 2;
    if stride == 1 {
        // Correlation of the padded output gradient with the transposed,
        // flipped kernel.
        let mut wt = vec![0.0; cin * cout * kernel];
        for o in 0..cout {
            for i in 0..cin {
                for k in 0..kernel {
                    wt[(i * cout + o) * kernel + (kernel - 1 - k)] = wd[(o * cin + i) * kernel + k];
                }
            }
        }
        let (gp, pl) = pad_channels(gy, cout, len, pad, kernel);
        correlate_padded(&gp, pl, cout, len, &wt, cin, kernel, gx);
    } else {
        for o in 0..cout {
            let g = &gy[o * out_len..(o + 1) * out_len];
            for i in 0..cin {
                for k in 0..kernel {
                    let wk = wd[(o * cin + i) * kernel + k];
                    for t in valid_outputs(k, stride, pad, len, out_len) {
                        gx[i * len + t * stride + k - pad] += wk * g[t];
                    }
                }
            }
        }
    }
}
