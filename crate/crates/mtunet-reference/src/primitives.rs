//! Loop-form reference math on plain `f64` buffers.

/// `[B, Cin, H, W] (*) [Cout, Cin, k, k]` cross-correlation with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    (b, cin, h, w): (usize, usize, usize, usize),
    wgt: &[f64],
    (cout, k): (usize, usize),
    bias: Option<&[f64]>,
    stride: usize,
    padding: usize,
    dilation: usize,
) -> (Vec<f64>, (usize, usize)) {
    let oh = (h + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    let ow = (w + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    let mut out = vec![0.0; b * cout * oh * ow];
    for bi in 0..b {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |bv| bv[co]);
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky * dilation) as isize - padding as isize;
                                let ix = (ox * stride + kx * dilation) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xi = ((bi * cin + ci) * h + iy as usize) * w + ix as usize;
                                let wi = ((co * cin + ci) * k + ky) * k + kx;
                                acc += x[xi] * wgt[wi];
                            }
                        }
                    }
                    out[((bi * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, (oh, ow))
}

/// Batch norm on `[B, C, H, W]` given explicit per-channel mean/var.
pub fn batch_norm_with_stats(
    x: &[f64],
    (b, c, h, w): (usize, usize, usize, usize),
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
    eps: f64,
) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * hw;
            for i in 0..hw {
                out[base + i] = gamma[ci] * (x[base + i] - mean[ci]) / (var[ci] + eps).sqrt()
                    + beta[ci];
            }
        }
    }
    out
}

/// Training-mode batch statistics (biased variance) per channel.
pub fn batch_stats(x: &[f64], (b, c, h, w): (usize, usize, usize, usize)) -> (Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let n = (b * hw) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ci in 0..c {
        let mut acc = 0.0;
        for bi in 0..b {
            let base = (bi * c + ci) * hw;
            for i in 0..hw {
                acc += x[base + i];
            }
        }
        mean[ci] = acc / n;
        let mut vacc = 0.0;
        for bi in 0..b {
            let base = (bi * c + ci) * hw;
            for i in 0..hw {
                vacc += (x[base + i] - mean[ci]).powi(2);
            }
        }
        var[ci] = vacc / n;
    }
    (mean, var)
}

/// Layer norm over the last axis of `[rows, c]` data.
pub fn layer_norm(x: &[f64], c: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let rows = x.len() / c;
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        let row = &x[r * c..(r + 1) * c];
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
        for k in 0..c {
            out[r * c + k] = gamma[k] * (row[k] - mean) / (var + eps).sqrt() + beta[k];
        }
    }
    out
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn gelu(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| 0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2)))
        .collect()
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect()
}

/// Softmax over contiguous rows of length `len`.
pub fn softmax_rows(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..x.len() / len {
        let row = &x[r * len..(r + 1) * len];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (o, e) in out[r * len..(r + 1) * len].iter_mut().zip(exps) {
            *o = e / total;
        }
    }
    out
}

/// `x @ w^T + b` for `x [rows, din]`, `w [dout, din]`.
pub fn linear(x: &[f64], din: usize, w: &[f64], dout: usize, b: Option<&[f64]>) -> Vec<f64> {
    let rows = x.len() / din;
    let mut out = vec![0.0; rows * dout];
    for r in 0..rows {
        for o in 0..dout {
            let mut acc = b.map_or(0.0, |bv| bv[o]);
            for i in 0..din {
                acc += x[r * din + i] * w[o * din + i];
            }
            out[r * dout + o] = acc;
        }
    }
    out
}

/// Max pooling `k x k`, stride `s`, on `[B, C, H, W]`.
pub fn max_pool2d(
    x: &[f64],
    (b, c, h, w): (usize, usize, usize, usize),
    k: usize,
    s: usize,
) -> (Vec<f64>, (usize, usize)) {
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let mut out = vec![0.0; b * c * oh * ow];
    for bc in 0..b * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..k {
                    for kx in 0..k {
                        best = best.max(x[bc * h * w + (oy * s + ky) * w + ox * s + kx]);
                    }
                }
                out[bc * oh * ow + oy * ow + ox] = best;
            }
        }
    }
    (out, (oh, ow))
}

/// Per-channel spatial mean of `[B, C, H, W]`.
pub fn global_avg_pool(x: &[f64], (b, c, h, w): (usize, usize, usize, usize)) -> Vec<f64> {
    let hw = h * w;
    (0..b * c)
        .map(|bc| x[bc * hw..(bc + 1) * hw].iter().sum::<f64>() / hw as f64)
        .collect()
}

/// Bilinear 2x upsample of `[B, C, H, W]`, half-pixel convention.
pub fn upsample_bilinear2x(
    x: &[f64],
    (b, c, h, w): (usize, usize, usize, usize),
) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let src = |o: usize, len: usize| {
        let s = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
        let lo = s.floor() as usize;
        (lo, (lo + 1).min(len - 1), s - lo as f64)
    };
    let mut out = vec![0.0; b * c * oh * ow];
    for bc in 0..b * c {
        for oy in 0..oh {
            let (y0, y1, fy) = src(oy, h);
            for ox in 0..ow {
                let (x0, x1, fx) = src(ox, w);
                out[bc * oh * ow + oy * ow + ox] = (1.0 - fy)
                    * ((1.0 - fx) * x[bc * h * w + y0 * w + x0]
                        + fx * x[bc * h * w + y0 * w + x1])
                    + fy * ((1.0 - fx) * x[bc * h * w + y1 * w + x0]
                        + fx * x[bc * h * w + y1 * w + x1]);
            }
        }
    }
    out
}
