//! Convolution, batch normalization, pooling, and interpolation tape ops.
//!
//! Convolutions run as one dgemm per call in the pixels-major form
//! `OutT[B*Ho*Wo, Cout] = ColT[B*Ho*Wo, K] * W^T[K, Cout]`, which is much
//! faster than the channel-major form for the narrow layers used here. The
//! column matrix is rebuilt in backward instead of being kept on the tape.

use super::{BackwardCtx, Op, Tape, Var};
use crate::error::{Error, Result};

/// Epsilon inside the batch-norm denominator.
pub const BN_EPS: f64 = 1e-5;
/// Momentum of the running-statistics update in train mode.
pub const BN_MOMENTUM: f64 = 0.1;

/// Running mean/variance state of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStat {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStat {
    pub fn new(channels: usize) -> Self {
        RunningStat {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Output extent of a 1-D convolution: floor((h + 2p - d(k-1) - 1)/s) + 1.
pub fn conv2d_out_dim(h: usize, padding: usize, dilation: usize, k: usize, stride: usize) -> Option<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = h + 2 * padding;
    if padded < span {
        return None;
    }
    Some((padded - span) / stride + 1)
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
            c.as_mut_ptr(), rsc, csc,
        );
    }
}

/// Build the pixels-major column matrix: row = (b,oh,ow), col = (ci,kh,kw).
#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &[f64],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let kk = k * k;
    let kdim = cin * kk;
    let mut col = vec![0.0; batch * ho * wo * kdim];
    for b in 0..batch {
        for oh in 0..ho {
            let ih0 = (oh * stride) as isize - padding as isize;
            for ow in 0..wo {
                let iw0 = (ow * stride) as isize - padding as isize;
                let row = ((b * ho + oh) * wo + ow) * kdim;
                for ci in 0..cin {
                    let in_plane = ((b * cin + ci) * h) as isize;
                    let col_base = row + ci * kk;
                    for kh in 0..k {
                        let ih = ih0 + (kh * dilation) as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let in_row = ((in_plane + ih) * w as isize) as usize;
                        let dst = col_base + kh * k;
                        for kw in 0..k {
                            let iw = iw0 + (kw * dilation) as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            col[dst + kw] = input[in_row + iw as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add the column-matrix gradient back onto the input gradient.
#[allow(clippy::too_many_arguments)]
fn col2im_add(
    dcol: &[f64],
    dinput: &mut [f64],
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
    ho: usize,
    wo: usize,
) {
    let kk = k * k;
    let kdim = cin * kk;
    for b in 0..batch {
        for oh in 0..ho {
            let ih0 = (oh * stride) as isize - padding as isize;
            for ow in 0..wo {
                let iw0 = (ow * stride) as isize - padding as isize;
                let row = ((b * ho + oh) * wo + ow) * kdim;
                for ci in 0..cin {
                    let in_plane = ((b * cin + ci) * h) as isize;
                    let col_base = row + ci * kk;
                    for kh in 0..k {
                        let ih = ih0 + (kh * dilation) as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let in_row = ((in_plane + ih) * w as isize) as usize;
                        let src = col_base + kh * k;
                        for kw in 0..k {
                            let iw = iw0 + (kw * dilation) as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            dinput[in_row + iw as usize] += dcol[src + kw];
                        }
                    }
                }
            }
        }
    }
}

impl Tape {
    /// 2-D convolution with square odd kernel, zero padding and dilation.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Var> {
        let (b, cin, h, w) = self.dims4(input, "conv2d")?;
        let ws = self.shape(weight);
        if ws.len() != 4 || ws[2] != ws[3] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: "weight [Cout,Cin,k,k]".into(),
                got: format!("{ws:?}"),
            });
        }
        let (cout, wcin, k) = (ws[0], ws[1], ws[2]);
        if k % 2 == 0 {
            return Err(Error::InvalidArgument {
                op: "conv2d",
                message: format!("even kernel size {k} is not supported"),
            });
        }
        if wcin != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: format!("weight Cin = {cin}"),
                got: format!("weight Cin = {wcin}"),
            });
        }
        if self.shape(bias) != [cout] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                expected: format!("bias [{cout}]"),
                got: format!("{:?}", self.shape(bias)),
            });
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::InvalidArgument {
                op: "conv2d",
                message: "stride and dilation must be >= 1".into(),
            });
        }
        let ho = conv2d_out_dim(h, padding, dilation, k, stride).ok_or(Error::InvalidArgument {
            op: "conv2d",
            message: format!("kernel span exceeds padded input ({h}x{w}, k={k}, d={dilation}, p={padding})"),
        })?;
        let wo = conv2d_out_dim(w, padding, dilation, k, stride).unwrap();

        let kdim = cin * k * k;
        let rows = b * ho * wo;
        let col = im2col(self.data(input), b, cin, h, w, k, stride, padding, dilation, ho, wo);
        let mut out_t = vec![0.0; rows * cout];
        gemm(
            rows, kdim, cout,
            &col, kdim as isize, 1,
            self.data(weight), 1, kdim as isize,
            0.0,
            &mut out_t, cout as isize, 1,
        );

        let bias_d = self.data(bias);
        let mut out = vec![0.0; b * cout * ho * wo];
        for bi in 0..b {
            for co in 0..cout {
                let add = bias_d[co];
                let dst = ((bi * cout + co) * ho) * wo;
                for p in 0..ho * wo {
                    out[dst + p] = out_t[((bi * ho * wo) + p) * cout + co] + add;
                }
            }
        }

        let rg = self.requires(input) || self.requires(weight) || self.requires(bias);
        Ok(self.push(
            out,
            vec![b, cout, ho, wo],
            rg,
            Op::Conv2d { input, weight, bias, stride, padding, dilation },
        ))
    }

    /// Batch normalization over [B,C,H,W]. In train mode the batch statistics
    /// normalize and `state` is updated; in eval mode `state` is read only.
    pub fn batchnorm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        train: bool,
        state: &mut RunningStat,
    ) -> Result<Var> {
        self.batchnorm2d_impl(input, gamma, beta, train, Some(state), None)
    }

    /// Eval-mode batch normalization against read-only running statistics.
    pub fn batchnorm2d_eval(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        state: &RunningStat,
    ) -> Result<Var> {
        self.batchnorm2d_impl(input, gamma, beta, false, None, Some(state))
    }

    fn batchnorm2d_impl(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        train: bool,
        state_mut: Option<&mut RunningStat>,
        state_ref: Option<&RunningStat>,
    ) -> Result<Var> {
        let (b, c, h, w) = self.dims4(input, "batchnorm2d")?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::ShapeMismatch {
                op: "batchnorm2d",
                expected: format!("gamma/beta [{c}]"),
                got: format!("{:?}/{:?}", self.shape(gamma), self.shape(beta)),
            });
        }
        let state_len = state_mut
            .as_ref()
            .map(|s| s.mean.len())
            .or_else(|| state_ref.map(|s| s.mean.len()))
            .expect("one state access is always supplied");
        if state_len != c {
            return Err(Error::ShapeMismatch {
                op: "batchnorm2d",
                expected: format!("running state for {c} channels"),
                got: format!("{state_len}"),
            });
        }
        let n = b * h * w;
        if train && n < 2 {
            return Err(Error::InvalidArgument {
                op: "batchnorm2d",
                message: format!("train mode needs B*H*W >= 2, got {n}"),
            });
        }

        let plane = h * w;
        let xs = self.data(input);
        let (mut mean, mut invstd) = (vec![0.0; c], vec![0.0; c]);
        if train {
            let state = state_mut.expect("train mode requires mutable state");
            for ci in 0..c {
                let mut s = 0.0;
                for bi in 0..b {
                    let base = (bi * c + ci) * plane;
                    s += xs[base..base + plane].iter().sum::<f64>();
                }
                let mu = s / n as f64;
                let mut v = 0.0;
                for bi in 0..b {
                    let base = (bi * c + ci) * plane;
                    v += xs[base..base + plane].iter().map(|x| (x - mu) * (x - mu)).sum::<f64>();
                }
                let var = v / n as f64;
                mean[ci] = mu;
                invstd[ci] = 1.0 / (var + BN_EPS).sqrt();
                state.mean[ci] = (1.0 - BN_MOMENTUM) * state.mean[ci] + BN_MOMENTUM * mu;
                let unbiased = if n > 1 { var * n as f64 / (n - 1) as f64 } else { var };
                state.var[ci] = (1.0 - BN_MOMENTUM) * state.var[ci] + BN_MOMENTUM * unbiased;
            }
        } else {
            let state: &RunningStat = match (&state_mut, state_ref) {
                (Some(s), _) => s,
                (None, Some(s)) => s,
                (None, None) => unreachable!(),
            };
            for ci in 0..c {
                mean[ci] = state.mean[ci];
                invstd[ci] = 1.0 / (state.var[ci] + BN_EPS).sqrt();
            }
        }

        let gs = self.data(gamma);
        let bs = self.data(beta);
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * plane;
                let (mu, is, ga, be) = (mean[ci], invstd[ci], gs[ci], bs[ci]);
                for p in base..base + plane {
                    out[p] = (xs[p] - mu) * is * ga + be;
                }
            }
        }

        let rg = self.requires(input) || self.requires(gamma) || self.requires(beta);
        Ok(self.push(
            out,
            vec![b, c, h, w],
            rg,
            Op::BatchNorm2d { input, gamma, beta, train, mean, invstd },
        ))
    }

    /// 2x2 stride-2 max pooling; gradient routes to the first maximum in
    /// scan order within each window.
    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let (b, c, h, w) = self.dims4(input, "maxpool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::InvalidArgument {
                op: "maxpool2",
                message: format!("H and W must be even, got {h}x{w}"),
            });
        }
        let (ho, wo) = (h / 2, w / 2);
        let xs = self.data(input);
        let mut out = vec![0.0; b * c * ho * wo];
        let mut argmax = vec![0usize; out.len()];
        for bc in 0..b * c {
            let in_base = bc * h * w;
            let out_base = bc * ho * wo;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best_idx = in_base + (2 * oh) * w + 2 * ow;
                    let mut best = xs[best_idx];
                    for (dh, dw) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = in_base + (2 * oh + dh) * w + 2 * ow + dw;
                        if xs[idx] > best {
                            best = xs[idx];
                            best_idx = idx;
                        }
                    }
                    out[out_base + oh * wo + ow] = best;
                    argmax[out_base + oh * wo + ow] = best_idx;
                }
            }
        }
        let rg = self.requires(input);
        Ok(self.push(out, vec![b, c, ho, wo], rg, Op::MaxPool2 { input, argmax }))
    }

    /// Bilinear resize by `factor` with half-pixel centers and edge clamping.
    pub fn upsample_bilinear(&mut self, input: Var, factor: f64) -> Result<Var> {
        let (b, c, h, w) = self.dims4(input, "upsample_bilinear")?;
        if factor <= 0.0 {
            return Err(Error::InvalidArgument {
                op: "upsample_bilinear",
                message: format!("factor must be positive, got {factor}"),
            });
        }
        let ho = (h as f64 * factor).round() as usize;
        let wo = (w as f64 * factor).round() as usize;
        if ho == 0 || wo == 0 {
            return Err(Error::InvalidArgument {
                op: "upsample_bilinear",
                message: format!("output dimension would be 0 ({h}x{w} by {factor})"),
            });
        }
        let xs = self.data(input);
        let mut out = vec![0.0; b * c * ho * wo];
        let rows = sample_coords(h, ho, factor);
        let cols = sample_coords(w, wo, factor);
        for bc in 0..b * c {
            let in_base = bc * h * w;
            let out_base = bc * ho * wo;
            for (oh, &(i0, i1, fi)) in rows.iter().enumerate() {
                for (ow, &(j0, j1, fj)) in cols.iter().enumerate() {
                    let v00 = xs[in_base + i0 * w + j0];
                    let v01 = xs[in_base + i0 * w + j1];
                    let v10 = xs[in_base + i1 * w + j0];
                    let v11 = xs[in_base + i1 * w + j1];
                    let top = v00 + fj * (v01 - v00);
                    let bot = v10 + fj * (v11 - v10);
                    out[out_base + oh * wo + ow] = top + fi * (bot - top);
                }
            }
        }
        let rg = self.requires(input);
        Ok(self.push(out, vec![b, c, ho, wo], rg, Op::UpsampleBilinear { input, factor }))
    }

    /// Resize to an exact target size; `factor` is target/input per axis and
    /// must round back to the target.
    pub fn upsample_to(&mut self, input: Var, target_h: usize, target_w: usize) -> Result<Var> {
        let (_, _, h, w) = self.dims4(input, "upsample_to")?;
        let fh = target_h as f64 / h as f64;
        let fw = target_w as f64 / w as f64;
        if (fh - fw).abs() > 1e-12 {
            return Err(Error::InvalidArgument {
                op: "upsample_to",
                message: format!("non-uniform resize {h}x{w} -> {target_h}x{target_w}"),
            });
        }
        let v = self.upsample_bilinear(input, fh)?;
        let s = self.shape(v);
        debug_assert_eq!((s[2], s[3]), (target_h, target_w));
        Ok(v)
    }
}

/// Bilinear resize of one HxW plane to a target size, same half-pixel-center
/// convention as the tape op. Pure; used for ground-truth resizing and data
/// scaling where no gradient is needed.
pub fn resize_bilinear_plane(src: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w);
    let rows = sample_coords(h, th, th as f64 / h as f64);
    let cols = sample_coords(w, tw, tw as f64 / w as f64);
    let mut out = vec![0.0; th * tw];
    for (oh, &(i0, i1, fi)) in rows.iter().enumerate() {
        for (ow, &(j0, j1, fj)) in cols.iter().enumerate() {
            let top = src[i0 * w + j0] + fj * (src[i0 * w + j1] - src[i0 * w + j0]);
            let bot = src[i1 * w + j0] + fj * (src[i1 * w + j1] - src[i1 * w + j0]);
            out[oh * tw + ow] = top + fi * (bot - top);
        }
    }
    out
}

/// Per-output-index source interpolation: (low index, high index, fraction).
fn sample_coords(h_in: usize, h_out: usize, factor: f64) -> Vec<(usize, usize, f64)> {
    (0..h_out)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) / factor - 0.5).clamp(0.0, (h_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(h_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

// ---- backward rules ----

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_conv2d(
    ctx: &mut BackwardCtx,
    input: Var,
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
    dilation: usize,
    g: &[f64],
    out_shape: &[usize],
) {
    let (b, cout, ho, wo) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let is = ctx.shape(input);
    let (cin, h, w) = (is[1], is[2], is[3]);
    let k = ctx.shape(weight)[2];
    let kdim = cin * k * k;
    let rows = b * ho * wo;

    // Pixels-major view of the output gradient.
    let mut g_t = vec![0.0; rows * cout];
    for bi in 0..b {
        for co in 0..cout {
            let src = ((bi * cout + co) * ho) * wo;
            for p in 0..ho * wo {
                g_t[(bi * ho * wo + p) * cout + co] = g[src + p];
            }
        }
    }

    if ctx.requires(bias) {
        let mut db = vec![0.0; cout];
        for row in 0..rows {
            for co in 0..cout {
                db[co] += g_t[row * cout + co];
            }
        }
        ctx.add(bias, &db);
    }

    if ctx.requires(weight) {
        let col = im2col(ctx.data(input), b, cin, h, w, k, stride, padding, dilation, ho, wo);
        let mut dw = vec![0.0; cout * kdim];
        gemm(
            cout, rows, kdim,
            &g_t, 1, cout as isize,
            &col, kdim as isize, 1,
            0.0,
            &mut dw, kdim as isize, 1,
        );
        ctx.add(weight, &dw);
    }

    if ctx.requires(input) {
        let mut dcol = vec![0.0; rows * kdim];
        gemm(
            rows, cout, kdim,
            &g_t, cout as isize, 1,
            ctx.data(weight), kdim as isize, 1,
            0.0,
            &mut dcol, kdim as isize, 1,
        );
        let mut dinput = vec![0.0; b * cin * h * w];
        col2im_add(&dcol, &mut dinput, b, cin, h, w, k, stride, padding, dilation, ho, wo);
        ctx.add(input, &dinput);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_batchnorm(
    ctx: &mut BackwardCtx,
    input: Var,
    gamma: Var,
    beta: Var,
    train: bool,
    mean: &[f64],
    invstd: &[f64],
    g: &[f64],
) {
    let is = ctx.shape(input);
    let (b, c, h, w) = (is[0], is[1], is[2], is[3]);
    let plane = h * w;
    let n = (b * plane) as f64;
    let xs = ctx.data(input);
    let gammas = ctx.data(gamma);

    // Per-channel sums of g and g*xhat.
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            let (mu, is_) = (mean[ci], invstd[ci]);
            let mut sg = 0.0;
            let mut sgx = 0.0;
            for p in base..base + plane {
                sg += g[p];
                sgx += g[p] * (xs[p] - mu) * is_;
            }
            sum_g[ci] += sg;
            sum_gx[ci] += sgx;
        }
    }

    let dx = if ctx.requires(input) {
        let mut dx = vec![0.0; xs.len()];
        for bi in 0..b {
            for ci in 0..c {
                let base = (bi * c + ci) * plane;
                let (mu, is_, ga) = (mean[ci], invstd[ci], gammas[ci]);
                if train {
                    let mg = sum_g[ci] / n;
                    let mgx = sum_gx[ci] / n;
                    for p in base..base + plane {
                        let xhat = (xs[p] - mu) * is_;
                        dx[p] = ga * is_ * (g[p] - mg - xhat * mgx);
                    }
                } else {
                    for p in base..base + plane {
                        dx[p] = ga * is_ * g[p];
                    }
                }
            }
        }
        Some(dx)
    } else {
        None
    };

    ctx.add(beta, &sum_g);
    ctx.add(gamma, &sum_gx);
    if let Some(dx) = dx {
        ctx.add(input, &dx);
    }
}

pub(crate) fn backward_maxpool2(ctx: &mut BackwardCtx, input: Var, argmax: &[usize], g: &[f64]) {
    let mut dx = vec![0.0; ctx.data(input).len()];
    for (o, &idx) in argmax.iter().enumerate() {
        dx[idx] += g[o];
    }
    ctx.add(input, &dx);
}

pub(crate) fn backward_upsample(
    ctx: &mut BackwardCtx,
    input: Var,
    factor: f64,
    g: &[f64],
    out_shape: &[usize],
) {
    let is = ctx.shape(input);
    let (b, c, h, w) = (is[0], is[1], is[2], is[3]);
    let (ho, wo) = (out_shape[2], out_shape[3]);
    let rows = sample_coords(h, ho, factor);
    let cols = sample_coords(w, wo, factor);
    let mut dx = vec![0.0; b * c * h * w];
    for bc in 0..b * c {
        let in_base = bc * h * w;
        let out_base = bc * ho * wo;
        for (oh, &(i0, i1, fi)) in rows.iter().enumerate() {
            for (ow, &(j0, j1, fj)) in cols.iter().enumerate() {
                let go = g[out_base + oh * wo + ow];
                dx[in_base + i0 * w + j0] += go * (1.0 - fi) * (1.0 - fj);
                dx[in_base + i0 * w + j1] += go * (1.0 - fi) * fj;
                dx[in_base + i1 * w + j0] += go * fi * (1.0 - fj);
                dx[in_base + i1 * w + j1] += go * fi * fj;
            }
        }
    }
    ctx.add(input, &dx);
}
