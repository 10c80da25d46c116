//! Elementwise arithmetic, activations, concatenation, and reductions.

use super::{BackwardCtx, Op, Tape, Var};
use crate::error::{Error, Result};

/// How two operands combine: identical shapes, or one side is a scalar
/// (single element), which broadcasts. No other broadcasting exists.
fn binary_shape(tape: &Tape, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
    let sa = tape.shape(a);
    let sb = tape.shape(b);
    if sa == sb {
        return Ok(sa.to_vec());
    }
    if tape.numel(a) == 1 {
        return Ok(sb.to_vec());
    }
    if tape.numel(b) == 1 {
        return Ok(sa.to_vec());
    }
    Err(Error::ShapeMismatch {
        op,
        expected: format!("{sa:?} (or a scalar)"),
        got: format!("{sb:?}"),
    })
}

fn zip_broadcast(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    if a.len() == b.len() {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    } else if a.len() == 1 {
        b.iter().map(|&y| f(a[0], y)).collect()
    } else {
        a.iter().map(|&x| f(x, b[0])).collect()
    }
}

/// Reduce a full-size gradient back to an operand that may be scalar.
fn reduce_to(ctx: &mut BackwardCtx, v: Var, full: &[f64]) {
    let n = ctx.data(v).len();
    if n == full.len() {
        ctx.add(v, full);
    } else {
        debug_assert_eq!(n, 1);
        let s: f64 = full.iter().sum();
        ctx.add(v, &[s]);
    }
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = binary_shape(self, "add", a, b)?;
        let data = zip_broadcast(self.data(a), self.data(b), |x, y| x + y);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(data, shape, rg, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = binary_shape(self, "sub", a, b)?;
        let data = zip_broadcast(self.data(a), self.data(b), |x, y| x - y);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(data, shape, rg, Op::Sub { a, b }))
    }

    /// Hadamard product (scalar operands broadcast).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = binary_shape(self, "mul", a, b)?;
        let data = zip_broadcast(self.data(a), self.data(b), |x, y| x * y);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(data, shape, rg, Op::Mul { a, b }))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = binary_shape(self, "div", a, b)?;
        let data = zip_broadcast(self.data(a), self.data(b), |x, y| x / y);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(data, shape, rg, Op::Div { a, b }))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let data = self.data(a).iter().map(|&x| x + c).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.requires(a));
        self.push(data, shape, rg, Op::AddScalar { a, c })
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let data = self.data(a).iter().map(|&x| x * c).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.requires(a));
        self.push(data, shape, rg, Op::MulScalar { a, c })
    }

    /// `c - a`, elementwise; used for reverse masks `1 - x`.
    pub fn sub_from_scalar(&mut self, c: f64, a: Var) -> Var {
        let data = self.data(a).iter().map(|&x| c - x).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.requires(a));
        self.push(data, shape, rg, Op::SubFromScalar { c, a })
    }

    /// |x| with sign subgradient (0 at exact zeros).
    pub fn abs(&mut self, a: Var) -> Var {
        let data = self.data(a).iter().map(|x| x.abs()).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.requires(a));
        self.push(data, shape, rg, Op::Abs { a })
    }

    /// Numerically stable logistic sigmoid; output in (0,1).
    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data = self.data(a).iter().map(|&x| sigmoid_scalar(x)).collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.requires(a));
        self.push(data, shape, rg, Op::Sigmoid { a })
    }

    /// max(x, slope*x); derivative at exactly 0 is defined as 1.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&slope) {
            return Err(Error::InvalidArgument {
                op: "leaky_relu",
                message: format!("slope must lie in [0,1), got {slope}"),
            });
        }
        let data = self
            .data(a)
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.requires(a));
        Ok(self.push(data, shape, rg, Op::LeakyRelu { a, slope }))
    }

    /// Concatenate along the channel axis: [B,Ca,H,W] ++ [B,Cb,H,W].
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ba, ca, ha, wa) = self.dims4(a, "concat_channels")?;
        let (bb, cb, hb, wb) = self.dims4(b, "concat_channels")?;
        if (ba, ha, wa) != (bb, hb, wb) {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                expected: format!("[{ba},*,{ha},{wa}]"),
                got: format!("[{bb},{cb},{hb},{wb}]"),
            });
        }
        let plane = ha * wa;
        let mut data = Vec::with_capacity((ca + cb) * ba * plane);
        let da = self.data(a);
        let db = self.data(b);
        for bi in 0..ba {
            data.extend_from_slice(&da[bi * ca * plane..(bi + 1) * ca * plane]);
            data.extend_from_slice(&db[bi * cb * plane..(bi + 1) * cb * plane]);
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(data, vec![ba, ca + cb, ha, wa], rg, Op::ConcatChannels { a, b }))
    }

    /// Repeat a single-channel map across `channels` channels.
    pub fn broadcast_channels(&mut self, a: Var, channels: usize) -> Result<Var> {
        let (b, c, h, w) = self.dims4(a, "broadcast_channels")?;
        if c != 1 {
            return Err(Error::ShapeMismatch {
                op: "broadcast_channels",
                expected: "[B,1,H,W]".into(),
                got: format!("[{b},{c},{h},{w}]"),
            });
        }
        let plane = h * w;
        let da = self.data(a);
        let mut data = Vec::with_capacity(b * channels * plane);
        for bi in 0..b {
            let src = &da[bi * plane..(bi + 1) * plane];
            for _ in 0..channels {
                data.extend_from_slice(src);
            }
        }
        let rg = self.requires(a);
        Ok(self.push(data, vec![b, channels, h, w], rg, Op::BroadcastChannels { a, channels }))
    }

    /// Expand a per-channel vector [C] into a constant map [B,C,H,W].
    pub fn expand_channel_vec(&mut self, a: Var, batch: usize, height: usize, width: usize) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "expand_channel_vec",
                expected: "a 1-D tensor [C]".into(),
                got: format!("{s:?}"),
            });
        }
        let c = s[0];
        let plane = height * width;
        let da = self.data(a).to_vec();
        let mut data = Vec::with_capacity(batch * c * plane);
        for _ in 0..batch {
            for &v in &da {
                data.extend(std::iter::repeat(v).take(plane));
            }
        }
        let rg = self.requires(a);
        Ok(self.push(
            data,
            vec![batch, c, height, width],
            rg,
            Op::ExpandChannelVec { a, batch, height, width },
        ))
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.data(a).iter().sum();
        let rg = self.requires(a);
        self.push(vec![s], vec![1], rg, Op::SumAll { a })
    }

    /// Per-batch-item sums: [B,C,H,W] -> [B].
    pub fn sum_planes(&mut self, a: Var) -> Result<Var> {
        let (b, c, h, w) = self.dims4(a, "sum_planes")?;
        let per = c * h * w;
        let da = self.data(a);
        let data: Vec<f64> = (0..b).map(|bi| da[bi * per..(bi + 1) * per].iter().sum()).collect();
        let rg = self.requires(a);
        Ok(self.push(data, vec![b], rg, Op::SumPlanes { a }))
    }

    /// Sum over the batch of per-item Frobenius norms: [B,C,H,W] -> scalar
    /// sum_b sqrt(sum over (c,h,w) of x^2). Subgradient 0 for an all-zero item.
    pub fn frob_planes_sum(&mut self, a: Var) -> Result<Var> {
        let (b, c, h, w) = self.dims4(a, "frob_planes_sum")?;
        let per = c * h * w;
        let da = self.data(a);
        let norms: Vec<f64> = (0..b)
            .map(|bi| da[bi * per..(bi + 1) * per].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let total: f64 = norms.iter().sum();
        let rg = self.requires(a);
        Ok(self.push(vec![total], vec![1], rg, Op::FrobPlanes { a, norms }))
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---- backward rules ----

pub(crate) fn backward_add(ctx: &mut BackwardCtx, a: Var, b: Var, g: &[f64]) {
    reduce_to(ctx, a, g);
    reduce_to(ctx, b, g);
}

pub(crate) fn backward_sub(ctx: &mut BackwardCtx, a: Var, b: Var, g: &[f64]) {
    reduce_to(ctx, a, g);
    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
    reduce_to(ctx, b, &neg);
}

pub(crate) fn backward_mul(ctx: &mut BackwardCtx, a: Var, b: Var, g: &[f64]) {
    let da = zip_broadcast(g, ctx.data(b), |gi, bi| gi * bi);
    let db = zip_broadcast(g, ctx.data(a), |gi, ai| gi * ai);
    reduce_to(ctx, a, &da);
    reduce_to(ctx, b, &db);
}

pub(crate) fn backward_div(ctx: &mut BackwardCtx, a: Var, b: Var, g: &[f64]) {
    let da = zip_broadcast(g, ctx.data(b), |gi, bi| gi / bi);
    // d(a/b)/db = -a / b^2
    let an = ctx.data(a);
    let bn = ctx.data(b);
    let full = g.len();
    let mut db = vec![0.0; full];
    for i in 0..full {
        let ai = an[if an.len() == 1 { 0 } else { i }];
        let bi = bn[if bn.len() == 1 { 0 } else { i }];
        db[i] = -g[i] * ai / (bi * bi);
    }
    reduce_to(ctx, a, &da);
    reduce_to(ctx, b, &db);
}

pub(crate) fn backward_add_scalar(ctx: &mut BackwardCtx, a: Var, g: &[f64]) {
    ctx.add(a, g);
}

pub(crate) fn backward_mul_scalar(ctx: &mut BackwardCtx, a: Var, c: f64, g: &[f64]) {
    let da: Vec<f64> = g.iter().map(|x| x * c).collect();
    ctx.add(a, &da);
}

pub(crate) fn backward_sub_from_scalar(ctx: &mut BackwardCtx, a: Var, g: &[f64]) {
    let da: Vec<f64> = g.iter().map(|x| -x).collect();
    ctx.add(a, &da);
}

pub(crate) fn backward_abs(ctx: &mut BackwardCtx, a: Var, g: &[f64]) {
    let xs = ctx.data(a);
    let da: Vec<f64> = g
        .iter()
        .zip(xs)
        .map(|(gi, &x)| {
            if x > 0.0 {
                *gi
            } else if x < 0.0 {
                -*gi
            } else {
                0.0
            }
        })
        .collect();
    ctx.add(a, &da);
}

pub(crate) fn backward_sigmoid(ctx: &mut BackwardCtx, a: Var, g: &[f64], out: &[f64]) {
    let da: Vec<f64> = g.iter().zip(out).map(|(gi, &y)| gi * y * (1.0 - y)).collect();
    ctx.add(a, &da);
}

pub(crate) fn backward_leaky_relu(ctx: &mut BackwardCtx, a: Var, slope: f64, g: &[f64]) {
    let xs = ctx.data(a);
    let da: Vec<f64> = g
        .iter()
        .zip(xs)
        .map(|(gi, &x)| if x >= 0.0 { *gi } else { gi * slope })
        .collect();
    ctx.add(a, &da);
}

pub(crate) fn backward_concat(ctx: &mut BackwardCtx, a: Var, b: Var, g: &[f64]) {
    let sa = ctx.shape(a);
    let (batch, ca, h, w) = (sa[0], sa[1], sa[2], sa[3]);
    let cb = ctx.shape(b)[1];
    let plane = h * w;
    let mut da = vec![0.0; batch * ca * plane];
    let mut db = vec![0.0; batch * cb * plane];
    for bi in 0..batch {
        let base = bi * (ca + cb) * plane;
        da[bi * ca * plane..(bi + 1) * ca * plane]
            .copy_from_slice(&g[base..base + ca * plane]);
        db[bi * cb * plane..(bi + 1) * cb * plane]
            .copy_from_slice(&g[base + ca * plane..base + (ca + cb) * plane]);
    }
    ctx.add(a, &da);
    ctx.add(b, &db);
}

pub(crate) fn backward_broadcast_channels(ctx: &mut BackwardCtx, a: Var, channels: usize, g: &[f64]) {
    let sa = ctx.shape(a);
    let (batch, plane) = (sa[0], sa[2] * sa[3]);
    let mut da = vec![0.0; batch * plane];
    for bi in 0..batch {
        for ci in 0..channels {
            let src = &g[(bi * channels + ci) * plane..(bi * channels + ci + 1) * plane];
            let dst = &mut da[bi * plane..(bi + 1) * plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    ctx.add(a, &da);
}

pub(crate) fn backward_expand_channel_vec(
    ctx: &mut BackwardCtx,
    a: Var,
    batch: usize,
    height: usize,
    width: usize,
    g: &[f64],
) {
    let c = ctx.shape(a)[0];
    let plane = height * width;
    let mut da = vec![0.0; c];
    for bi in 0..batch {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            da[ci] += g[base..base + plane].iter().sum::<f64>();
        }
    }
    ctx.add(a, &da);
}

pub(crate) fn backward_sum_all(ctx: &mut BackwardCtx, a: Var, g: &[f64]) {
    let da = vec![g[0]; ctx.data(a).len()];
    ctx.add(a, &da);
}

pub(crate) fn backward_sum_planes(ctx: &mut BackwardCtx, a: Var, g: &[f64]) {
    let per = ctx.data(a).len() / g.len();
    let mut da = vec![0.0; ctx.data(a).len()];
    for (bi, gi) in g.iter().enumerate() {
        da[bi * per..(bi + 1) * per].iter_mut().for_each(|v| *v = *gi);
    }
    ctx.add(a, &da);
}

pub(crate) fn backward_frob_planes(ctx: &mut BackwardCtx, a: Var, norms: &[f64], g: &[f64]) {
    let xs = ctx.data(a);
    let per = xs.len() / norms.len();
    let mut da = vec![0.0; xs.len()];
    for (bi, &norm) in norms.iter().enumerate() {
        if norm <= 1e-300 {
            continue; // subgradient 0 at the all-zero plane
        }
        let scale = g[0] / norm;
        for i in bi * per..(bi + 1) * per {
            da[i] = scale * xs[i];
        }
    }
    ctx.add(a, &da);
}
