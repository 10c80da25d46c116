//! Differentiable spectral ops. Complex spectra live on the tape as
//! [B,2,H,W] tensors (channel 0 real, channel 1 imaginary).

use super::{BackwardCtx, Op, Tape, UnwrapAxis, Var};
use crate::error::{Error, Result};
use crate::spectral::{self, ComplexField, FilterSpec, EPS_PHASE};

fn expect_channels(tape: &Tape, v: Var, op: &'static str, c: usize) -> Result<(usize, usize, usize)> {
    let (b, ch, h, w) = tape.dims4(v, op)?;
    if ch != c {
        return Err(Error::ShapeMismatch {
            op,
            expected: format!("[B,{c},H,W]"),
            got: format!("[{b},{ch},{h},{w}]"),
        });
    }
    Ok((b, h, w))
}

impl Tape {
    /// Forward 2-D DFT of each single-channel plane: [B,1,H,W] -> [B,2,H,W].
    pub fn dft2(&mut self, a: Var) -> Result<Var> {
        let (b, h, w) = expect_channels(self, a, "dft2", 1)?;
        let plane = h * w;
        let xs = self.data(a);
        let mut out = vec![0.0; b * 2 * plane];
        for bi in 0..b {
            let f = spectral::dft2(&xs[bi * plane..(bi + 1) * plane], h, w)?;
            out[bi * 2 * plane..bi * 2 * plane + plane].copy_from_slice(&f.re);
            out[bi * 2 * plane + plane..(bi + 1) * 2 * plane].copy_from_slice(&f.im);
        }
        let rg = self.requires(a);
        Ok(self.push(out, vec![b, 2, h, w], rg, Op::Dft2 { a }))
    }

    /// Real part of the inverse 2-D DFT: [B,2,H,W] -> [B,1,H,W].
    pub fn idft2_real(&mut self, a: Var) -> Result<Var> {
        let (b, h, w) = expect_channels(self, a, "idft2_real", 2)?;
        let plane = h * w;
        let xs = self.data(a);
        let mut out = vec![0.0; b * plane];
        for bi in 0..b {
            let base = bi * 2 * plane;
            let f = ComplexField {
                re: xs[base..base + plane].to_vec(),
                im: xs[base + plane..base + 2 * plane].to_vec(),
                rows: h,
                cols: w,
            };
            let (re, _) = spectral::idft2(&f);
            out[bi * plane..(bi + 1) * plane].copy_from_slice(&re);
        }
        let rg = self.requires(a);
        Ok(self.push(out, vec![b, 1, h, w], rg, Op::Idft2Real { a }))
    }

    /// Multiply a spectrum by the real filter mask of `spec`.
    pub fn apply_filter(&mut self, a: Var, spec: &FilterSpec) -> Result<Var> {
        let (b, h, w) = expect_channels(self, a, "apply_filter", 2)?;
        let mask = spectral::filter_mask(spec, h, w)?;
        let plane = h * w;
        let xs = self.data(a);
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            for part in 0..2 {
                let base = (bi * 2 + part) * plane;
                for p in 0..plane {
                    out[base + p] = xs[base + p] * mask[p];
                }
            }
        }
        let rg = self.requires(a);
        Ok(self.push(out, vec![b, 2, h, w], rg, Op::ApplyFilter { a, mask }))
    }

    /// Phase spectrum in (-pi, pi]: [B,2,H,W] -> [B,1,H,W]. Below
    /// [`EPS_PHASE`] modulus the value and its gradient are 0.
    pub fn phase(&mut self, a: Var) -> Result<Var> {
        let (b, h, w) = expect_channels(self, a, "phase", 2)?;
        let plane = h * w;
        let xs = self.data(a);
        let mut out = vec![0.0; b * plane];
        for bi in 0..b {
            let base = bi * 2 * plane;
            for p in 0..plane {
                let (re, im) = (xs[base + p], xs[base + plane + p]);
                out[bi * plane + p] = if re.hypot(im) < EPS_PHASE {
                    0.0
                } else {
                    im.atan2(re)
                };
            }
        }
        let rg = self.requires(a);
        Ok(self.push(out, vec![b, 1, h, w], rg, Op::PhaseAngle { a }))
    }

    /// Axis-wise sequential phase unwrap; gradient is the identity.
    pub fn unwrap_axis(&mut self, a: Var, axis: UnwrapAxis) -> Result<Var> {
        let (b, h, w) = expect_channels(self, a, "unwrap_axis", 1)?;
        let plane = h * w;
        let xs = self.data(a);
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            let u = spectral::unwrap_axis(&xs[bi * plane..(bi + 1) * plane], h, w, axis);
            out[bi * plane..(bi + 1) * plane].copy_from_slice(&u);
        }
        let rg = self.requires(a);
        Ok(self.push(out, vec![b, 1, h, w], rg, Op::Unwrap { a, axis }))
    }
}

// ---- backward rules ----

pub(crate) fn backward_dft2(ctx: &mut BackwardCtx, a: Var, g: &[f64], out_shape: &[usize]) {
    let (b, h, w) = (out_shape[0], out_shape[2], out_shape[3]);
    let plane = h * w;
    let mut da = vec![0.0; b * plane];
    for bi in 0..b {
        let base = bi * 2 * plane;
        // dx = Re(DFT2(dRe - j*dIm)): the adjoint of the real-to-complex DFT
        let grad_field = ComplexField {
            re: g[base..base + plane].to_vec(),
            im: g[base + plane..base + 2 * plane].iter().map(|v| -v).collect(),
            rows: h,
            cols: w,
        };
        let f = spectral::dft2_complex(&grad_field);
        da[bi * plane..(bi + 1) * plane].copy_from_slice(&f.re);
    }
    ctx.add(a, &da);
}

pub(crate) fn backward_idft2_real(ctx: &mut BackwardCtx, a: Var, g: &[f64], out_shape: &[usize]) {
    let (b, h, w) = (out_shape[0], out_shape[2], out_shape[3]);
    let plane = h * w;
    let scale = 1.0 / plane as f64;
    let mut da = vec![0.0; b * 2 * plane];
    for bi in 0..b {
        // (dRe, dIm) = DFT2(dy) / (M*N)
        let f = spectral::dft2(&g[bi * plane..(bi + 1) * plane], h, w)
            .expect("gradient plane has valid dims");
        let base = bi * 2 * plane;
        for p in 0..plane {
            da[base + p] = f.re[p] * scale;
            da[base + plane + p] = f.im[p] * scale;
        }
    }
    ctx.add(a, &da);
}

pub(crate) fn backward_apply_filter(ctx: &mut BackwardCtx, a: Var, mask: &[f64], g: &[f64]) {
    let plane = mask.len();
    let mut da = vec![0.0; g.len()];
    for (chunk, dchunk) in g.chunks_exact(plane).zip(da.chunks_exact_mut(plane)) {
        for p in 0..plane {
            dchunk[p] = chunk[p] * mask[p];
        }
    }
    ctx.add(a, &da);
}

pub(crate) fn backward_phase(ctx: &mut BackwardCtx, a: Var, g: &[f64]) {
    let shape = ctx.shape(a);
    let (b, h, w) = (shape[0], shape[2], shape[3]);
    let plane = h * w;
    let xs = ctx.data(a);
    let mut da = vec![0.0; xs.len()];
    for bi in 0..b {
        let base = bi * 2 * plane;
        for p in 0..plane {
            let (re, im) = (xs[base + p], xs[base + plane + p]);
            let sq = re * re + im * im;
            if sq.sqrt() < EPS_PHASE {
                continue;
            }
            let go = g[bi * plane + p];
            da[base + p] += go * (-im / sq);
            da[base + plane + p] += go * (re / sq);
        }
    }
    ctx.add(a, &da);
}

pub(crate) fn backward_unwrap(ctx: &mut BackwardCtx, a: Var, g: &[f64]) {
    ctx.add(a, g);
}
