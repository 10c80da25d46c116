//! Training objective: unwrapped-phase alignment loss, soft IoU loss, and
//! their weighted total. The ground-truth branch is detached; gradients flow
//! only through the prediction masks.

use crate::error::{Error, Result};
use crate::spectral::{self, UnwrapAxis};
use crate::tensor::{resize_bilinear_plane, Tape, Tensor, Var};

/// Smoothing epsilon of the soft IoU ratio.
pub const IOU_EPS: f64 = 1e-6;

/// Relative weights of the phase and spatial terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0 {
            return Err(Error::InvalidArgument {
                op: "loss_weights",
                message: format!("need alpha, beta >= 0 and alpha + beta > 0, got ({alpha}, {beta})"),
            });
        }
        Ok(LossWeights { alpha, beta })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.01, beta: 1.0 }
    }
}

fn check_binary(op: &'static str, gt: &Tensor) -> Result<()> {
    if gt.data.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument {
            op,
            message: "ground truth must be binary {0,1}".into(),
        });
    }
    Ok(())
}

fn gt_dims(op: &'static str, gt: &Tensor) -> Result<(usize, usize, usize)> {
    if gt.shape.len() != 4 || gt.shape[1] != 1 {
        return Err(Error::ShapeMismatch {
            op,
            expected: "[B,1,H,W] ground truth".into(),
            got: format!("{:?}", gt.shape),
        });
    }
    Ok((gt.shape[0], gt.shape[2], gt.shape[3]))
}

/// Unwrapped phase spectra of a constant plane, computed outside the tape.
fn gt_phase_planes(plane: &[f64], h: usize, w: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = spectral::dft2(plane, h, w)?;
    let p = spectral::phase(&f);
    let row = spectral::unwrap_axis(&p, h, w, UnwrapAxis::Row);
    let col = spectral::unwrap_axis(&p, h, w, UnwrapAxis::Col);
    Ok((row, col))
}

/// Phase-integrated loss: for every stage mask, the Frobenius distance
/// between its row- and column-unwrapped phase spectra and those of the
/// ground truth resized to the stage resolution, summed over stages and
/// batch items, averaged over the batch.
pub fn phase_loss(tape: &mut Tape, phi_masks: &[Var], gt: &Tensor) -> Result<Var> {
    if phi_masks.is_empty() {
        return Err(Error::InvalidArgument {
            op: "phase_loss",
            message: "stage list is empty".into(),
        });
    }
    check_binary("phase_loss", gt)?;
    let (b, gh, gw) = gt_dims("phase_loss", gt)?;

    let mut total: Option<Var> = None;
    for &mask in phi_masks {
        let s = tape.shape(mask).to_vec();
        if s.len() != 4 || s[0] != b || s[1] != 1 {
            return Err(Error::ShapeMismatch {
                op: "phase_loss",
                expected: format!("[{b},1,*,*] stage mask"),
                got: format!("{s:?}"),
            });
        }
        let (hi, wi) = (s[2], s[3]);

        // detached gt branch: resize, transform, unwrap per batch item
        let plane = hi * wi;
        let mut row_gt = vec![0.0; b * plane];
        let mut col_gt = vec![0.0; b * plane];
        for bi in 0..b {
            let src = &gt.data[bi * gh * gw..(bi + 1) * gh * gw];
            let resized = resize_bilinear_plane(src, gh, gw, hi, wi);
            let (r, c) = gt_phase_planes(&resized, hi, wi)?;
            row_gt[bi * plane..(bi + 1) * plane].copy_from_slice(&r);
            col_gt[bi * plane..(bi + 1) * plane].copy_from_slice(&c);
        }
        let row_gt = tape.constant(vec![b, 1, hi, wi], row_gt);
        let col_gt = tape.constant(vec![b, 1, hi, wi], col_gt);

        let spec = tape.dft2(mask)?;
        let ph = tape.phase(spec)?;
        let row_pred = tape.unwrap_axis(ph, UnwrapAxis::Row)?;
        let col_pred = tape.unwrap_axis(ph, UnwrapAxis::Col)?;
        let row_diff = tape.sub(row_pred, row_gt)?;
        let col_diff = tape.sub(col_pred, col_gt)?;
        let row_norm = tape.frob_planes_sum(row_diff)?;
        let col_norm = tape.frob_planes_sum(col_diff)?;
        let stage = tape.add(row_norm, col_norm)?;
        total = Some(match total {
            Some(t) => tape.add(t, stage)?,
            None => stage,
        });
    }
    Ok(tape.mul_scalar(total.expect("at least one stage"), 1.0 / b as f64))
}

/// Soft IoU loss 1 - (sum p*g + eps)/(sum p + sum g - sum p*g + eps),
/// averaged over the batch.
pub fn iou_loss(tape: &mut Tape, pred: Var, gt: &Tensor) -> Result<Var> {
    check_binary("iou_loss", gt)?;
    let (b, gh, gw) = gt_dims("iou_loss", gt)?;
    let ps = tape.shape(pred).to_vec();
    if ps != [b, 1, gh, gw] {
        return Err(Error::ShapeMismatch {
            op: "iou_loss",
            expected: format!("[{b},1,{gh},{gw}] prediction"),
            got: format!("{ps:?}"),
        });
    }
    if tape.data(pred).iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidArgument {
            op: "iou_loss",
            message: "prediction values must lie in [0,1]".into(),
        });
    }
    let gt_var = tape.constant(gt.shape.clone(), gt.data.clone());
    let inter = tape.mul(pred, gt_var)?;
    let s_inter = tape.sum_planes(inter)?;
    let s_pred = tape.sum_planes(pred)?;
    let s_gt = tape.sum_planes(gt_var)?;
    let s_union = tape.add(s_pred, s_gt)?;
    let s_union = tape.sub(s_union, s_inter)?;
    let num = tape.add_scalar(s_inter, IOU_EPS);
    let den = tape.add_scalar(s_union, IOU_EPS);
    let score = tape.div(num, den)?;
    let complement = tape.sub_from_scalar(1.0, score);
    let sum = tape.sum_all(complement);
    Ok(tape.mul_scalar(sum, 1.0 / b as f64))
}

/// alpha * L_phi + beta * L_s.
pub fn total_loss(
    tape: &mut Tape,
    phi_masks: &[Var],
    pred: Var,
    gt: &Tensor,
    w: &LossWeights,
) -> Result<Var> {
    let lphi = phase_loss(tape, phi_masks, gt)?;
    let ls = iou_loss(tape, pred, gt)?;
    let a = tape.mul_scalar(lphi, w.alpha);
    let b = tape.mul_scalar(ls, w.beta);
    tape.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Centered square mask in an HxW plane, offset by (dy, dx).
    fn square_mask(h: usize, w: usize, side: usize, dy: isize, dx: isize) -> Tensor {
        let mut data = vec![0.0; h * w];
        let top = (h as isize - side as isize) / 2 + dy;
        let left = (w as isize - side as isize) / 2 + dx;
        for r in 0..side as isize {
            for c in 0..side as isize {
                let (rr, cc) = (top + r, left + c);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    data[rr as usize * w + cc as usize] = 1.0;
                }
            }
        }
        Tensor::new(vec![1, 1, h, w], data)
    }

    #[test]
    fn phase_loss_zero_on_identical_masks() {
        let gt = square_mask(16, 16, 6, 0, 0);
        let mut tape = Tape::new();
        // stage mask identical to the gt resized to 8x8
        let resized = resize_bilinear_plane(&gt.data, 16, 16, 8, 8);
        let m8 = tape.constant(vec![1, 1, 8, 8], resized);
        let m16 = tape.constant(gt.shape.clone(), gt.data.clone());
        let loss = phase_loss(&mut tape, &[m16, m8], &gt).unwrap();
        assert_eq!(tape.data(loss)[0], 0.0);
    }

    #[test]
    fn phase_loss_nonnegative_and_shift_sensitive() {
        let gt = square_mask(32, 32, 8, 0, 0);
        let shifted = square_mask(32, 32, 8, 4, 0);
        let mut tape = Tape::new();
        let exact = tape.constant(gt.shape.clone(), gt.data.clone());
        let moved = tape.constant(shifted.shape.clone(), shifted.data.clone());
        let l0 = phase_loss(&mut tape, &[exact], &gt).unwrap();
        let l1 = phase_loss(&mut tape, &[moved], &gt).unwrap();
        let (v0, v1) = (tape.data(l0)[0], tape.data(l1)[0]);
        assert!(v0 >= 0.0 && v1 >= 0.0);
        assert!(v1 > v0, "shifted mask must cost more: {v1} vs {v0}");
    }

    #[test]
    fn phase_loss_rejects_empty_stage_list() {
        let gt = square_mask(8, 8, 2, 0, 0);
        let mut tape = Tape::new();
        assert!(phase_loss(&mut tape, &[], &gt).is_err());
    }

    #[test]
    fn phase_loss_rejects_non_binary_gt() {
        let mut gt = square_mask(8, 8, 2, 0, 0);
        gt.data[0] = 0.5;
        let mut tape = Tape::new();
        let m = tape.constant(gt.shape.clone(), vec![0.0; 64]);
        assert!(phase_loss(&mut tape, &[m], &gt).is_err());
    }

    #[test]
    fn iou_loss_values() {
        let gt = square_mask(8, 8, 4, 0, 0);
        let mut tape = Tape::new();

        // identical binary prediction: loss ~ 0
        let same = tape.constant(gt.shape.clone(), gt.data.clone());
        let l = iou_loss(&mut tape, same, &gt).unwrap();
        assert!(tape.data(l)[0].abs() < 1e-6);

        // disjoint nonempty prediction: loss ~ 1
        let far = square_mask(8, 8, 2, -3, -3);
        let farv = tape.constant(far.shape.clone(), far.data.clone());
        let l = iou_loss(&mut tape, farv, &gt).unwrap();
        assert!((tape.data(l)[0] - 1.0).abs() < 1e-4);

        // prediction covering exactly half of gt: s = 0.5
        let mut half = gt.data.clone();
        let mut seen = 0;
        for v in half.iter_mut() {
            if *v == 1.0 {
                seen += 1;
                if seen > 8 {
                    *v = 0.0;
                }
            }
        }
        let halfv = tape.constant(gt.shape.clone(), half);
        let l = iou_loss(&mut tape, halfv, &gt).unwrap();
        assert!((tape.data(l)[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn iou_loss_stays_in_unit_interval() {
        let gt = square_mask(8, 8, 4, 0, 0);
        let mut tape = Tape::new();
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let p = tape.constant(gt.shape.clone(), vec![frac; 64]);
            let l = iou_loss(&mut tape, p, &gt).unwrap();
            let v = tape.data(l)[0];
            assert!((0.0..=1.0).contains(&v), "loss {v} out of range at {frac}");
        }
    }

    #[test]
    fn total_loss_weight_algebra() {
        let gt = square_mask(16, 16, 5, 0, 0);
        let pred_t = square_mask(16, 16, 5, 1, 1);
        let mut tape = Tape::new();
        let pred = tape.constant(pred_t.shape.clone(), pred_t.data.clone());
        let phi = tape.constant(pred_t.shape.clone(), pred_t.data.clone());

        // alpha = 0 collapses to beta * L_s
        let w0 = LossWeights::new(0.0, 2.0).unwrap();
        let t0 = total_loss(&mut tape, &[phi], pred, &gt, &w0).unwrap();
        let ls = iou_loss(&mut tape, pred, &gt).unwrap();
        assert!((tape.data(t0)[0] - 2.0 * tape.data(ls)[0]).abs() < 1e-12);

        // doubling both weights doubles the loss
        let w1 = LossWeights::new(0.01, 1.0).unwrap();
        let w2 = LossWeights::new(0.02, 2.0).unwrap();
        let t1 = total_loss(&mut tape, &[phi], pred, &gt, &w1).unwrap();
        let t2 = total_loss(&mut tape, &[phi], pred, &gt, &w2).unwrap();
        assert!((2.0 * tape.data(t1)[0] - tape.data(t2)[0]).abs() < 1e-12);
    }

    #[test]
    fn loss_weights_validation() {
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-0.1, 1.0).is_err());
        assert!(LossWeights::new(0.01, 1.0).is_ok());
    }
}
