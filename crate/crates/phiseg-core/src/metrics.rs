//! Evaluation metrics for binary segmentation masks: overlap scores from the
//! confusion matrix plus the average symmetric surface distance.

use crate::error::{Error, Result};

/// Threshold used to binarize probabilistic predictions at evaluation.
pub const EVAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub iou: f64,
    pub dice: f64,
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
    pub assd: f64,
}

/// Threshold a probabilistic mask: value > threshold is foreground.
pub fn binarize(data: &[f64], threshold: f64) -> Vec<bool> {
    data.iter().map(|&v| v > threshold).collect()
}

/// All metrics for a pair of binary masks of the same HxW extent.
///
/// 0/0 ratios define PRE, REC, and F1 as 1 when both masks are empty and 0
/// otherwise; IoU and Dice of two empty masks are 1. ASSD of a pair with an
/// empty side is the image-diagonal sentinel sqrt(H^2 + W^2).
pub fn metrics(pred: &[bool], gt: &[bool], h: usize, w: usize) -> Result<MetricsReport> {
    if pred.len() != h * w || gt.len() != h * w {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            expected: format!("{h}x{w} = {} pixels", h * w),
            got: format!("pred {} / gt {}", pred.len(), gt.len()),
        });
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let both_empty = tp + fp == 0 && tp + fneg == 0;
    let ratio = |num: u64, den: u64| -> f64 {
        if den == 0 {
            if both_empty { 1.0 } else { 0.0 }
        } else {
            num as f64 / den as f64
        }
    };
    let iou = ratio(tp, tp + fp + fneg);
    let dice = ratio(2 * tp, 2 * tp + fp + fneg);
    let acc = (tp + tn) as f64 / (h * w) as f64;
    let pre = ratio(tp, tp + fp);
    let rec = ratio(tp, tp + fneg);
    let f1 = if pre + rec == 0.0 {
        if both_empty { 1.0 } else { 0.0 }
    } else {
        2.0 * pre * rec / (pre + rec)
    };
    Ok(MetricsReport {
        iou,
        dice,
        acc,
        pre,
        rec,
        f1,
        assd: assd(pred, gt, h, w),
    })
}

/// Foreground pixels with at least one background 4-neighbor; the image
/// border counts as background.
pub fn boundary_pixels(mask: &[bool], h: usize, w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask[r * w + c] {
                continue;
            }
            let at_border = r == 0 || r == h - 1 || c == 0 || c == w - 1;
            let exposed = at_border
                || !mask[(r - 1) * w + c]
                || !mask[(r + 1) * w + c]
                || !mask[r * w + c - 1]
                || !mask[r * w + c + 1];
            if exposed {
                out.push((r, c));
            }
        }
    }
    out
}

/// Average symmetric surface distance in pixels, by exact pairwise
/// enumeration over the two boundaries. An empty mask on either side yields
/// the sentinel sqrt(H^2 + W^2).
pub fn assd(pred: &[bool], gt: &[bool], h: usize, w: usize) -> f64 {
    if !pred.iter().any(|&v| v) || !gt.iter().any(|&v| v) {
        return ((h * h + w * w) as f64).sqrt();
    }
    let ba = boundary_pixels(pred, h, w);
    let bb = boundary_pixels(gt, h, w);
    let min_dist = |p: (usize, usize), set: &[(usize, usize)]| -> f64 {
        set.iter()
            .map(|q| {
                let dr = p.0 as f64 - q.0 as f64;
                let dc = p.1 as f64 - q.1 as f64;
                dr * dr + dc * dc
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    };
    let sum_a: f64 = ba.iter().map(|&p| min_dist(p, &bb)).sum();
    let sum_b: f64 = bb.iter().map(|&q| min_dist(q, &ba)).sum();
    (sum_a + sum_b) / (ba.len() + bb.len()) as f64
}

pub const CSV_HEADER: &str = "dataset,split,sample_id,iou,dice,acc,pre,rec,f1,assd";

/// One metrics CSV row, six decimal places throughout.
pub fn csv_row(dataset: &str, split: &str, sample_id: &str, m: &MetricsReport) -> String {
    format!(
        "{dataset},{split},{sample_id},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        m.iou, m.dice, m.acc, m.pre, m.rec, m.f1, m.assd
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from01(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x != 0).collect()
    }

    #[test]
    fn perfect_prediction_scores_ones() {
        let m = from01(&[0, 1, 1, 0, 1, 1, 0, 0, 0]);
        let r = metrics(&m, &m, 3, 3).unwrap();
        assert_eq!(
            (r.iou, r.dice, r.acc, r.pre, r.rec, r.f1, r.assd),
            (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0)
        );
    }

    #[test]
    fn empty_prediction_conventions() {
        let gt = from01(&[0, 1, 1, 0]);
        let pred = vec![false; 4];
        let r = metrics(&pred, &gt, 2, 2).unwrap();
        assert_eq!(r.iou, 0.0);
        assert_eq!(r.rec, 0.0);
        assert_eq!(r.pre, 0.0);
        assert_eq!(r.assd, 8.0f64.sqrt()); // diagonal sentinel
    }

    #[test]
    fn both_empty_conventions() {
        let e = vec![false; 4];
        let r = metrics(&e, &e, 2, 2).unwrap();
        assert_eq!((r.iou, r.dice, r.pre, r.rec, r.f1), (1.0, 1.0, 1.0, 1.0, 1.0));
        assert_eq!(r.acc, 1.0);
        assert_eq!(r.assd, 8.0f64.sqrt());
    }

    #[test]
    fn confusion_matrix_example() {
        // 4x4 with TP=2, FP=1, FN=1, TN=12
        let mut gt = vec![false; 16];
        let mut pred = vec![false; 16];
        gt[0] = true;
        pred[0] = true; // TP
        gt[1] = true;
        pred[1] = true; // TP
        gt[2] = true; // FN
        pred[3] = true; // FP
        let r = metrics(&pred, &gt, 4, 4).unwrap();
        assert_eq!(r.iou, 0.5);
        assert!((r.dice - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.acc, 14.0 / 16.0);
        assert!((r.pre - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.rec - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn assd_symmetric_singletons() {
        // two single-pixel masks offset by (3,4): distance 5
        let mut a = vec![false; 100];
        let mut b = vec![false; 100];
        a[2 * 10 + 1] = true;
        b[5 * 10 + 5] = true;
        assert_eq!(assd(&a, &b, 10, 10), 5.0);
        assert_eq!(assd(&b, &a, 10, 10), 5.0);
    }

    #[test]
    fn boundary_uses_border_as_background() {
        // full-frame mask: every border pixel is boundary, interior is not
        let m = vec![true; 16];
        let b = boundary_pixels(&m, 4, 4);
        assert_eq!(b.len(), 12);
        assert!(!b.contains(&(1, 1)));
    }

    #[test]
    fn metric_symmetries() {
        let a = from01(&[1, 1, 0, 0, 1, 0, 0, 0, 0]);
        let b = from01(&[1, 0, 0, 1, 1, 0, 0, 0, 1]);
        let r1 = metrics(&a, &b, 3, 3).unwrap();
        let r2 = metrics(&b, &a, 3, 3).unwrap();
        assert_eq!(r1.iou, r2.iou);
        assert_eq!(r1.dice, r2.dice);
        assert_eq!(r1.assd, r2.assd);
        assert_eq!(r1.pre, r2.rec);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = vec![false; 4];
        let b = vec![false; 9];
        assert!(metrics(&a, &b, 2, 2).is_err());
    }

    #[test]
    fn csv_row_formatting() {
        let r = MetricsReport { iou: 0.5, dice: 2.0 / 3.0, acc: 0.875, pre: 1.0, rec: 0.5, f1: 2.0 / 3.0, assd: 1.25 };
        assert_eq!(
            csv_row("synth", "test", "0007", &r),
            "synth,test,0007,0.500000,0.666667,0.875000,1.000000,0.500000,0.666667,1.250000"
        );
    }
}
