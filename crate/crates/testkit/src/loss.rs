//! Scalar transcription of the three-term training loss.

use crate::labels::Ring;

pub struct LocationTerms {
    pub cls1_logits: [f64; 2],
    pub cls2_logit: f64,
    /// Positive side distances in map steps.
    pub reg: [f64; 4],
    pub in_box: bool,
    pub ring: Ring,
    pub keep_negative: bool,
    pub center: (f64, f64),
    /// Ground-truth corners `(x1, y1, x2, y2)`.
    pub gt: [f64; 4],
}

fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    inter / union
}

/// `(total, ce, bce, iou_loss)`; empty terms contribute 0.
pub fn loss(locs: &[LocationTerms], stride: f64, lambda: [f64; 3]) -> (f64, f64, f64, f64) {
    let (mut ce, mut n_ce) = (0.0, 0);
    let (mut bce, mut n_bce) = (0.0, 0);
    let (mut iou, mut n_iou) = (0.0, 0);
    for l in locs {
        if l.in_box || l.keep_negative {
            let [a, b] = l.cls1_logits;
            let z = (a.exp() + b.exp()).ln();
            let logp = if l.in_box { b - z } else { a - z };
            ce -= logp;
            n_ce += 1;
        }
        let p = 1.0 / (1.0 + (-l.cls2_logit).exp());
        match l.ring {
            Ring::Positive => {
                bce -= p.ln();
                n_bce += 1;
                let (px, py) = l.center;
                let s = l.reg.map(|v| v * stride);
                let pred = [px - s[0], py - s[1], px + s[2], py + s[3]];
                iou += 1.0 - box_iou(pred, l.gt);
                n_iou += 1;
            }
            Ring::Negative if l.keep_negative => {
                bce -= (1.0 - p).ln();
                n_bce += 1;
            }
            _ => {}
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let (ce, bce, iou) = (mean(ce, n_ce), mean(bce, n_bce), mean(iou, n_iou));
    (lambda[0] * ce + lambda[1] * bce + lambda[2] * iou, ce, bce, iou)
}
