//! Composite objective: softmax cross-entropy on the in-box branch, sigmoid
//! binary cross-entropy on the center-distance branch, and an IoU loss on
//! the regressed boxes at center-distance positives.

use log::warn;

use crate::bbox::BBox;
use crate::error::{ensure_shape, HiftError, Result};
use crate::graph::{Graph, NodeId};
use crate::heads::HeadOutputs;
use crate::labels::LabelMaps;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(HiftError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Total loss node plus the unweighted value of each term.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: NodeId,
    pub cls1: f64,
    pub cls2: f64,
    pub loc: f64,
}

/// Box decoded from side distances (pixels) measured from a location center.
pub fn decode_box(center: (f64, f64), sides: [f64; 4]) -> BBox {
    let (px, py) = center;
    let [l, t, r, b] = sides;
    BBox::from_corners(px - l, py - t, px + r, py + b)
}

fn column_selector(cols: &[f64]) -> Result<Tensor> {
    Tensor::new(&[cols.len(), 1], cols.to_vec())
}

/// Builds the weighted loss. Regression outputs are in stride units and are
/// scaled by the map stride before comparison with the pixel targets.
pub fn hift_loss(g: &mut Graph, preds: &HeadOutputs, labels: &LabelMaps, weights: &LossWeights) -> Result<LossTerms> {
    weights.validate()?;
    let n = labels.len();
    ensure_shape!(
        g.shape(preds.cls1) == [n, 2],
        "cls1 logits {:?} for {n} locations",
        g.shape(preds.cls1)
    );
    ensure_shape!(
        g.shape(preds.cls2) == [n, 1],
        "cls2 logits {:?} for {n} locations",
        g.shape(preds.cls2)
    );
    ensure_shape!(
        g.shape(preds.reg) == [n, 4],
        "regression {:?} for {n} locations",
        g.shape(preds.reg)
    );

    let mut parts: Vec<NodeId> = Vec::with_capacity(3);
    let (mut v1, mut v2, mut v3) = (0.0, 0.0, 0.0);

    // Softmax cross-entropy.
    let terms1: Vec<_> = labels.cls1_terms().collect();
    if terms1.is_empty() {
        warn!("no locations contribute to the cls1 term");
    } else {
        let mut w = vec![0.0; n * 2];
        let k = -1.0 / terms1.len() as f64;
        for &(i, pos) in &terms1 {
            w[i * 2 + usize::from(pos)] = k;
        }
        let ls = g.log_softmax_rows(preds.cls1)?;
        let wn = g.constant(Tensor::new(&[n, 2], w)?);
        let prod = g.mul(ls, wn)?;
        let term = g.sum(prod);
        v1 = g.value(term).item();
        parts.push(g.scale(term, weights.lambda1));
    }

    // Binary cross-entropy on logits: softplus(z) - y z.
    let terms2: Vec<_> = labels.cls2_terms().collect();
    if terms2.is_empty() {
        warn!("no locations contribute to the cls2 term");
    } else {
        let mut w = vec![0.0; n];
        let mut wy = vec![0.0; n];
        let k = 1.0 / terms2.len() as f64;
        for &(i, pos) in &terms2 {
            w[i] = k;
            if pos {
                wy[i] = k;
            }
        }
        let sp = g.softplus(preds.cls2);
        let wn = g.constant(Tensor::new(&[n, 1], w)?);
        let wyn = g.constant(Tensor::new(&[n, 1], wy)?);
        let a = g.mul(sp, wn)?;
        let b = g.mul(preds.cls2, wyn)?;
        let diff = g.sub(a, b)?;
        let term = g.sum(diff);
        v2 = g.value(term).item();
        parts.push(g.scale(term, weights.lambda2));
    }

    // IoU loss at cls2 positives. Both boxes contain the location center, so
    // the overlap along each axis is the sum of the smaller side distances.
    let positives: Vec<usize> = labels.cls2_terms().filter(|&(_, p)| p).map(|(i, _)| i).collect();
    if positives.is_empty() {
        warn!("no locations contribute to the localization term");
    } else {
        let mut targets = vec![1.0; n * 4];
        let mut gt_area = vec![1.0; n];
        let mut w = vec![0.0; n];
        let k = 1.0 / positives.len() as f64;
        for &i in &positives {
            let t = labels.reg_targets[i];
            targets[i * 4..i * 4 + 4].copy_from_slice(&t);
            gt_area[i] = (t[0] + t[2]) * (t[1] + t[3]);
            w[i] = k;
        }
        let pred = g.scale(preds.reg, labels.geometry.stride);
        let tn = g.constant(Tensor::new(&[n, 4], targets)?);
        let mins = g.minimum(pred, tn)?;
        let horiz = g.constant(column_selector(&[1.0, 0.0, 1.0, 0.0])?);
        let vert = g.constant(column_selector(&[0.0, 1.0, 0.0, 1.0])?);
        let iw = g.matmul(mins, horiz)?;
        let ih = g.matmul(mins, vert)?;
        let inter = g.mul(iw, ih)?;
        let pw = g.matmul(pred, horiz)?;
        let ph = g.matmul(pred, vert)?;
        let pa = g.mul(pw, ph)?;
        let ga = g.constant(Tensor::new(&[n, 1], gt_area)?);
        let sum_area = g.add(pa, ga)?;
        let union = g.sub(sum_area, inter)?;
        let iou = g.div(inter, union)?;
        let wn = g.constant(Tensor::new(&[n, 1], w)?);
        let weighted = g.mul(iou, wn)?;
        let mean_iou = g.sum(weighted);
        let neg = g.scale(mean_iou, -1.0);
        let term = g.add_const(neg, 1.0);
        v3 = g.value(term).item();
        parts.push(g.scale(term, weights.lambda3));
    }

    let total = match parts.len() {
        0 => g.constant(Tensor::scalar(0.0)),
        _ => {
            let mut acc = parts[0];
            for &p in &parts[1..] {
                acc = g.add(acc, p)?;
            }
            acc
        }
    };
    Ok(LossTerms {
        total,
        cls1: v1,
        cls2: v2,
        loc: v3,
    })
}
