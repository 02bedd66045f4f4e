//! One-pass evaluation metrics: center location error, precision and
//! success plots, success AUC and precision at 20 pixels.

use std::fmt::Write as _;

use crate::bbox::{iou, BBox};
use crate::error::{HiftError, Result};

/// Thresholds `0, 1, ..., 50` pixels.
pub fn precision_thresholds() -> Vec<f64> {
    (0..=50).map(|t| t as f64).collect()
}

/// Thresholds `0, 0.05, ..., 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricCurve {
    pub thresholds: Vec<f64>,
    pub scores: Vec<f64>,
}

impl MetricCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,score\n");
        for (t, v) in self.thresholds.iter().zip(&self.scores) {
            let _ = writeln!(s, "{t},{v}");
        }
        s
    }

    /// Pointwise mean of curves sharing one threshold grid.
    pub fn mean(curves: &[MetricCurve]) -> Result<MetricCurve> {
        let first = curves
            .first()
            .ok_or_else(|| HiftError::Contract("mean of zero curves".into()))?;
        if curves.iter().any(|c| c.thresholds != first.thresholds) {
            return Err(HiftError::Contract("curves use different threshold grids".into()));
        }
        let n = curves.len() as f64;
        let scores = (0..first.scores.len())
            .map(|i| curves.iter().map(|c| c.scores[i]).sum::<f64>() / n)
            .collect();
        Ok(MetricCurve {
            thresholds: first.thresholds.clone(),
            scores,
        })
    }
}

/// Center location error in pixels.
pub fn cle(pred: &BBox, gt: &BBox) -> f64 {
    (pred.cx - gt.cx).hypot(pred.cy - gt.cy)
}

fn check_pairs(preds: &[BBox], gts: &[BBox]) -> Result<()> {
    if preds.is_empty() {
        return Err(HiftError::Contract("no frames to evaluate".into()));
    }
    if preds.len() != gts.len() {
        return Err(HiftError::Contract(format!(
            "{} predictions for {} ground-truth boxes",
            preds.len(),
            gts.len()
        )));
    }
    Ok(())
}

fn fraction_by(values: &[f64], thresholds: Vec<f64>, hit: impl Fn(f64, f64) -> bool) -> MetricCurve {
    let n = values.len() as f64;
    let scores = thresholds
        .iter()
        .map(|&t| values.iter().filter(|&&v| hit(v, t)).count() as f64 / n)
        .collect();
    MetricCurve { thresholds, scores }
}

/// Fraction of frames with CLE within (`<=`) each pixel threshold.
pub fn precision_plot(preds: &[BBox], gts: &[BBox]) -> Result<MetricCurve> {
    check_pairs(preds, gts)?;
    let errs: Vec<f64> = preds.iter().zip(gts).map(|(p, g)| cle(p, g)).collect();
    Ok(fraction_by(&errs, precision_thresholds(), |e, t| e <= t))
}

/// Fraction of frames with IoU strictly beyond (`>`) each overlap threshold.
pub fn success_plot(preds: &[BBox], gts: &[BBox]) -> Result<MetricCurve> {
    check_pairs(preds, gts)?;
    let ious: Vec<f64> = preds.iter().zip(gts).map(|(p, g)| iou(p, g)).collect();
    Ok(fraction_by(&ious, success_thresholds(), |o, t| o > t))
}

/// Mean of the curve's scores over its threshold grid.
pub fn auc(curve: &MetricCurve) -> Result<f64> {
    if curve.scores.is_empty() || curve.scores.len() != curve.thresholds.len() {
        return Err(HiftError::Contract("malformed curve".into()));
    }
    Ok(curve.scores.iter().sum::<f64>() / curve.scores.len() as f64)
}

pub fn precision_at_20(curve: &MetricCurve) -> Result<f64> {
    curve
        .thresholds
        .iter()
        .position(|&t| t == 20.0)
        .map(|i| curve.scores[i])
        .ok_or_else(|| HiftError::Contract("precision curve has no 20 px threshold".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpeReport {
    pub precision: MetricCurve,
    pub success: MetricCurve,
    pub precision_at_20: f64,
    pub success_auc: f64,
}

impl OpeReport {
    pub fn from_curves(precision: MetricCurve, success: MetricCurve) -> Result<Self> {
        Ok(Self {
            precision_at_20: precision_at_20(&precision)?,
            success_auc: auc(&success)?,
            precision,
            success,
        })
    }

    pub fn evaluate(preds: &[BBox], gts: &[BBox]) -> Result<Self> {
        Self::from_curves(precision_plot(preds, gts)?, success_plot(preds, gts)?)
    }

    /// Averages per-sequence curves.
    pub fn aggregate(reports: &[OpeReport]) -> Result<Self> {
        let p: Vec<_> = reports.iter().map(|r| r.precision.clone()).collect();
        let s: Vec<_> = reports.iter().map(|r| r.success.clone()).collect();
        Self::from_curves(MetricCurve::mean(&p)?, MetricCurve::mean(&s)?)
    }

    /// One-line CSV summary with header.
    pub fn summary_csv(&self) -> String {
        format!(
            "precision@20,success_auc\n{},{}\n",
            self.precision_at_20, self.success_auc
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cle_pythagorean() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(3.0, 4.0, 5.0, 1.0);
        assert_eq!(cle(&a, &b), 5.0);
        assert_eq!(cle(&b, &a), 5.0);
        assert_eq!(cle(&a, &a), 0.0);
    }

    #[test]
    fn grids() {
        assert_eq!(precision_thresholds().len(), 51);
        let s = success_thresholds();
        assert_eq!(s.len(), 21);
        assert_eq!(s[20], 1.0);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(precision_plot(&[], &[]).is_err());
        let b = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert!(success_plot(&[b], &[b, b]).is_err());
    }

    #[test]
    fn missing_twenty_threshold() {
        let c = MetricCurve {
            thresholds: vec![0.0, 10.0],
            scores: vec![0.0, 1.0],
        };
        assert!(precision_at_20(&c).is_err());
    }

    #[test]
    fn constant_curves() {
        let ones = MetricCurve {
            thresholds: success_thresholds(),
            scores: vec![1.0; 21],
        };
        assert_eq!(auc(&ones).unwrap(), 1.0);
        let zeros = MetricCurve {
            thresholds: success_thresholds(),
            scores: vec![0.0; 21],
        };
        assert_eq!(auc(&zeros).unwrap(), 0.0);
    }
}
