//! Frame-by-threshold indicator counting for the one-pass metrics.

/// Boxes as `(cx, cy, w, h)`.
pub type Rect = (f64, f64, f64, f64);

pub fn overlap(a: Rect, b: Rect) -> f64 {
    let ix = ((a.0 + a.2 / 2.0).min(b.0 + b.2 / 2.0) - (a.0 - a.2 / 2.0).max(b.0 - b.2 / 2.0)).max(0.0);
    let iy = ((a.1 + a.3 / 2.0).min(b.1 + b.3 / 2.0) - (a.1 - a.3 / 2.0).max(b.1 - b.3 / 2.0)).max(0.0);
    let inter = ix * iy;
    (inter / (a.2 * a.3 + b.2 * b.3 - inter)).min(1.0)
}

/// Mean over every (frame, threshold) pair of `IoU > threshold`, thresholds
/// `0, 0.05, ..., 1`.
pub fn success_auc(preds: &[Rect], gts: &[Rect]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for i in 0..=20 {
        let t = i as f64 * 0.05;
        for (p, g) in preds.iter().zip(gts) {
            if overlap(*p, *g) > t {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total as f64
}

/// Fraction of frames whose center error is at most `threshold` pixels.
pub fn precision_at(preds: &[Rect], gts: &[Rect], threshold: f64) -> f64 {
    let mut hits = 0usize;
    for (p, g) in preds.iter().zip(gts) {
        let d = ((p.0 - g.0).powi(2) + (p.1 - g.1).powi(2)).sqrt();
        if d <= threshold {
            hits += 1;
        }
    }
    hits as f64 / preds.len() as f64
}
