use std::fmt;

/// Axis-aligned box in pixels, stored in center form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    /// From top-left corner, width and height (`x,y,w,h` benchmark form).
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h]
    }

    pub fn corners(&self) -> [f64; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        ]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    /// Closed-box membership test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [x1, y1, x2, y2] = self.corners();
        x >= x1 && x <= x2 && y >= y1 && y <= y2
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let [ax1, ay1, ax2, ay2] = self.corners();
        let [bx1, by1, bx2, by2] = other.corners();
        let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
        let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
        iw * ih
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, w, h] = self.to_xywh();
        write!(f, "{x:.4},{y:.4},{w:.4},{h:.4}")
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_and_disjoint() {
        let a = BBox::new(10.0, 10.0, 4.0, 6.0);
        assert_eq!(iou(&a, &a), 1.0);
        let b = BBox::new(40.0, 10.0, 4.0, 6.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn half_shifted_square() {
        let a = BBox::from_corners(0.0, 0.0, 10.0, 10.0);
        let b = BBox::from_corners(5.0, 0.0, 15.0, 10.0);
        assert!((iou(&a, &b) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn corner_form_round_trip() {
        let b = BBox::from_xywh(3.0, 4.0, 10.0, 20.0);
        assert_eq!(b.to_xywh(), [3.0, 4.0, 10.0, 20.0]);
        assert_eq!(b.corners(), [3.0, 4.0, 13.0, 24.0]);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, iou(&b, &a));
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }
    }
}
