//! Per-location training labels for the two classification branches and the
//! regression branch, with seeded subsampling of negatives.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bbox::BBox;
use crate::error::{HiftError, Result};

/// Placement of the score map over the search crop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapGeometry {
    pub width: usize,
    pub height: usize,
    /// Search-image pixels per map step.
    pub stride: f64,
    /// Pixel offset of the map origin inside the search crop.
    pub offset: f64,
}

impl MapGeometry {
    pub fn locations(&self) -> usize {
        self.width * self.height
    }

    /// Center of location `r` in search-crop pixels: `((r mod W) + 0.5) * stride + offset`.
    pub fn location_center(&self, r: usize) -> (f64, f64) {
        let x = (r % self.width) as f64;
        let y = (r / self.width) as f64;
        (
            (x + 0.5) * self.stride + self.offset,
            (y + 0.5) * self.stride + self.offset,
        )
    }

    /// Index of the central location (upper-left of the middle for even sides).
    pub fn center_index(&self) -> usize {
        ((self.height - 1) / 2) * self.width + (self.width - 1) / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LabelMode {
    /// Positive/ignore/negative rings by distance to the ground-truth center.
    Circular,
    /// In-box membership for both branches.
    Rectangle,
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Circular => "circular",
            LabelMode::Rectangle => "rectangle",
        })
    }
}

impl FromStr for LabelMode {
    type Err = HiftError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circular" => Ok(LabelMode::Circular),
            "rectangle" => Ok(LabelMode::Rectangle),
            other => Err(HiftError::Config(format!(
                "unknown label mode {other:?} (expected circular or rectangle)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelConfig {
    pub mode: LabelMode,
    /// Positive radius in map steps; capped at half the box's short side.
    pub r_pos_strides: f64,
    /// Ignore radius in map steps.
    pub r_ign_strides: f64,
    /// Retained negatives per in-box positive.
    pub neg_cap_ratio: f64,
    pub neg_cap_floor: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            mode: LabelMode::Circular,
            r_pos_strides: 2.0,
            r_ign_strides: 4.0,
            neg_cap_ratio: 3.0,
            neg_cap_floor: 16,
        }
    }
}

impl LabelConfig {
    /// Effective `(R_pos, R_ign)` in pixels for a given box.
    pub fn radii(&self, gt: &BBox, stride: f64) -> (f64, f64) {
        let r_pos = (self.r_pos_strides * stride).min(0.5 * gt.w.min(gt.h));
        let r_ign = (self.r_ign_strides * stride).max(r_pos);
        (r_pos, r_ign)
    }

    pub fn neg_cap(&self, positives: usize) -> usize {
        ((self.neg_cap_ratio * positives as f64).ceil() as usize).max(self.neg_cap_floor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cls2Label {
    Positive,
    Ignore,
    Negative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelMaps {
    pub geometry: MapGeometry,
    pub mode: LabelMode,
    /// In-box membership of each location center.
    pub cls1_positive: Vec<bool>,
    pub cls2: Vec<Cls2Label>,
    /// Signed `(l, t, r, b)` distances from each location center to the box sides, in pixels.
    pub reg_targets: Vec<[f64; 4]>,
    /// Negatives kept after subsampling. Never set on a positive.
    pub neg_keep: Vec<bool>,
    pub seed: u64,
    pub gt: BBox,
}

impl LabelMaps {
    pub fn len(&self) -> usize {
        self.cls1_positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cls1_positive.is_empty()
    }

    pub fn cls1_positives(&self) -> usize {
        self.cls1_positive.iter().filter(|&&p| p).count()
    }

    pub fn cls2_positives(&self) -> usize {
        self.cls2.iter().filter(|&&l| l == Cls2Label::Positive).count()
    }

    pub fn retained_negatives(&self) -> usize {
        self.neg_keep.iter().filter(|&&k| k).count()
    }

    /// Locations contributing to the first classification term, with their class.
    pub fn cls1_terms(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        (0..self.len()).filter_map(|i| {
            if self.cls1_positive[i] {
                Some((i, true))
            } else if self.neg_keep[i] {
                Some((i, false))
            } else {
                None
            }
        })
    }

    /// Locations contributing to the second classification term, with their class.
    pub fn cls2_terms(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        (0..self.len()).filter_map(|i| match self.cls2[i] {
            Cls2Label::Positive => Some((i, true)),
            Cls2Label::Negative if self.neg_keep[i] => Some((i, false)),
            _ => None,
        })
    }
}

/// Builds the label maps for `gt` (in search-crop pixels) on the given map.
pub fn make_labels(gt: &BBox, geometry: MapGeometry, config: &LabelConfig, seed: u64) -> Result<LabelMaps> {
    if !gt.is_valid() {
        return Err(HiftError::Contract(format!("invalid ground-truth box {gt:?}")));
    }
    let n = geometry.locations();
    let (r_pos, r_ign) = config.radii(gt, geometry.stride);
    let [x1, y1, x2, y2] = gt.corners();

    let mut cls1_positive = Vec::with_capacity(n);
    let mut cls2 = Vec::with_capacity(n);
    let mut reg_targets = Vec::with_capacity(n);
    for r in 0..n {
        let (px, py) = geometry.location_center(r);
        let inside = gt.contains(px, py);
        cls1_positive.push(inside);
        reg_targets.push([px - x1, py - y1, x2 - px, y2 - py]);
        let label = match config.mode {
            LabelMode::Rectangle if inside => Cls2Label::Positive,
            LabelMode::Rectangle => Cls2Label::Negative,
            LabelMode::Circular => {
                let d = (px - gt.cx).hypot(py - gt.cy);
                if d <= r_pos {
                    Cls2Label::Positive
                } else if d <= r_ign {
                    Cls2Label::Ignore
                } else {
                    Cls2Label::Negative
                }
            }
        };
        cls2.push(label);
    }

    if !cls2.contains(&Cls2Label::Positive) {
        return Err(HiftError::DegenerateLabels(format!(
            "box {gt:?} covers no location center within radius {r_pos:.3}"
        )));
    }

    let candidates: Vec<usize> = (0..n).filter(|&i| !cls1_positive[i]).collect();
    let positives = cls1_positive.iter().filter(|&&p| p).count();
    let cap = config.neg_cap(positives);
    let mut neg_keep = vec![false; n];
    if candidates.len() <= cap {
        for &i in &candidates {
            neg_keep[i] = true;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in rand::seq::index::sample(&mut rng, candidates.len(), cap) {
            neg_keep[candidates[j]] = true;
        }
    }

    Ok(LabelMaps {
        geometry,
        mode: config.mode,
        cls1_positive,
        cls2,
        reg_targets,
        neg_keep,
        seed,
        gt: *gt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom8() -> MapGeometry {
        MapGeometry {
            width: 8,
            height: 8,
            stride: 8.0,
            offset: 0.0,
        }
    }

    #[test]
    fn centered_gt_marks_its_location_positive() {
        let g = geom8();
        let (cx, cy) = g.location_center(27);
        let labels = make_labels(&BBox::new(cx, cy, 20.0, 20.0), g, &LabelConfig::default(), 7).unwrap();
        assert_eq!(labels.cls2[27], Cls2Label::Positive);
        assert!(labels.cls1_positive[27]);
    }

    #[test]
    fn full_cover_has_no_negatives() {
        let g = geom8();
        let labels = make_labels(&BBox::new(32.0, 32.0, 200.0, 200.0), g, &LabelConfig::default(), 7).unwrap();
        assert!(labels.cls1_positive.iter().all(|&p| p));
        assert_eq!(labels.retained_negatives(), 0);
    }

    #[test]
    fn tiny_offgrid_box_is_degenerate() {
        let g = geom8();
        // Between location centers 4 and 12 on both axes.
        let err = make_labels(&BBox::new(8.0, 8.0, 2.0, 2.0), g, &LabelConfig::default(), 1);
        assert!(matches!(err, Err(HiftError::DegenerateLabels(_))));
    }

    #[test]
    fn negatives_capped_and_never_positive() {
        let g = geom8();
        let cfg = LabelConfig::default();
        let labels = make_labels(&BBox::new(30.0, 30.0, 12.0, 12.0), g, &cfg, 11).unwrap();
        let cap = cfg.neg_cap(labels.cls1_positives());
        assert_eq!(labels.retained_negatives(), cap);
        for i in 0..labels.len() {
            if labels.neg_keep[i] {
                assert!(!labels.cls1_positive[i]);
                assert_ne!(labels.cls2[i], Cls2Label::Positive);
            }
        }
    }

    #[test]
    fn rectangle_mode_duplicates_membership() {
        let g = geom8();
        let cfg = LabelConfig {
            mode: LabelMode::Rectangle,
            ..Default::default()
        };
        let labels = make_labels(&BBox::new(30.0, 26.0, 30.0, 14.0), g, &cfg, 3).unwrap();
        for i in 0..labels.len() {
            assert_eq!(labels.cls1_positive[i], labels.cls2[i] == Cls2Label::Positive);
        }
    }
}
