use hift_core::bbox::{iou, BBox};
use hift_core::graph::Graph;
use hift_core::heads::HeadOutputs;
use hift_core::labels::{make_labels, Cls2Label, LabelConfig, LabelMode, MapGeometry};
use hift_core::loss::{hift_loss, LossWeights};
use hift_core::{HiftError, Tensor};
use hift_testkit::checks;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geometry() -> MapGeometry {
    MapGeometry {
        width: 8,
        height: 8,
        stride: 4.0,
        offset: 2.0,
    }
}

#[test]
fn circular_labels_match_brute_force() {
    let (mismatches, compared) = checks::labels(0..100, LabelMode::Circular);
    assert_eq!(mismatches, 0);
    assert!(compared >= 90, "only {compared} usable geometries");
}

#[test]
fn rectangle_labels_match_brute_force() {
    let (mismatches, compared) = checks::labels(0..100, LabelMode::Rectangle);
    assert_eq!(mismatches, 0);
    assert!(compared >= 90, "only {compared} usable geometries");
}

#[test]
fn seed_only_moves_retained_negatives() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut moved = false;
    for _ in 0..40 {
        let (geom, gt) = checks::random_label_case(&mut r);
        let cfg = LabelConfig::default();
        let (Ok(a), Ok(b)) = (make_labels(&gt, geom, &cfg, 1), make_labels(&gt, geom, &cfg, 2)) else {
            continue;
        };
        assert_eq!(a.cls1_positive, b.cls1_positive);
        assert_eq!(a.cls2, b.cls2);
        assert_eq!(a.reg_targets, b.reg_targets);
        assert_eq!(a.retained_negatives(), b.retained_negatives());
        moved |= a.neg_keep != b.neg_keep;
    }
    assert!(moved, "no geometry was large enough to subsample");
}

#[test]
fn centered_box_marks_its_location_positive() {
    let g = geometry();
    let r = 3 * 8 + 5;
    let (cx, cy) = g.location_center(r);
    let l = make_labels(&BBox::new(cx, cy, 12.0, 12.0), g, &LabelConfig::default(), 0).unwrap();
    assert_eq!(l.cls2[r], Cls2Label::Positive);
}

#[test]
fn covering_box_has_no_negatives() {
    let l = make_labels(
        &BBox::new(18.0, 18.0, 200.0, 200.0),
        geometry(),
        &LabelConfig::default(),
        0,
    )
    .unwrap();
    assert!(l.cls1_positive.iter().all(|&p| p));
    assert_eq!(l.retained_negatives(), 0);
}

#[test]
fn tiny_off_grid_box_is_degenerate() {
    let err = make_labels(&BBox::new(6.0, 6.0, 0.5, 0.5), geometry(), &LabelConfig::default(), 0);
    assert!(matches!(err, Err(HiftError::DegenerateLabels(_))));
}

#[test]
fn iou_area_arithmetic() {
    let a = BBox::from_corners(0.0, 0.0, 10.0, 10.0);
    let b = BBox::from_corners(5.0, 0.0, 15.0, 10.0);
    assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(iou(&a, &a), 1.0);
    assert_eq!(iou(&a, &BBox::from_corners(20.0, 20.0, 30.0, 30.0)), 0.0);
}

#[test]
fn loss_matches_scalar_transcription() {
    let o = checks::loss(0..20);
    assert!(o.max_err <= 1e-9, "{o:?}");
}

fn heads_for(g: &mut Graph, n: usize, cls1: f64, cls2: f64, reg: f64) -> HeadOutputs {
    let mut c1 = Tensor::zeros(&[n, 2]);
    c1.data_mut().iter_mut().step_by(2).for_each(|v| *v = cls1);
    HeadOutputs {
        cls1: g.constant(c1),
        cls2: g.constant(Tensor::full(&[n, 1], cls2)),
        reg: g.constant(Tensor::full(&[n, 4], reg)),
    }
}

#[test]
fn zero_weights_give_zero_loss() {
    let labels = make_labels(
        &BBox::new(18.0, 18.0, 14.0, 10.0),
        geometry(),
        &LabelConfig::default(),
        0,
    )
    .unwrap();
    let mut g = Graph::new();
    let heads = heads_for(&mut g, 64, 0.3, -0.2, 1.5);
    let w = LossWeights {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
    };
    let terms = hift_loss(&mut g, &heads, &labels, &w).unwrap();
    assert_eq!(g.value(terms.total).item(), 0.0);
}

#[test]
fn saturated_perfect_predictions_approach_zero() {
    let gt = BBox::new(18.0, 18.0, 14.0, 10.0);
    let geom = geometry();
    let labels = make_labels(&gt, geom, &LabelConfig::default(), 0).unwrap();
    let n = geom.locations();
    let mut c1 = Tensor::zeros(&[n, 2]);
    let mut c2 = Tensor::zeros(&[n, 1]);
    let mut reg = Tensor::ones(&[n, 4]);
    for i in 0..n {
        let s = if labels.cls1_positive[i] { 40.0 } else { -40.0 };
        c1.data_mut()[2 * i + 1] = s;
        c2.data_mut()[i] = if labels.cls2[i] == Cls2Label::Positive {
            40.0
        } else {
            -40.0
        };
        if labels.cls2[i] == Cls2Label::Positive {
            for k in 0..4 {
                reg.data_mut()[4 * i + k] = labels.reg_targets[i][k] / geom.stride;
            }
        }
    }
    let mut g = Graph::new();
    let heads = HeadOutputs {
        cls1: g.constant(c1),
        cls2: g.constant(c2),
        reg: g.constant(reg),
    };
    let terms = hift_loss(&mut g, &heads, &labels, &LossWeights::default()).unwrap();
    assert!(g.value(terms.total).item() < 1e-12);
}

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0f64..100.0, 0.0f64..100.0, 1.0f64..60.0, 1.0f64..60.0).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((iou(&a, &a) - 1.0).abs() <= 1e-12);
        if a != b {
            prop_assert!(v < 1.0);
        }
    }

    #[test]
    fn label_invariants(seed in 0u64..100_000, circular in any::<bool>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (geom, gt) = checks::random_label_case(&mut r);
        let mode = if circular { LabelMode::Circular } else { LabelMode::Rectangle };
        let cfg = LabelConfig { mode, ..LabelConfig::default() };
        if let Ok(l) = make_labels(&gt, geom, &cfg, seed) {
            let (r_pos, _) = cfg.radii(&gt, geom.stride);
            prop_assert!(l.retained_negatives() <= cfg.neg_cap(l.cls1_positives()));
            for i in 0..l.len() {
                let positive = l.cls2[i] == Cls2Label::Positive;
                if positive {
                    prop_assert!(l.cls1_positive[i]);
                    prop_assert!(!l.neg_keep[i]);
                }
                if circular {
                    let (x, y) = geom.location_center(i);
                    let d = ((x - gt.cx).powi(2) + (y - gt.cy).powi(2)).sqrt();
                    prop_assert_eq!(positive, d <= r_pos);
                }
            }
        }
    }

    #[test]
    fn loss_is_non_negative(seed in 0u64..10_000) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (geom, gt) = checks::random_label_case(&mut r);
        if let Ok(labels) = make_labels(&gt, geom, &LabelConfig::default(), seed) {
            let n = geom.locations();
            let mut g = Graph::new();
            let heads = HeadOutputs {
                cls1: g.constant(Tensor::randn(&[n, 2], 3.0, &mut r)),
                cls2: g.constant(Tensor::randn(&[n, 1], 3.0, &mut r)),
                reg: g.constant(Tensor::randn(&[n, 4], 0.5, &mut r).map(f64::exp)),
            };
            let terms = hift_loss(&mut g, &heads, &labels, &LossWeights::default()).unwrap();
            prop_assert!(g.value(terms.total).item() >= 0.0);
        }
    }
}
