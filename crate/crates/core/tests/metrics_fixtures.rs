use hift_core::bbox::BBox;
use hift_core::metrics::{self, OpeReport};
use hift_testkit::checks;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Four frames counted by hand.
///
/// | frame | center error | IoU   |
/// |-------|--------------|-------|
/// | 0     | 0            | 1     |
/// | 1     | 5            | 0.5   |
/// | 2     | 20           | 0     |
/// | 3     | 30           | 0     |
fn fixture() -> (Vec<BBox>, Vec<BBox>) {
    let gts = vec![BBox::new(50.0, 50.0, 10.0, 10.0); 4];
    let preds = vec![
        BBox::new(50.0, 50.0, 10.0, 10.0),
        BBox::new(50.0, 45.0, 10.0, 20.0),
        BBox::new(70.0, 50.0, 10.0, 10.0),
        BBox::new(50.0, 80.0, 10.0, 10.0),
    ];
    (preds, gts)
}

#[test]
fn hand_counted_precision_curve() {
    let (p, g) = fixture();
    let curve = metrics::precision_plot(&p, &g).unwrap();
    for (t, s) in curve.thresholds.iter().zip(&curve.scores) {
        let want = match *t as usize {
            0..=4 => 0.25,
            5..=19 => 0.5,
            20..=29 => 0.75,
            _ => 1.0,
        };
        assert_eq!(*s, want, "threshold {t}");
    }
    assert_eq!(metrics::precision_at_20(&curve).unwrap(), 0.75);
}

#[test]
fn hand_counted_success_curve() {
    let (p, g) = fixture();
    let curve = metrics::success_plot(&p, &g).unwrap();
    // Frame 1 has IoU exactly 0.5, which does not pass the strict 0.5 threshold.
    let want: Vec<f64> = (0..=20)
        .map(|i| match i {
            0..=9 => 0.5,
            10..=19 => 0.25,
            _ => 0.0,
        })
        .collect();
    assert_eq!(curve.scores, want);
    assert_eq!(metrics::auc(&curve).unwrap(), (10.0 * 0.5 + 10.0 * 0.25) / 21.0);
}

#[test]
fn linear_success_curve_has_half_area() {
    let curve = metrics::MetricCurve {
        thresholds: metrics::success_thresholds(),
        scores: (0..=20).map(|i| 1.0 - i as f64 / 20.0).collect(),
    };
    assert!((metrics::auc(&curve).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn perfect_track_scores_one_except_the_last_threshold() {
    let (_, g) = fixture();
    let r = OpeReport::evaluate(&g, &g).unwrap();
    assert_eq!(r.precision_at_20, 1.0);
    assert!((r.success_auc - 20.0 / 21.0).abs() < 1e-15);
}

#[test]
fn auc_matches_indicator_mean() {
    let o = checks::success_auc(0..30);
    assert!(o.max_err <= 1e-9, "{o:?}");
}

#[test]
fn precision_matches_direct_count() {
    let o = checks::precision_at_20(0..30);
    assert_eq!(o.max_err, 0.0, "{o:?}");
}

#[test]
fn mismatched_lengths_are_rejected() {
    let (p, g) = fixture();
    assert!(metrics::precision_plot(&p[..3], &g).is_err());
    assert!(metrics::success_plot(&[], &[]).is_err());
}

proptest! {
    #[test]
    fn curves_are_monotone(seed in 0u64..100_000) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (p, g) = checks::random_tracks(&mut r);
        let prec = metrics::precision_plot(&p, &g).unwrap();
        let succ = metrics::success_plot(&p, &g).unwrap();
        prop_assert!(prec.scores.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(succ.scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn frame_order_does_not_matter(seed in 0u64..100_000, rot in 0usize..40) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (mut p, mut g) = checks::random_tracks(&mut r);
        let a = OpeReport::evaluate(&p, &g).unwrap();
        let k = rot % p.len();
        p.rotate_left(k);
        g.rotate_left(k);
        let b = OpeReport::evaluate(&p, &g).unwrap();
        prop_assert_eq!(a.precision.scores, b.precision.scores);
        prop_assert_eq!(a.success.scores, b.success.scores);
    }
}
