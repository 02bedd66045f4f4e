use hift_core::bbox::BBox;
use hift_core::checkpoint;
use hift_core::image::Image;
use hift_core::model::{Model, ModelConfig, Prediction};
use hift_core::synth::{gen_suite, Difficulty};
use hift_core::tracker::{
    argmax, clamp_to_frame, cosine_window, fuse_scores, template_side, CropWindow, Tracker, TrackerConfig,
};
use hift_core::HiftError;
use proptest::prelude::*;

fn prediction(n: usize, model: &Model) -> Prediction {
    Prediction {
        geometry: model.geometry(),
        cls1_pos: (0..n).map(|i| (i as f64 * 0.37).sin().abs()).collect(),
        cls2_prob: (0..n).map(|i| (i as f64 * 0.11).cos().abs()).collect(),
        sides: vec![[4.0; 4]; n],
    }
}

#[test]
fn fusion_endpoints() {
    let model = Model::new(ModelConfig::tiny(), 0).unwrap();
    let p = prediction(36, &model);
    let w = cosine_window(6, 6);
    assert_eq!(fuse_scores(&p, &w, 0.0), p.confidence());
    assert_eq!(fuse_scores(&p, &w, 1.0), w);
}

#[test]
fn context_side_for_a_square() {
    // p = 0.5 * (w + h) = 10 for a 10x10 box, so the side is 20.
    assert!((template_side(10.0, 10.0, 0.5) - 20.0).abs() < 1e-12);
}

#[test]
fn checkpoint_restores_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.hift");
    let model = Model::new(ModelConfig::tiny(), 4).unwrap();
    checkpoint::save(&model.params, &path).unwrap();
    let mut other = Model::new(ModelConfig::tiny(), 5).unwrap();
    other.params = checkpoint::load(&path).unwrap();

    let seq = &gen_suite(1, 77, Difficulty::Easy, 4).unwrap()[0];
    let run = |m: &Model| {
        Tracker::new(m, TrackerConfig::default())
            .unwrap()
            .run(&seq.frames, &seq.groundtruth[0], |_, _| {})
            .unwrap()
    };
    assert_eq!(run(&model), run(&other));
}

#[test]
fn tracking_is_deterministic_and_stays_in_frame() {
    let model = Model::new(ModelConfig::tiny(), 2).unwrap();
    let seq = &gen_suite(1, 5, Difficulty::Training, 8).unwrap()[0];
    let tracker = Tracker::new(&model, TrackerConfig::default()).unwrap();
    let mut maps = Vec::new();
    let a = tracker
        .run(&seq.frames, &seq.groundtruth[0], |i, s| maps.push((i, s.to_vec())))
        .unwrap();
    let b = tracker.run(&seq.frames, &seq.groundtruth[0], |_, _| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0], seq.groundtruth[0]);
    assert_eq!(maps.len(), seq.frames.len() - 1);
    let (w, h) = (seq.frames[0].width as f64, seq.frames[0].height as f64);
    for b in &a[1..] {
        let [x1, y1, x2, y2] = b.corners();
        assert!(x1 >= 0.0 && y1 >= 0.0 && x2 <= w && y2 <= h, "{b}");
    }
}

#[test]
fn init_rejects_boxes_outside_the_frame() {
    let model = Model::new(ModelConfig::tiny(), 0).unwrap();
    let tracker = Tracker::new(&model, TrackerConfig::default()).unwrap();
    let frame = Image::filled(64, 64, [10, 20, 30]);
    for b in [BBox::new(100.0, 10.0, 5.0, 5.0), BBox::new(10.0, 10.0, 0.0, 5.0)] {
        assert!(matches!(tracker.init(&frame, &b), Err(HiftError::Contract(_))));
    }
}

#[test]
fn invalid_tracker_settings_are_rejected() {
    let model = Model::new(ModelConfig::tiny(), 0).unwrap();
    let cfg = TrackerConfig {
        window_influence: 1.5,
        ..TrackerConfig::default()
    };
    assert!(Tracker::new(&model, cfg).is_err());
}

proptest! {
    #[test]
    fn cosine_window_is_symmetric_and_bounded(w in 1usize..25, h in 1usize..25) {
        let win = cosine_window(w, h);
        prop_assert_eq!(win.len(), w * h);
        for y in 0..h {
            for x in 0..w {
                let v = win[y * w + x];
                prop_assert!(v > 0.0 && v <= 1.0);
                prop_assert!((v - win[y * w + (w - 1 - x)]).abs() < 1e-12);
                prop_assert!((v - win[(h - 1 - y) * w + x]).abs() < 1e-12);
            }
        }
        let peak = win[argmax(&win)];
        prop_assert!(win.iter().all(|&v| v <= peak));
    }

    #[test]
    fn clamped_boxes_fit(cx in -50.0f64..150.0, cy in -50.0f64..150.0, bw in 0.1f64..300.0, bh in 0.1f64..300.0) {
        let b = clamp_to_frame(&BBox::new(cx, cy, bw, bh), 100, 80);
        let [x1, y1, x2, y2] = b.corners();
        prop_assert!(b.is_valid());
        prop_assert!(x1 >= -1e-9 && y1 >= -1e-9 && x2 <= 100.0 + 1e-9 && y2 <= 80.0 + 1e-9);
    }

    #[test]
    fn crop_mapping_round_trips(cx in 0.0f64..200.0, cy in 0.0f64..200.0, side in 10.0f64..300.0, bx in 0.0f64..200.0, bw in 1.0f64..50.0) {
        let win = CropWindow { cx, cy, side, out: 128 };
        let b = BBox::new(bx, 100.0 - bx / 3.0, bw, bw * 0.7);
        let back = win.crop_to_frame(&win.frame_to_crop(&b));
        prop_assert!((back.cx - b.cx).abs() < 1e-9 && (back.cy - b.cy).abs() < 1e-9);
        prop_assert!((back.w - b.w).abs() < 1e-9 && (back.h - b.h).abs() < 1e-9);
    }
}
