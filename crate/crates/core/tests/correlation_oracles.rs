use hift_core::kernels::xcorr;
use hift_core::model::{Model, ModelConfig};
use hift_core::Tensor;
use hift_testkit::checks;
use proptest::prelude::*;

#[test]
fn xcorr_matches_brute_force() {
    let o = checks::xcorr(0..20);
    assert_eq!(o.instances, 20);
    assert!(o.max_err <= 1e-9, "{o:?}");
}

#[test]
fn projection_matches_transcription() {
    let o = checks::project_and_flatten(0..12);
    assert!(o.max_err <= 1e-9, "{o:?}");
}

fn impulse(c: usize, h: usize, w: usize, y: usize, x: usize) -> Tensor {
    let mut t = Tensor::zeros(&[c, h, w]);
    for ch in 0..c {
        t.data_mut()[(ch * h + y) * w + x] = 1.0 + ch as f64;
    }
    t
}

fn peak(map: &Tensor) -> (usize, usize) {
    let (h, w) = (map.shape()[1], map.shape()[2]);
    let first = &map.data()[..h * w];
    let i = first
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > first[best] { i } else { best });
    (i / w, i % w)
}

#[test]
fn impulse_peak_follows_translation() {
    let template = impulse(2, 3, 3, 1, 1);
    let base = peak(&xcorr(&template, &impulse(2, 11, 11, 4, 4)).unwrap());
    assert_eq!(base, (3, 3));
    for (dy, dx) in [(0, 1), (2, -1), (-3, 3), (4, 0)] {
        let s = impulse(2, 11, 11, (4 + dy) as usize, (4 + dx) as usize);
        let p = peak(&xcorr(&template, &s).unwrap());
        assert_eq!(p, ((3 + dy) as usize, (3 + dx) as usize));
    }
}

#[test]
fn desk_maps_share_shape() {
    let model = Model::new(ModelConfig::default(), 0).unwrap();
    let mut g = hift_core::Graph::new();
    let t = Tensor::zeros(&[3, 64, 64]);
    let s = Tensor::zeros(&[3, 128, 128]);
    let out = model.forward_pair(&mut g, &t, &s).unwrap();
    for m in [out.maps.m3, out.maps.m4, out.maps.m5] {
        assert_eq!(g.shape(m), &[17 * 17, 64]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn xcorr_is_linear_in_the_search(seed in 0u64..1000, a in -3.0f64..3.0) {
        use rand::SeedableRng;
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = Tensor::randn(&[3, 2, 3], 1.0, &mut r);
        let s1 = Tensor::randn(&[3, 6, 7], 1.0, &mut r);
        let s2 = Tensor::randn(&[3, 6, 7], 1.0, &mut r);
        let mixed = Tensor::new(s1.shape(), s1.data().iter().zip(s2.data()).map(|(x, y)| a * x + y).collect()).unwrap();
        let lhs = xcorr(&t, &mixed).unwrap();
        let (o1, o2) = (xcorr(&t, &s1).unwrap(), xcorr(&t, &s2).unwrap());
        for ((l, x), y) in lhs.data().iter().zip(o1.data()).zip(o2.data()) {
            prop_assert!((l - (a * x + y)).abs() <= 1e-9);
        }
    }
}
