use hift_core::graph::Graph;
use hift_core::kernels::{conv2d, layer_norm, softmax_rows};
use hift_core::param::ParamStore;
use hift_core::{HiftError, Tensor};
use hift_testkit::checks;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn row(v: &[f64]) -> Tensor {
    Tensor::new(&[1, v.len()], v.to_vec()).unwrap()
}

#[test]
fn softmax_equal_logits_is_uniform() {
    let s = softmax_rows(&row(&[0.0, 0.0, 0.0, 0.0])).unwrap();
    assert_eq!(s.data(), &[0.25; 4]);
}

#[test]
fn softmax_is_stable_for_large_logits() {
    let s = softmax_rows(&row(&[1000.0, 0.0])).unwrap();
    assert!(s.all_finite());
    assert!((s.data()[0] - 1.0).abs() < 1e-12 && s.data()[1] < 1e-300);
}

#[test]
fn softmax_matches_hand_exponentials() {
    // e^k / (e + e^2 + e^3), evaluated separately.
    let want = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219];
    let s = softmax_rows(&row(&[1.0, 2.0, 3.0])).unwrap();
    for (a, b) in s.data().iter().zip(want) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn softmax_rejects_non_matrix() {
    let x = Tensor::zeros(&[2, 2, 2]);
    assert!(matches!(softmax_rows(&x), Err(HiftError::Shape(_))));
}

#[test]
fn layer_norm_constant_row_is_zero() {
    let out = layer_norm(&row(&[3.0; 5]), &Tensor::ones(&[5]), &Tensor::zeros(&[5])).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn layer_norm_matches_direct_mean_and_variance() {
    // mean 2.5, biased variance 1.25, eps 1e-5.
    let want = [
        -1.3416354199689269,
        -0.447211806656309,
        0.447211806656309,
        1.3416354199689269,
    ];
    let out = layer_norm(&row(&[1.0, 2.0, 3.0, 4.0]), &Tensor::ones(&[4]), &Tensor::zeros(&[4])).unwrap();
    for (a, b) in out.data().iter().zip(want) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
}

#[test]
fn layer_norm_length_mismatch() {
    let err = layer_norm(&row(&[1.0, 2.0]), &Tensor::ones(&[3]), &Tensor::zeros(&[3]));
    assert!(matches!(err, Err(HiftError::Shape(_))));
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::randn(&[1, 3, 4, 5], 1.0, &mut rng);
    let mut w = Tensor::zeros(&[3, 3, 1, 1]);
    for c in 0..3 {
        w.data_mut()[c * 3 + c] = 1.0;
    }
    let y = conv2d(&x, &w, &Tensor::zeros(&[3]), 1, 0).unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv_zero_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = Tensor::randn(&[2, 2, 5, 5], 1.0, &mut rng);
    let y = conv2d(&x, &Tensor::zeros(&[4, 2, 3, 3]), &Tensor::zeros(&[4]), 2, 1).unwrap();
    assert_eq!(y.shape(), [2, 4, 3, 3]);
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv_matches_naive_loops_on_fixed_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::randn(&[1, 2, 5, 5], 1.0, &mut rng);
    let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
    let b = Tensor::randn(&[3], 1.0, &mut rng);
    let y = conv2d(&x, &w, &b, 1, 0).unwrap();
    let (want, oh, ow) = hift_testkit::conv::conv2d(x.data(), (1, 2, 5, 5), w.data(), (3, 3), b.data(), 1, 0);
    assert_eq!((oh, ow), (3, 3));
    let err = y
        .data()
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10);
}

#[test]
fn conv_matches_naive_loops_on_random_cases() {
    let o = checks::conv2d(0..30);
    assert!(o.max_err < 1e-10, "{o:?}");
}

#[test]
fn conv_channel_mismatch() {
    let x = Tensor::zeros(&[1, 2, 5, 5]);
    let w = Tensor::zeros(&[1, 3, 3, 3]);
    assert!(matches!(
        conv2d(&x, &w, &Tensor::zeros(&[1]), 1, 0),
        Err(HiftError::Shape(_))
    ));
}

#[test]
fn backward_requires_scalar() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::ones(&[2, 2]));
    let mut g = Graph::new();
    let n = g.param(&store, p);
    assert!(matches!(g.backward(n, &mut store), Err(HiftError::Contract(_))));
}

#[test]
fn zero_grad_clears_everything() {
    let mut store = ParamStore::new();
    let p = store.add("p", Tensor::ones(&[3]));
    let mut g = Graph::new();
    let n = g.param(&store, p);
    let s = g.sum(n);
    g.backward(s, &mut store).unwrap();
    assert_eq!(store.get(p).grad.data(), &[1.0; 3]);
    store.zero_grad();
    assert!(store
        .iter()
        .all(|q| q.grad.data().iter().all(|&v| v == 0.0) && q.grad.shape() == q.value.shape()));
}

#[test]
fn operations_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Tensor::randn(&[1, 3, 9, 9], 1.0, &mut rng);
    let w = Tensor::randn(&[4, 3, 3, 3], 1.0, &mut rng);
    let b = Tensor::randn(&[4], 1.0, &mut rng);
    let a = conv2d(&x, &w, &b, 2, 1).unwrap();
    let c = conv2d(&x, &w, &b, 2, 1).unwrap();
    assert!(a.data().iter().zip(c.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

fn matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..6, 1usize..9).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-50.0f64..50.0, r * c)))
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions((r, c, data) in matrix()) {
        let s = softmax_rows(&Tensor::new(&[r, c], data).unwrap()).unwrap();
        for i in 0..r {
            let row = s.row(i);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn layer_norm_standardizes_rows((r, c, data) in matrix()) {
        prop_assume!(c >= 2);
        let x = Tensor::new(&[r, c], data).unwrap();
        let out = layer_norm(&x, &Tensor::ones(&[c]), &Tensor::zeros(&[c])).unwrap();
        for i in 0..r {
            let xr = x.row(i);
            let m = xr.iter().sum::<f64>() / c as f64;
            let v = xr.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / c as f64;
            prop_assume!(v > 1e-2);
            let row = out.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / c as f64;
            prop_assert!(mean.abs() <= 1e-7);
            // The epsilon inside the square root pulls the variance slightly below 1.
            prop_assert!((var * (v + 1e-5) / v - 1.0).abs() <= 1e-7);
        }
    }

    #[test]
    fn finite_inputs_give_finite_outputs((r, c, data) in matrix()) {
        let x = Tensor::new(&[r, c], data).unwrap();
        prop_assert!(softmax_rows(&x).unwrap().all_finite());
        prop_assert!(hift_core::kernels::log_softmax_rows(&x).unwrap().all_finite());
        prop_assert!(layer_norm(&x, &Tensor::ones(&[c]), &Tensor::zeros(&[c])).unwrap().all_finite());
    }
}
