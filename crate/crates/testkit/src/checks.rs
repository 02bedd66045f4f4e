//! Library-versus-oracle comparisons on seeded random instances. Each check
//! returns the number of instances and the worst discrepancy found.

use std::ops::Range;

use hift_core::bbox::BBox;
use hift_core::correlation::{flatten_locations, Correlation};
use hift_core::graph::Graph;
use hift_core::heads::HeadOutputs;
use hift_core::kernels;
use hift_core::labels::{make_labels, Cls2Label, LabelConfig, LabelMode, MapGeometry};
use hift_core::loss::{hift_loss, LossWeights};
use hift_core::metrics;
use hift_core::param::{ParamId, ParamStore};
use hift_core::transformer::{self as tf, AttentionParams, Transformer, TransformerConfig, Variant};
use hift_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::labels::{brute_force, Grid, Ring};
use crate::mat::{from_flat, max_diff, Mat};
use crate::transformer as oracle;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub instances: usize,
    pub max_err: f64,
}

impl Outcome {
    fn over(seeds: Range<u64>, mut f: impl FnMut(u64) -> f64) -> Self {
        let mut max_err: f64 = 0.0;
        let mut instances = 0;
        for s in seeds {
            max_err = max_err.max(f(s));
            instances += 1;
        }
        Self { instances, max_err }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn to_mat(t: &Tensor) -> Mat {
    let (r, c) = t.dims2().expect("rank-2 tensor");
    from_flat(r, c, t.data())
}

pub fn param_mat(store: &ParamStore, id: ParamId) -> Mat {
    to_mat(store.value(id))
}

pub fn param_vec(store: &ParamStore, id: ParamId) -> Vec<f64> {
    store.value(id).data().to_vec()
}

pub fn conv2d(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let n = r.random_range(1..3);
        let c = r.random_range(1..4);
        let o = r.random_range(1..4);
        let k = r.random_range(1..4);
        let stride = r.random_range(1..3);
        let pad = r.random_range(0..2);
        let h = r.random_range(k..k + 6);
        let w = r.random_range(k..k + 6);
        let x = Tensor::randn(&[n, c, h, w], 1.0, &mut r);
        let wt = Tensor::randn(&[o, c, k, k], 1.0, &mut r);
        let b = Tensor::randn(&[o], 1.0, &mut r);
        let got = kernels::conv2d(&x, &wt, &b, stride, pad).unwrap();
        let (want, oh, ow) = crate::conv::conv2d(x.data(), (n, c, h, w), wt.data(), (o, k), b.data(), stride, pad);
        assert_eq!(got.shape(), [n, o, oh, ow]);
        max_abs(got.data(), &want)
    })
}

pub fn xcorr(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let c = r.random_range(1..4);
        let (th, tw) = (r.random_range(1..4), r.random_range(1..4));
        let (sh, sw) = (th + r.random_range(0..5), tw + r.random_range(0..5));
        let t = Tensor::randn(&[c, th, tw], 1.0, &mut r);
        let x = Tensor::randn(&[c, sh, sw], 1.0, &mut r);
        let got = kernels::xcorr(&t, &x).unwrap();
        max_abs(
            got.data(),
            &crate::conv::xcorr(t.data(), (c, th, tw), x.data(), (sh, sw)),
        )
    })
}

/// Projection plus flattening against a gather using `row = y * W + x`.
pub fn project_and_flatten(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let (cf, c, h, w) = (
            r.random_range(1..5),
            r.random_range(1..5),
            r.random_range(1..5),
            r.random_range(1..5),
        );
        let mut store = ParamStore::new();
        let corr = Correlation::new([cf, cf, cf], c, &mut store, &mut r);
        let (wid, bid) = corr.projection(0);
        store.get_mut(bid).value = Tensor::randn(&[c], 1.0, &mut r);
        let raw = Tensor::randn(&[cf, h, w], 1.0, &mut r);
        let mut g = Graph::new();
        let node = g.constant(raw.clone());
        let out = corr.project_and_flatten(&mut g, &store, 0, node).unwrap();
        let got = g.value(out).clone();
        let wm = param_mat(&store, wid);
        let bias = param_vec(&store, bid);
        let mut err: f64 = 0.0;
        for y in 0..h {
            for x in 0..w {
                let row = y * w + x;
                for j in 0..c {
                    let mut v = bias[j];
                    for (i, wi) in wm.iter().enumerate().take(cf) {
                        v += raw.data()[(i * h + y) * w + x] * wi[j];
                    }
                    err = err.max((got.at2(row, j) - v).abs());
                }
            }
        }
        let flat = flatten_locations(&raw).unwrap();
        for y in 0..h {
            for x in 0..w {
                for i in 0..cf {
                    err = err.max((flat.at2(y * w + x, i) - raw.data()[(i * h + y) * w + x]).abs());
                }
            }
        }
        err
    })
}

pub fn attention(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let (nq, nk, c, cv) = (
            r.random_range(1..6),
            r.random_range(1..6),
            r.random_range(1..6),
            r.random_range(1..6),
        );
        let q = Tensor::randn(&[nq, c], 1.5, &mut r);
        let k = Tensor::randn(&[nk, c], 1.5, &mut r);
        let v = Tensor::randn(&[nk, cv], 1.0, &mut r);
        let mut g = Graph::new();
        let (qn, kn, vn) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
        let wn = tf::attention_weights(&mut g, qn, kn).unwrap();
        let on = tf::attention(&mut g, qn, kn, vn).unwrap();
        let (ww, wo) = oracle::attention(&to_mat(&q), &to_mat(&k), &to_mat(&v));
        max_diff(&to_mat(g.value(wn)), &ww).max(max_diff(&to_mat(g.value(on)), &wo))
    })
}

fn mha_oracle(p: &AttentionParams, store: &ParamStore) -> oracle::Mha {
    oracle::Mha {
        heads: p.heads.iter().map(|ids| ids.map(|id| param_mat(store, id))).collect(),
        wc: param_mat(store, p.out),
    }
}

/// Multi-head attention against a head-by-head unrolled evaluation.
pub fn multi_head(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let heads = [1, 2, 4][r.random_range(0..3)];
        let c = heads * r.random_range(1..3);
        let n = r.random_range(1..6);
        let mut store = ParamStore::new();
        let p = AttentionParams::new("a", c, heads, &mut store, &mut r).unwrap();
        let (q, k, v) = (
            Tensor::randn(&[n, c], 1.0, &mut r),
            Tensor::randn(&[n + 1, c], 1.0, &mut r),
            Tensor::randn(&[n + 1, c], 1.0, &mut r),
        );
        let mut g = Graph::new();
        let (qn, kn, vn) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
        let out = p.forward(&mut g, &store, qn, kn, vn).unwrap();
        let want = mha_oracle(&p, &store).apply(&to_mat(&q), &to_mat(&k), &to_mat(&v));
        max_diff(&to_mat(g.value(out)), &want)
    })
}

/// A small transformer whose normalization and bias parameters are
/// perturbed away from their identity initialization.
pub fn random_transformer(
    seed: u64,
    variant: Variant,
    locations: usize,
    channels: usize,
    heads: usize,
) -> (Transformer, ParamStore) {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let cfg = TransformerConfig {
        heads,
        variant,
        ..TransformerConfig::new(channels)
    };
    let t = Transformer::new(cfg, locations, &mut store, &mut r).unwrap();
    for p in store.iter_mut() {
        let shape = p.value.shape().to_vec();
        if p.name.ends_with("gain") {
            p.value = Tensor::uniform(&shape, 0.5, 1.5, &mut r);
        } else if p.name.ends_with("bias") || p.name.ends_with(".b1") || p.name.ends_with(".b2") {
            p.value = Tensor::randn(&shape, 0.3, &mut r);
        } else if p.name.ends_with("gamma") {
            p.value = Tensor::scalar(r.random_range(0.2..1.0));
        }
    }
    (t, store)
}

fn ffn_oracle(f: &tf::FeedForward, store: &ParamStore) -> oracle::Ffn {
    oracle::Ffn {
        w1: param_mat(store, f.w1),
        b1: param_vec(store, f.b1),
        w2: param_mat(store, f.w2),
        b2: param_vec(store, f.b2),
    }
}

fn norm_oracle(n: &tf::NormParams, store: &ParamStore) -> oracle::Norm {
    oracle::Norm {
        gain: param_vec(store, n.gain),
        bias: param_vec(store, n.bias),
    }
}

pub fn modulation_oracle(t: &Transformer, store: &ParamStore) -> Option<oracle::Modulation> {
    t.modulation.as_ref().map(|m| oracle::Modulation {
        fuse_w: param_mat(store, m.fuse_w),
        fuse_b: param_vec(store, m.fuse_b),
        gate: ffn_oracle(&m.gate, store),
        gamma: store.value(m.gamma).item(),
    })
}

pub fn encoder_oracle(t: &Transformer, store: &ParamStore) -> oracle::Encoder {
    oracle::Encoder {
        norm1: norm_oracle(&t.enc_norm1, store),
        attn: mha_oracle(&t.enc_attn, store),
        norm2: norm_oracle(&t.enc_norm2, store),
        modulation: modulation_oracle(t, store),
        ffn: ffn_oracle(&t.enc_ffn, store),
        norm3: norm_oracle(&t.enc_norm3, store),
    }
}

pub fn decoder_oracle(t: &Transformer, store: &ParamStore) -> Vec<oracle::DecoderLayer> {
    t.decoder
        .iter()
        .map(|l| oracle::DecoderLayer {
            self_attn: mha_oracle(&l.self_attn, store),
            norm1: norm_oracle(&l.norm1, store),
            cross_attn: mha_oracle(&l.cross_attn, store),
            norm2: norm_oracle(&l.norm2, store),
            ffn: ffn_oracle(&l.ffn, store),
            norm3: norm_oracle(&l.norm3, store),
        })
        .collect()
}

pub fn modulation(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let (t, store) = random_transformer(s, Variant::Hft, 4 + (s as usize % 5), 4, 2);
        let mut r = rng(s ^ 0xABCD);
        let n = t.locations;
        let me3 = Tensor::randn(&[n, 4], 1.0, &mut r);
        let m4p = Tensor::randn(&[n, 4], 1.0, &mut r);
        let mut g = Graph::new();
        let (a, b) = (g.constant(me3.clone()), g.constant(m4p.clone()));
        let (out, w) = Transformer::modulate(t.modulation.as_ref().unwrap(), &mut g, &store, a, b).unwrap();
        let (want, want_w) = modulation_oracle(&t, &store)
            .unwrap()
            .apply(&to_mat(&me3), &to_mat(&m4p));
        max_diff(&to_mat(g.value(out)), &want).max(max_diff(&to_mat(g.value(w)), &want_w))
    })
}

pub fn encoder(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let variant = if s % 2 == 0 { Variant::Hft } else { Variant::Ft };
        let (t, store) = random_transformer(s, variant, 4, 4, 2);
        let mut r = rng(s ^ 0x1234);
        let m3 = Tensor::randn(&[4, 4], 1.0, &mut r);
        let m4 = Tensor::randn(&[4, 4], 1.0, &mut r);
        let mut g = Graph::new();
        let (a, b) = (g.constant(m3.clone()), g.constant(m4.clone()));
        let out = t.encode(&mut g, &store, a, b).unwrap().out;
        let want = encoder_oracle(&t, &store).apply(&to_mat(&m3), &to_mat(&m4), &param_mat(&store, t.pe));
        max_diff(&to_mat(g.value(out)), &want)
    })
}

pub fn decoder(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let (t, store) = random_transformer(s, Variant::Hft, 5, 4, 2);
        let mut r = rng(s ^ 0x5678);
        let m5 = Tensor::randn(&[5, 4], 1.0, &mut r);
        let mem = Tensor::randn(&[5, 4], 1.0, &mut r);
        let mut g = Graph::new();
        let (a, b) = (g.constant(m5.clone()), g.constant(mem.clone()));
        let out = t.decode(&mut g, &store, a, b).unwrap();
        let want = oracle::decode(&decoder_oracle(&t, &store), &to_mat(&m5), &to_mat(&mem));
        max_diff(&to_mat(g.value(out)), &want)
    })
}

/// Row sums of attention weights on random and extreme-valued inputs.
pub fn attention_row_sums(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let (nq, nk, c) = (r.random_range(1..30), r.random_range(1..30), r.random_range(1..8));
        let scale = [1.0, 10.0, 300.0][s as usize % 3];
        let q = Tensor::randn(&[nq, c], scale, &mut r);
        let k = Tensor::randn(&[nk, c], scale, &mut r);
        let mut g = Graph::new();
        let (qn, kn) = (g.constant(q), g.constant(k));
        let w = tf::attention_weights(&mut g, qn, kn).unwrap();
        let wv = g.value(w);
        (0..nq)
            .map(|i| (wv.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    })
}

/// Largest deviation of the single-key and equal-key cases from their exact
/// answers.
pub fn attention_degenerate(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let (nq, c, cv) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..6));
        let q = Tensor::randn(&[nq, c], 1.0, &mut r);
        let mut g = Graph::new();
        let qn = g.constant(q);
        // One key: every query returns the single value row.
        let k1 = g.constant(Tensor::randn(&[1, c], 1.0, &mut r));
        let v1t = Tensor::randn(&[1, cv], 1.0, &mut r);
        let v1 = g.constant(v1t.clone());
        let o1 = tf::attention(&mut g, qn, k1, v1).unwrap();
        let mut err: f64 = 0.0;
        for i in 0..nq {
            err = err.max(max_abs(g.value(o1).row(i), v1t.data()));
        }
        // Identical keys: every output row is the mean of the value rows.
        let nk = r.random_range(2..6);
        let key = Tensor::randn(&[1, c], 1.0, &mut r);
        let keys: Vec<f64> = (0..nk).flat_map(|_| key.data().to_vec()).collect();
        let kn = g.constant(Tensor::new(&[nk, c], keys).unwrap());
        let vt = Tensor::randn(&[nk, cv], 1.0, &mut r);
        let vn = g.constant(vt.clone());
        let on = tf::attention(&mut g, qn, kn, vn).unwrap();
        let mean: Vec<f64> = (0..cv)
            .map(|j| (0..nk).map(|i| vt.at2(i, j)).sum::<f64>() / nk as f64)
            .collect();
        for i in 0..nq {
            err = err.max(max_abs(g.value(on).row(i), &mean));
        }
        err
    })
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let (_, c) = t.dims2().unwrap();
    let data = perm.iter().flat_map(|&p| t.row(p).to_vec()).collect();
    Tensor::new(&[perm.len(), c], data).unwrap()
}

fn random_perm(n: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    rand::seq::index::sample(r, n, n).into_vec()
}

/// Max deviation between `decode(P m5, P mem)` and `P decode(m5, mem)`.
pub fn decode_equivariance(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let n = 9;
        let (t, store) = random_transformer(s, Variant::Hft, n, 8, 2);
        let mut r = rng(s ^ 0x9999);
        let m5 = Tensor::randn(&[n, 8], 1.0, &mut r);
        let mem = Tensor::randn(&[n, 8], 1.0, &mut r);
        let perm = random_perm(n, &mut r);
        let mut g = Graph::new();
        let (a, b) = (g.constant(m5.clone()), g.constant(mem.clone()));
        let base = t.decode(&mut g, &store, a, b).unwrap();
        let (pa, pb) = (
            g.constant(permute_rows(&m5, &perm)),
            g.constant(permute_rows(&mem, &perm)),
        );
        let permuted = t.decode(&mut g, &store, pa, pb).unwrap();
        permute_rows(g.value(base), &perm).max_abs_diff(g.value(permuted))
    })
}

/// Largest output change of the encoder when `m3` and `m4` are permuted
/// jointly while the positional table stays put, searched over a few
/// permutations. A value well above round-off shows the table is applied.
pub fn pe_breaks_equivariance(seed: u64) -> f64 {
    let n = 9;
    let (t, store) = random_transformer(seed, Variant::Hft, n, 8, 2);
    let mut r = rng(seed ^ 0x7777);
    let m3 = Tensor::randn(&[n, 8], 1.0, &mut r);
    let m4 = Tensor::randn(&[n, 8], 1.0, &mut r);
    let mut g = Graph::new();
    let (a, b) = (g.constant(m3.clone()), g.constant(m4.clone()));
    let base = t.encode(&mut g, &store, a, b).unwrap().out;
    let mut best: f64 = 0.0;
    for _ in 0..5 {
        let perm = random_perm(n, &mut r);
        let (pa, pb) = (
            g.constant(permute_rows(&m3, &perm)),
            g.constant(permute_rows(&m4, &perm)),
        );
        let out = t.encode(&mut g, &store, pa, pb).unwrap().out;
        best = best.max(permute_rows(g.value(base), &perm).max_abs_diff(g.value(out)));
    }
    best
}

/// Same comparison with the positional table zeroed, where joint permutation
/// must commute with the encoder.
pub fn encoder_equivariance_without_pe(seed: u64) -> f64 {
    let n = 9;
    let (t, mut store) = random_transformer(seed, Variant::Hft, n, 8, 2);
    store.get_mut(t.pe).value = Tensor::zeros(&[n, 8]);
    let mut r = rng(seed ^ 0x7777);
    let m3 = Tensor::randn(&[n, 8], 1.0, &mut r);
    let m4 = Tensor::randn(&[n, 8], 1.0, &mut r);
    let perm = random_perm(n, &mut r);
    let mut g = Graph::new();
    let (a, b) = (g.constant(m3.clone()), g.constant(m4.clone()));
    let base = t.encode(&mut g, &store, a, b).unwrap().out;
    let (pa, pb) = (
        g.constant(permute_rows(&m3, &perm)),
        g.constant(permute_rows(&m4, &perm)),
    );
    let out = t.encode(&mut g, &store, pa, pb).unwrap().out;
    permute_rows(g.value(base), &perm).max_abs_diff(g.value(out))
}

/// Whether `modulate` with a zero residual weight returns its input bit for bit.
pub fn modulation_identity_at_zero(seed: u64) -> bool {
    let (t, mut store) = random_transformer(seed, Variant::Hft, 6, 8, 2);
    let m = t.modulation.as_ref().unwrap();
    store.get_mut(m.gamma).value = Tensor::scalar(0.0);
    let mut r = rng(seed ^ 0x4242);
    let me3 = Tensor::randn(&[6, 8], 3.0, &mut r);
    let m4p = Tensor::randn(&[6, 8], 3.0, &mut r);
    let mut g = Graph::new();
    let (a, b) = (g.constant(me3.clone()), g.constant(m4p));
    let (out, _) = Transformer::modulate(m, &mut g, &store, a, b).unwrap();
    g.value(out)
        .data()
        .iter()
        .zip(me3.data())
        .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// A random map geometry and a box that overlaps it.
pub fn random_label_case(r: &mut ChaCha8Rng) -> (MapGeometry, BBox) {
    let geom = MapGeometry {
        width: r.random_range(2..12),
        height: r.random_range(2..12),
        stride: [4.0, 8.0, 6.0][r.random_range(0..3)],
        offset: r.random_range(0.0..20.0),
    };
    let span_x = geom.width as f64 * geom.stride;
    let span_y = geom.height as f64 * geom.stride;
    let gt = BBox::new(
        geom.offset + r.random_range(0.0..span_x),
        geom.offset + r.random_range(0.0..span_y),
        r.random_range(0.5..1.2) * span_x,
        r.random_range(0.5..1.2) * span_y,
    );
    (geom, gt)
}

/// Count of label disagreements with the brute-force oracle, and the number
/// of instances that produced labels at all.
pub fn labels(seeds: Range<u64>, mode: LabelMode) -> (usize, usize) {
    let mut mismatches = 0;
    let mut compared = 0;
    for s in seeds {
        let mut r = rng(s);
        let (geom, gt) = random_label_case(&mut r);
        let cfg = LabelConfig {
            mode,
            ..LabelConfig::default()
        };
        let want = brute_force(
            (gt.cx, gt.cy, gt.w, gt.h),
            Grid {
                width: geom.width,
                height: geom.height,
                stride: geom.stride,
                offset: geom.offset,
            },
            cfg.r_pos_strides,
            cfg.r_ign_strides,
            mode == LabelMode::Rectangle,
        );
        let any_positive = want.iter().any(|l| l.ring == Ring::Positive);
        let got = match make_labels(&gt, geom, &cfg, s) {
            Ok(l) => l,
            Err(_) => {
                if any_positive {
                    mismatches += 1;
                }
                continue;
            }
        };
        compared += 1;
        if !any_positive {
            mismatches += 1;
            continue;
        }
        let in_box = want.iter().filter(|l| l.in_box).count();
        let candidates = want.len() - in_box;
        let cap = ((cfg.neg_cap_ratio * in_box as f64).ceil() as usize).max(cfg.neg_cap_floor);
        if got.retained_negatives() != candidates.min(cap) {
            mismatches += 1;
        }
        for (i, w) in want.iter().enumerate() {
            let ring = match got.cls2[i] {
                Cls2Label::Positive => Ring::Positive,
                Cls2Label::Ignore => Ring::Ignore,
                Cls2Label::Negative => Ring::Negative,
            };
            if got.cls1_positive[i] != w.in_box
                || ring != w.ring
                || got.reg_targets[i] != w.ltrb
                || (got.neg_keep[i] && w.in_box)
            {
                mismatches += 1;
            }
        }
    }
    (mismatches, compared)
}

pub fn loss(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let (geom, gt) = loop {
            let (geom, gt) = random_label_case(&mut r);
            let mode = if r.random_bool(0.5) {
                LabelMode::Circular
            } else {
                LabelMode::Rectangle
            };
            let cfg = LabelConfig {
                mode,
                ..LabelConfig::default()
            };
            if let Ok(l) = make_labels(&gt, geom, &cfg, s) {
                break (geom, l);
            }
        };
        let labels = gt;
        let n = geom.locations();
        let cls1 = Tensor::randn(&[n, 2], 2.0, &mut r);
        let cls2 = Tensor::randn(&[n, 1], 2.0, &mut r);
        let reg = Tensor::randn(&[n, 4], 0.5, &mut r).map(f64::exp);
        let weights = LossWeights {
            lambda1: r.random_range(0.0..2.0),
            lambda2: r.random_range(0.0..2.0),
            lambda3: r.random_range(0.0..2.0),
        };
        let mut g = Graph::new();
        let heads = HeadOutputs {
            cls1: g.constant(cls1.clone()),
            cls2: g.constant(cls2.clone()),
            reg: g.constant(reg.clone()),
        };
        let terms = hift_loss(&mut g, &heads, &labels, &weights).unwrap();
        let corners = labels.gt.corners();
        let locs: Vec<crate::loss::LocationTerms> = (0..n)
            .map(|i| crate::loss::LocationTerms {
                cls1_logits: [cls1.at2(i, 0), cls1.at2(i, 1)],
                cls2_logit: cls2.at2(i, 0),
                reg: [reg.at2(i, 0), reg.at2(i, 1), reg.at2(i, 2), reg.at2(i, 3)],
                in_box: labels.cls1_positive[i],
                ring: match labels.cls2[i] {
                    Cls2Label::Positive => Ring::Positive,
                    Cls2Label::Ignore => Ring::Ignore,
                    Cls2Label::Negative => Ring::Negative,
                },
                keep_negative: labels.neg_keep[i],
                center: geom.location_center(i),
                gt: corners,
            })
            .collect();
        let (total, ce, bce, iou) =
            crate::loss::loss(&locs, geom.stride, [weights.lambda1, weights.lambda2, weights.lambda3]);
        (g.value(terms.total).item() - total)
            .abs()
            .max((terms.cls1 - ce).abs())
            .max((terms.cls2 - bce).abs())
            .max((terms.loc - iou).abs())
    })
}

/// Random prediction/ground-truth box lists, with some exact matches and
/// some far misses so both ends of the curves are exercised.
pub fn random_tracks(r: &mut ChaCha8Rng) -> (Vec<BBox>, Vec<BBox>) {
    let n = r.random_range(1..40);
    let mut preds = Vec::with_capacity(n);
    let mut gts = Vec::with_capacity(n);
    for _ in 0..n {
        let g = BBox::new(
            r.random_range(0.0..200.0),
            r.random_range(0.0..200.0),
            r.random_range(5.0..60.0),
            r.random_range(5.0..60.0),
        );
        let p = match r.random_range(0..4) {
            0 => g,
            1 => BBox::new(g.cx + 300.0, g.cy, g.w, g.h),
            _ => BBox::new(
                g.cx + r.random_range(-25.0..25.0),
                g.cy + r.random_range(-25.0..25.0),
                g.w * r.random_range(0.6..1.4),
                g.h * r.random_range(0.6..1.4),
            ),
        };
        preds.push(p);
        gts.push(g);
    }
    (preds, gts)
}

fn rects(b: &[BBox]) -> Vec<crate::metrics::Rect> {
    b.iter().map(|b| (b.cx, b.cy, b.w, b.h)).collect()
}

pub fn success_auc(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let (p, g) = random_tracks(&mut r);
        let got = metrics::auc(&metrics::success_plot(&p, &g).unwrap()).unwrap();
        (got - crate::metrics::success_auc(&rects(&p), &rects(&g))).abs()
    })
}

pub fn precision_at_20(seeds: Range<u64>) -> Outcome {
    Outcome::over(seeds, |s| {
        let mut r = rng(s);
        let (p, g) = random_tracks(&mut r);
        let got = metrics::precision_at_20(&metrics::precision_plot(&p, &g).unwrap()).unwrap();
        (got - crate::metrics::precision_at(&rects(&p), &rects(&g), 20.0)).abs()
    })
}
