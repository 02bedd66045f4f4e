//! Straight-line transcriptions of the attention, encoder, modulation and
//! decoder equations.

use crate::mat::{add, add_bias, hadamard, layer_norm, matmul, relu, Mat};

/// Attention weights and output, computed entry by entry with scalar loops.
pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> (Mat, Mat) {
    let c = q[0].len() as f64;
    let mut weights = Vec::with_capacity(q.len());
    let mut out = Vec::with_capacity(q.len());
    for qi in q {
        let scores: Vec<f64> = k
            .iter()
            .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / c.sqrt())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for s in &scores {
            denom += (s - max).exp();
        }
        let w: Vec<f64> = scores.iter().map(|s| (s - max).exp() / denom).collect();
        let mut row = vec![0.0; v[0].len()];
        for (j, vj) in v.iter().enumerate() {
            for (r, x) in row.iter_mut().zip(vj) {
                *r += w[j] * x;
            }
        }
        weights.push(w);
        out.push(row);
    }
    (weights, out)
}

#[derive(Clone, Debug)]
pub struct Ffn {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl Ffn {
    pub fn apply(&self, x: &Mat) -> Mat {
        let h = relu(&add_bias(&matmul(x, &self.w1), &self.b1));
        add_bias(&matmul(&h, &self.w2), &self.b2)
    }
}

#[derive(Clone, Debug)]
pub struct Norm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Norm {
    pub fn apply(&self, x: &Mat) -> Mat {
        layer_norm(x, &self.gain, &self.bias)
    }
}

/// Per-head `(W_q, W_k, W_v)` plus the output projection.
#[derive(Clone, Debug)]
pub struct Mha {
    pub heads: Vec<[Mat; 3]>,
    pub wc: Mat,
}

impl Mha {
    /// Each head is evaluated separately and the results are laid side by side.
    pub fn apply(&self, q: &Mat, k: &Mat, v: &Mat) -> Mat {
        let mut cat: Mat = vec![Vec::new(); q.len()];
        for [wq, wk, wv] in &self.heads {
            let (_, a) = attention(&matmul(q, wq), &matmul(k, wk), &matmul(v, wv));
            for (row, part) in cat.iter_mut().zip(a) {
                row.extend(part);
            }
        }
        matmul(&cat, &self.wc)
    }
}

#[derive(Clone, Debug)]
pub struct Modulation {
    pub fuse_w: Mat,
    pub fuse_b: Vec<f64>,
    pub gate: Ffn,
    pub gamma: f64,
}

impl Modulation {
    /// Returns `(output, W')`.
    pub fn apply(&self, me3: &Mat, m4p: &Mat) -> (Mat, Mat) {
        let cat: Mat = me3
            .iter()
            .zip(m4p)
            .map(|(a, b)| a.iter().chain(b).copied().collect())
            .collect();
        let fused = add_bias(&matmul(&cat, &self.fuse_w), &self.fuse_b);
        let cols = m4p[0].len();
        let mut gap = vec![0.0; cols];
        for row in m4p {
            for (g, x) in gap.iter_mut().zip(row) {
                *g += x / m4p.len() as f64;
            }
        }
        let gate = self.gate.apply(&vec![gap])[0].clone();
        let w_prime: Mat = fused
            .iter()
            .map(|row| row.iter().zip(&gate).map(|(a, b)| a * b).collect())
            .collect();
        let prod = hadamard(&w_prime, me3);
        let out = me3
            .iter()
            .zip(&prod)
            .map(|(a, p)| a.iter().zip(p).map(|(x, y)| x + self.gamma * y).collect())
            .collect();
        (out, w_prime)
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub norm1: Norm,
    pub attn: Mha,
    pub norm2: Norm,
    pub modulation: Option<Modulation>,
    pub ffn: Ffn,
    pub norm3: Norm,
}

impl Encoder {
    pub fn apply(&self, m3: &Mat, m4: &Mat, pe: &Mat) -> Mat {
        let m3p = add(m3, pe);
        let m4p = add(m4, pe);
        let me1 = self.norm1.apply(&add(&m3p, &m4p));
        let me2 = self.attn.apply(&me1, &me1, &m3p);
        let me3 = self.norm2.apply(&add(&m3p, &me2));
        let me4 = match &self.modulation {
            Some(m) => m.apply(&me3, &m4p).0,
            None => me3,
        };
        self.norm3.apply(&add(&self.ffn.apply(&me4), &me4))
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub self_attn: Mha,
    pub norm1: Norm,
    pub cross_attn: Mha,
    pub norm2: Norm,
    pub ffn: Ffn,
    pub norm3: Norm,
}

impl DecoderLayer {
    pub fn apply(&self, x: &Mat, memory: &Mat) -> Mat {
        let x = self.norm1.apply(&add(x, &self.self_attn.apply(x, x, x)));
        let x = self.norm2.apply(&add(&x, &self.cross_attn.apply(&x, memory, memory)));
        self.norm3.apply(&add(&x, &self.ffn.apply(&x)))
    }
}

pub fn decode(layers: &[DecoderLayer], query: &Mat, memory: &Mat) -> Mat {
    layers.iter().fold(query.clone(), |x, l| l.apply(&x, memory))
}
