//! Hierarchical feature transformer: one encoder layer that fuses the two
//! shallower similarity maps (with a learnable positional table and the
//! modulation layer) and a stack of decoder layers that query the deepest
//! map without positional encoding.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{ensure_shape, HiftError, Result};
use crate::graph::{Graph, NodeId};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Transformer arrangement, mirroring the ablation taxonomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Full hierarchical transformer with the modulation layer.
    Hft,
    /// Feature-map queries, no modulation layer.
    Ft,
    /// Standard transformer with learned object queries and no modulation.
    Ot,
    /// No transformer; heads read the deepest similarity map directly.
    None,
}

impl Variant {
    pub fn uses_transformer(self) -> bool {
        self != Variant::None
    }

    pub fn uses_modulation(self) -> bool {
        self == Variant::Hft
    }

    pub fn uses_object_queries(self) -> bool {
        self == Variant::Ot
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Hft => "hft",
            Variant::Ft => "ft",
            Variant::Ot => "ot",
            Variant::None => "none",
        })
    }
}

impl FromStr for Variant {
    type Err = HiftError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hft" => Ok(Variant::Hft),
            "ft" => Ok(Variant::Ft),
            "ot" => Ok(Variant::Ot),
            "none" => Ok(Variant::None),
            other => Err(HiftError::Config(format!(
                "unknown transformer variant {other:?} (expected hft, ft, ot or none)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerConfig {
    pub channels: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub decoder_layers: usize,
    pub variant: Variant,
    /// Adds the positional table to the decoder input as well.
    pub decoder_pe: bool,
    /// Initial standard deviation of the positional table.
    pub pe_init_std: f64,
}

impl TransformerConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            heads: 4,
            ffn_hidden: 2 * channels,
            decoder_layers: 2,
            variant: Variant::Hft,
            decoder_pe: false,
            pe_init_std: 0.1,
        }
    }

    pub fn head_width(&self) -> Result<usize> {
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(HiftError::Config(format!(
                "{} heads do not divide {} channels",
                self.heads, self.channels
            )));
        }
        Ok(self.channels / self.heads)
    }
}

/// Scaled dot-product attention weights `softmax(Q K^T / sqrt(c))`, where `c`
/// is the width of `Q`.
pub fn attention_weights(g: &mut Graph, q: NodeId, k: NodeId) -> Result<NodeId> {
    let (_, cq) = g.value(q).dims2()?;
    let (_, ck) = g.value(k).dims2()?;
    ensure_shape!(cq == ck, "query width {cq} != key width {ck}");
    let scores = g.matmul_nt(q, k)?;
    let scaled = g.scale(scores, 1.0 / (cq as f64).sqrt());
    g.softmax_rows(scaled)
}

/// `softmax(Q K^T / sqrt(c)) V`.
pub fn attention(g: &mut Graph, q: NodeId, k: NodeId, v: NodeId) -> Result<NodeId> {
    let (nk, _) = g.value(k).dims2()?;
    let (nv, _) = g.value(v).dims2()?;
    ensure_shape!(nk == nv, "{nk} keys but {nv} values");
    let w = attention_weights(g, q, k)?;
    g.matmul(w, v)
}

fn linear(g: &mut Graph, store: &ParamStore, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
    let wn = g.param(store, w);
    let bn = g.param(store, b);
    let y = g.matmul(x, wn)?;
    g.add_row(y, bn)
}

#[derive(Clone, Debug)]
pub struct AttentionParams {
    /// Per head: query, key and value projections, each `C x C_d`.
    pub heads: Vec<[ParamId; 3]>,
    /// Output projection `C x C`.
    pub out: ParamId,
    pub channels: usize,
    pub head_width: usize,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        channels: usize,
        heads: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || !channels.is_multiple_of(heads) {
            return Err(HiftError::Config(format!(
                "{heads} heads do not divide {channels} channels"
            )));
        }
        let cd = channels / heads;
        let heads = (0..heads)
            .map(|j| {
                ["q", "k", "v"].map(|role| store.add_xavier(format!("{prefix}.head{j}.w_{role}"), channels, cd, rng))
            })
            .collect();
        let out = store.add_xavier(format!("{prefix}.w_out"), channels, channels, rng);
        Ok(Self {
            heads,
            out,
            channels,
            head_width: cd,
        })
    }

    /// `Cat(a^1..a^N) W_c` with `a^j = Att(Q W1^j, K W2^j, V W3^j)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, q: NodeId, k: NodeId, v: NodeId) -> Result<NodeId> {
        for x in [q, k, v] {
            let (_, c) = g.value(x).dims2()?;
            ensure_shape!(c == self.channels, "attention input width {c} != {}", self.channels);
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        for &[wq, wk, wv] in &self.heads {
            let wq = g.param(store, wq);
            let wk = g.param(store, wk);
            let wv = g.param(store, wv);
            let qh = g.matmul(q, wq)?;
            let kh = g.matmul(k, wk)?;
            let vh = g.matmul(v, wv)?;
            outs.push(attention(g, qh, kh, vh)?);
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat_cols(&outs)?
        };
        let wc = g.param(store, self.out);
        g.matmul(cat, wc)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl NormParams {
    fn new(prefix: &str, channels: usize, store: &mut ParamStore) -> Self {
        Self {
            gain: store.add_ones(format!("{prefix}.gain"), &[channels]),
            bias: store.add_zeros(format!("{prefix}.bias"), &[channels]),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Two-layer perceptron with ReLU, applied row-wise.
#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl FeedForward {
    fn new<R: Rng + ?Sized>(
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: store.add_kaiming(format!("{prefix}.w1"), &[input, hidden], input, rng),
            b1: store.add_zeros(format!("{prefix}.b1"), &[hidden]),
            w2: store.add_xavier(format!("{prefix}.w2"), hidden, output, rng),
            b2: store.add_zeros(format!("{prefix}.b2"), &[output]),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let h = linear(g, store, x, self.w1, self.b1)?;
        let h = g.relu(h);
        linear(g, store, h, self.w2, self.b2)
    }
}

#[derive(Clone, Debug)]
pub struct ModulationParams {
    /// 1x1 projection of the channel concatenation, `2C x C`.
    pub fuse_w: ParamId,
    pub fuse_b: ParamId,
    /// Channel gate computed from the pooled shallow map.
    pub gate: FeedForward,
    /// Scalar residual weight, initialized to zero.
    pub gamma: ParamId,
}

/// Intermediate encoder quantities, kept for inspection and tests.
#[derive(Clone, Copy, Debug)]
pub struct EncoderTrace {
    pub m3p: NodeId,
    pub m4p: NodeId,
    pub me1: NodeId,
    pub me2: NodeId,
    pub me3: NodeId,
    pub me4: NodeId,
    /// Modulation weight `W'`, when the modulation layer is active.
    pub w_prime: Option<NodeId>,
    pub out: NodeId,
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub self_attn: AttentionParams,
    pub norm1: NormParams,
    pub cross_attn: AttentionParams,
    pub norm2: NormParams,
    pub ffn: FeedForward,
    pub norm3: NormParams,
}

impl DecoderLayer {
    /// Post-norm layer: self-attention, cross-attention over `memory`, FFN.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, memory: NodeId) -> Result<NodeId> {
        let sa = self.self_attn.forward(g, store, x, x, x)?;
        let x = g.add(x, sa)?;
        let x = self.norm1.forward(g, store, x)?;
        let ca = self.cross_attn.forward(g, store, x, memory, memory)?;
        let x = g.add(x, ca)?;
        let x = self.norm2.forward(g, store, x)?;
        let f = self.ffn.forward(g, store, x)?;
        let x = g.add(x, f)?;
        self.norm3.forward(g, store, x)
    }
}

#[derive(Clone, Debug)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub locations: usize,
    pub pe: ParamId,
    pub enc_norm1: NormParams,
    pub enc_attn: AttentionParams,
    pub enc_norm2: NormParams,
    pub modulation: Option<ModulationParams>,
    pub enc_ffn: FeedForward,
    pub enc_norm3: NormParams,
    pub decoder: Vec<DecoderLayer>,
    /// Learned object queries (object-query variant only).
    pub queries: Option<ParamId>,
}

impl Transformer {
    pub fn new<R: Rng + ?Sized>(
        config: TransformerConfig,
        locations: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        if !config.variant.uses_transformer() {
            return Err(HiftError::Config("variant `none` has no transformer".into()));
        }
        let c = config.channels;
        let n = config.heads;
        config.head_width()?;
        let pe = store.add(
            "transformer.pe",
            Tensor::randn(&[locations, c], config.pe_init_std, rng),
        );
        let enc_norm1 = NormParams::new("transformer.enc.norm1", c, store);
        let enc_attn = AttentionParams::new("transformer.enc.attn", c, n, store, rng)?;
        let enc_norm2 = NormParams::new("transformer.enc.norm2", c, store);
        let modulation = config.variant.uses_modulation().then(|| ModulationParams {
            fuse_w: store.add_xavier("transformer.mod.fuse.weight", 2 * c, c, rng),
            fuse_b: store.add_zeros("transformer.mod.fuse.bias", &[c]),
            gate: FeedForward::new("transformer.mod.gate", c, config.ffn_hidden, c, store, rng),
            gamma: store.add_zeros("transformer.mod.gamma", &[1]),
        });
        let enc_ffn = FeedForward::new("transformer.enc.ffn", c, config.ffn_hidden, c, store, rng);
        let enc_norm3 = NormParams::new("transformer.enc.norm3", c, store);
        let mut decoder = Vec::with_capacity(config.decoder_layers);
        for l in 0..config.decoder_layers {
            let p = format!("transformer.dec{l}");
            decoder.push(DecoderLayer {
                self_attn: AttentionParams::new(&format!("{p}.self_attn"), c, n, store, rng)?,
                norm1: NormParams::new(&format!("{p}.norm1"), c, store),
                cross_attn: AttentionParams::new(&format!("{p}.cross_attn"), c, n, store, rng)?,
                norm2: NormParams::new(&format!("{p}.norm2"), c, store),
                ffn: FeedForward::new(&format!("{p}.ffn"), c, config.ffn_hidden, c, store, rng),
                norm3: NormParams::new(&format!("{p}.norm3"), c, store),
            });
        }
        let queries = config
            .variant
            .uses_object_queries()
            .then(|| store.add("transformer.queries", Tensor::randn(&[locations, c], 1.0, rng)));
        Ok(Self {
            config,
            locations,
            pe,
            enc_norm1,
            enc_attn,
            enc_norm2,
            modulation,
            enc_ffn,
            enc_norm3,
            decoder,
            queries,
        })
    }

    fn check_map(&self, g: &Graph, m: NodeId) -> Result<()> {
        let (n, c) = g.value(m).dims2()?;
        ensure_shape!(
            n == self.locations && c == self.config.channels,
            "map is {n}x{c}, transformer expects {}x{}",
            self.locations,
            self.config.channels
        );
        Ok(())
    }

    /// Modulation layer:
    /// `W' = F(Cat(me3, m4p)) * FFN(GAP(m4p))` and `me3 + gamma * W' * me3`,
    /// with elementwise products and the pooled gate broadcast over rows.
    pub fn modulate(
        params: &ModulationParams,
        g: &mut Graph,
        store: &ParamStore,
        me3: NodeId,
        m4p: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        ensure_shape!(
            g.shape(me3) == g.shape(m4p),
            "modulation operands differ: {:?} vs {:?}",
            g.shape(me3),
            g.shape(m4p)
        );
        let cat = g.concat_cols(&[me3, m4p])?;
        let fused = linear(g, store, cat, params.fuse_w, params.fuse_b)?;
        let pooled = g.mean_rows(m4p)?;
        let gate = params.gate.forward(g, store, pooled)?;
        let w_prime = g.mul_row(fused, gate)?;
        let prod = g.mul(w_prime, me3)?;
        let gamma = g.param(store, params.gamma);
        let scaled = g.mul_scalar(prod, gamma)?;
        Ok((g.add(me3, scaled)?, w_prime))
    }

    /// Encoder over `m3` and `m4`; returns every intermediate.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, m3: NodeId, m4: NodeId) -> Result<EncoderTrace> {
        self.check_map(g, m3)?;
        self.check_map(g, m4)?;
        let pe = g.param(store, self.pe);
        let m3p = g.add(m3, pe)?;
        let m4p = g.add(m4, pe)?;
        let sum = g.add(m3p, m4p)?;
        let me1 = self.enc_norm1.forward(g, store, sum)?;
        let me2 = self.enc_attn.forward(g, store, me1, me1, m3p)?;
        let res = g.add(m3p, me2)?;
        let me3 = self.enc_norm2.forward(g, store, res)?;
        let (me4, w_prime) = match &self.modulation {
            Some(p) => {
                let (out, w) = Self::modulate(p, g, store, me3, m4p)?;
                (out, Some(w))
            }
            None => (me3, None),
        };
        let f = self.enc_ffn.forward(g, store, me4)?;
        let res = g.add(f, me4)?;
        let out = self.enc_norm3.forward(g, store, res)?;
        Ok(EncoderTrace {
            m3p,
            m4p,
            me1,
            me2,
            me3,
            me4,
            w_prime,
            out,
        })
    }

    /// Decoder stack seeded with `query`, attending to `memory`.
    pub fn decode(&self, g: &mut Graph, store: &ParamStore, query: NodeId, memory: NodeId) -> Result<NodeId> {
        ensure_shape!(
            g.shape(query) == g.shape(memory),
            "decoder query {:?} and memory {:?} differ",
            g.shape(query),
            g.shape(memory)
        );
        let mut x = query;
        for layer in &self.decoder {
            x = layer.forward(g, store, x, memory)?;
        }
        Ok(x)
    }

    /// Full transformer for the configured variant: `(m3, m4, m5) -> (W*H) x C`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, m3: NodeId, m4: NodeId, m5: NodeId) -> Result<NodeId> {
        self.check_map(g, m5)?;
        let memory = self.encode(g, store, m3, m4)?.out;
        let mut query = match self.queries {
            Some(q) => g.param(store, q),
            None => m5,
        };
        if self.config.decoder_pe {
            let pe = g.param(store, self.pe);
            query = g.add(query, pe)?;
        }
        self.decode(g, store, query, memory)
    }
}
