//! Classification and regression heads. Each branch is a `k x k` convolution
//! over the feature laid out as a `C x H x W` map, a ReLU, and a 1x1
//! convolution. With `k = 1` both layers are row-wise linear maps over the
//! `(W*H) x C` feature.

use rand::Rng;

use crate::error::{ensure_shape, Result};
use crate::graph::{Graph, NodeId};
use crate::param::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug)]
pub struct Branch {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub kernel: usize,
}

impl Branch {
    fn new<R: Rng + ?Sized>(
        name: &str,
        channels: usize,
        kernel: usize,
        outputs: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let shape: Vec<usize> = if kernel == 1 {
            vec![channels, channels]
        } else {
            vec![channels, channels, kernel, kernel]
        };
        Self {
            w1: store.add_kaiming(format!("heads.{name}.w1"), &shape, channels * kernel * kernel, rng),
            b1: store.add_zeros(format!("heads.{name}.b1"), &[channels]),
            w2: store.add_xavier(format!("heads.{name}.w2"), channels, outputs, rng),
            b2: store.add_zeros(format!("heads.{name}.b2"), &[outputs]),
            kernel,
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, (height, width): (usize, usize)) -> Result<NodeId> {
        let w1 = g.param(store, self.w1);
        let b1 = g.param(store, self.b1);
        let h = if self.kernel == 1 {
            let h = g.matmul(x, w1)?;
            g.add_row(h, b1)?
        } else {
            let (n, c) = g.value(x).dims2()?;
            let t = g.transpose(x)?;
            let map = g.reshape(t, &[1, c, height, width])?;
            let y = g.conv2d(map, w1, b1, 1, self.kernel / 2)?;
            let y = g.reshape(y, &[c, n])?;
            g.transpose(y)?
        };
        let h = g.relu(h);
        let w2 = g.param(store, self.w2);
        let b2 = g.param(store, self.b2);
        let y = g.matmul(h, w2)?;
        g.add_row(y, b2)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadOutputs {
    /// Two-way logits (negative, positive) for the in-box branch, `(W*H) x 2`.
    pub cls1: NodeId,
    /// Single logit for the center-distance branch, `(W*H) x 1`.
    pub cls2: NodeId,
    /// Positive side distances `(l, t, r, b)` in stride units, `(W*H) x 4`.
    pub reg: NodeId,
}

#[derive(Clone, Debug)]
pub struct Heads {
    pub cls1: Branch,
    pub cls2: Branch,
    pub reg: Branch,
    pub channels: usize,
}

impl Heads {
    /// `kernel` is the odd side of the first convolution in every branch.
    pub fn new<R: Rng + ?Sized>(channels: usize, kernel: usize, store: &mut ParamStore, rng: &mut R) -> Self {
        Self {
            cls1: Branch::new("cls1", channels, kernel, 2, store, rng),
            cls2: Branch::new("cls2", channels, kernel, 1, store, rng),
            reg: Branch::new("reg", channels, kernel, 4, store, rng),
            channels,
        }
    }

    /// `feature` is `(H*W) x C`, rows in row-major map order.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        feature: NodeId,
        hw: (usize, usize),
    ) -> Result<HeadOutputs> {
        let (n, c) = g.value(feature).dims2()?;
        ensure_shape!(c == self.channels, "head input width {c} != {}", self.channels);
        ensure_shape!(n == hw.0 * hw.1, "head input has {n} rows for a {}x{} map", hw.0, hw.1);
        let cls1 = self.cls1.forward(g, store, feature, hw)?;
        let cls2 = self.cls2.forward(g, store, feature, hw)?;
        let raw = self.reg.forward(g, store, feature, hw)?;
        let reg = g.exp(raw);
        Ok(HeadOutputs { cls1, cls2, reg })
    }
}
