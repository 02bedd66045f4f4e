//! Per-level similarity maps: depthwise cross-correlation of template
//! features over search features, a 1x1 projection to the transformer width,
//! and flattening to `(W*H) x C` sequence form.
//!
//! Row `r` of a flattened map is spatial location `(r / W, r % W)`
//! (row-major, y then x). Labels, the decoder and the tracker all rely on
//! this ordering.

use rand::Rng;

use crate::backbone::FeatureNodes;
use crate::error::{ensure_shape, Result};
use crate::graph::{Graph, NodeId};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub use crate::kernels::xcorr;

/// Flattened similarity maps of the three levels, all `(W*H) x C`.
#[derive(Clone, Copy, Debug)]
pub struct SimilarityMaps {
    pub m3: NodeId,
    pub m4: NodeId,
    pub m5: NodeId,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

/// `C x H x W` to `(H*W) x C`.
pub fn flatten_locations(raw: &Tensor) -> Result<Tensor> {
    ensure_shape!(raw.rank() == 3, "expected CxHxW, got {:?}", raw.shape());
    let (c, h, w) = (raw.shape()[0], raw.shape()[1], raw.shape()[2]);
    raw.reshape(&[c, h * w])?.t()
}

/// `(H*W) x C` back to `C x H x W`.
pub fn unflatten_locations(seq: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (n, c) = seq.dims2()?;
    ensure_shape!(n == height * width, "{n} rows cannot form a {height}x{width} map");
    seq.t()?.reshape(&[c, height, width])
}

#[derive(Clone, Debug)]
pub struct Correlation {
    /// Per level: `(C_f x C weight, C bias)`.
    proj: [(ParamId, ParamId); 3],
    pub channels: usize,
}

impl Correlation {
    pub fn new<R: Rng + ?Sized>(
        level_channels: [usize; 3],
        channels: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let proj = [0, 1, 2].map(|i| {
            let cf = level_channels[i];
            let w = store.add_xavier(format!("corr.proj{}.weight", i + 3), cf, channels, rng);
            let b = store.add_zeros(format!("corr.proj{}.bias", i + 3), &[channels]);
            (w, b)
        });
        Self { proj, channels }
    }

    pub fn projection(&self, level: usize) -> (ParamId, ParamId) {
        self.proj[level]
    }

    /// Cross-correlates one level. Both operands are `1 x C_f x h x w` nodes;
    /// the result is the raw `C_f x H' x W'` map.
    pub fn xcorr_level(&self, g: &mut Graph, template: NodeId, search: NodeId) -> Result<NodeId> {
        let t = squeeze_batch(g, template)?;
        let s = squeeze_batch(g, search)?;
        g.xcorr(t, s)
    }

    /// 1x1 projection of a raw `C_f x H' x W'` map followed by flattening to
    /// `(H'*W') x C`.
    pub fn project_and_flatten(&self, g: &mut Graph, store: &ParamStore, level: usize, raw: NodeId) -> Result<NodeId> {
        let shape = g.shape(raw).to_vec();
        ensure_shape!(shape.len() == 3, "raw map must be CxHxW, got {shape:?}");
        let flat = g.reshape(raw, &[shape[0], shape[1] * shape[2]])?;
        let seq = g.transpose(flat)?;
        let (w, b) = self.proj[level];
        let wn = g.param(store, w);
        let bn = g.param(store, b);
        let y = g.matmul(seq, wn)?;
        g.add_row(y, bn)
    }

    pub fn similarity_maps(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        template: &FeatureNodes,
        search: &FeatureNodes,
    ) -> Result<SimilarityMaps> {
        let mut maps = [None; 3];
        let mut hw = (0, 0);
        #[allow(clippy::needless_range_loop)]
        for level in 0..3 {
            let raw = self.xcorr_level(g, template.levels[level], search.levels[level])?;
            let s = g.shape(raw).to_vec();
            if level == 0 {
                hw = (s[1], s[2]);
            } else {
                ensure_shape!(
                    (s[1], s[2]) == hw,
                    "level {} correlation is {}x{}, level 3 is {}x{}",
                    level + 3,
                    s[1],
                    s[2],
                    hw.0,
                    hw.1
                );
            }
            maps[level] = Some(self.project_and_flatten(g, store, level, raw)?);
        }
        Ok(SimilarityMaps {
            m3: maps[0].unwrap(),
            m4: maps[1].unwrap(),
            m5: maps[2].unwrap(),
            height: hw.0,
            width: hw.1,
            channels: self.channels,
        })
    }
}

fn squeeze_batch(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    let s = g.shape(x).to_vec();
    match s.len() {
        3 => Ok(x),
        4 if s[0] == 1 => g.reshape(x, &s[1..]),
        _ => Err(crate::error::shape_err!("expected 1xCxHxW or CxHxW, got {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_template_gives_zero_map() {
        let t = Tensor::zeros(&[2, 2, 2]);
        let s = Tensor::full(&[2, 5, 5], 3.0);
        let out = xcorr(&t, &s).unwrap();
        assert_eq!(out.shape(), &[2, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_template_reproduces_search() {
        let t = Tensor::ones(&[1, 1, 1]);
        let s = Tensor::new(&[1, 3, 4], (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(xcorr(&t, &s).unwrap(), s);
    }

    #[test]
    fn row_convention() {
        let raw = Tensor::new(&[2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let seq = flatten_locations(&raw).unwrap();
        assert_eq!(seq.shape(), &[6, 2]);
        // location (y=1, x=2) is row 5; channel 1 there is 6 + 5
        assert_eq!(seq.at2(5, 1), 11.0);
        assert_eq!(unflatten_locations(&seq, 2, 3).unwrap(), raw);
    }
}
