//! The assembled tracker network: backbone, similarity maps, transformer and
//! heads, plus the map geometry shared with labels and the tracker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{Backbone, BackboneConfig, FeatureLevels, FeatureNodes};
use crate::bbox::BBox;
use crate::correlation::{Correlation, SimilarityMaps};
use crate::error::{HiftError, Result};
use crate::graph::{sigmoid, Graph, NodeId};
use crate::heads::{HeadOutputs, Heads};
use crate::labels::{make_labels, LabelConfig, LabelMaps, MapGeometry};
use crate::loss::{hift_loss, LossTerms, LossWeights};
use crate::param::ParamStore;
use crate::tensor::Tensor;
use crate::transformer::{Transformer, TransformerConfig, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub transformer: TransformerConfig,
    /// Side of the first convolution in each head branch (odd).
    pub head_kernel: usize,
}

pub const DEFAULT_HEAD_KERNEL: usize = 5;

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            transformer: TransformerConfig::new(64),
            head_kernel: DEFAULT_HEAD_KERNEL,
        }
    }
}

impl ModelConfig {
    /// Template 127, search 287, 128 transformer channels.
    pub fn full_scale() -> Self {
        Self {
            backbone: BackboneConfig::full_scale(),
            transformer: TransformerConfig::new(128),
            head_kernel: DEFAULT_HEAD_KERNEL,
        }
    }

    /// Small model with a 6x6 score map and 16 channels, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            backbone: BackboneConfig {
                stem_channels: [4, 6],
                channels_per_level: [6, 8, 8],
                template_size: 39,
                search_size: 57,
                ..BackboneConfig::default()
            },
            transformer: TransformerConfig {
                heads: 2,
                ..TransformerConfig::new(16)
            },
            head_kernel: DEFAULT_HEAD_KERNEL,
        }
    }

    pub fn channels(&self) -> usize {
        self.transformer.channels
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.transformer.head_width()?;
        if self.head_kernel.is_multiple_of(2) {
            return Err(HiftError::Config(format!(
                "head kernel must be odd, got {}",
                self.head_kernel
            )));
        }
        if self.transformer.decoder_layers == 0 && self.transformer.variant.uses_transformer() {
            return Err(HiftError::Config("at least one decoder layer is required".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<MapGeometry> {
        let side = self.backbone.correlation_sides()?[0];
        let stride = self.backbone.total_stride() as f64;
        // Location i is aligned with the template center shifted by i strides.
        let offset = self.backbone.template_size as f64 / 2.0 - stride / 2.0;
        Ok(MapGeometry {
            width: side,
            height: side,
            stride,
            offset,
        })
    }
}

/// Per-location outputs of one forward pass, detached from the graph.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub geometry: MapGeometry,
    /// `softmax(cls1)` probability of the positive class.
    pub cls1_pos: Vec<f64>,
    /// `sigmoid(cls2)`.
    pub cls2_prob: Vec<f64>,
    /// Side distances `(l, t, r, b)` in search-crop pixels.
    pub sides: Vec<[f64; 4]>,
}

impl Prediction {
    /// Product of the two classification confidences.
    pub fn confidence(&self) -> Vec<f64> {
        self.cls1_pos.iter().zip(&self.cls2_prob).map(|(a, b)| a * b).collect()
    }

    pub fn decoded_box(&self, r: usize) -> BBox {
        crate::loss::decode_box(self.geometry.location_center(r), self.sides[r])
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    pub maps: SimilarityMaps,
    /// Input to the heads.
    pub feature: NodeId,
    pub heads: HeadOutputs,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub backbone: Backbone,
    pub correlation: Correlation,
    pub transformer: Option<Transformer>,
    pub heads: Heads,
    geometry: MapGeometry,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let geometry = config.geometry()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let backbone = Backbone::new(config.backbone.clone(), &mut params, &mut rng)?;
        let c = config.channels();
        let correlation = Correlation::new(config.backbone.channels_per_level, c, &mut params, &mut rng);
        let transformer = if config.transformer.variant.uses_transformer() {
            Some(Transformer::new(
                config.transformer.clone(),
                geometry.locations(),
                &mut params,
                &mut rng,
            )?)
        } else {
            None
        };
        let heads = Heads::new(c, config.head_kernel, &mut params, &mut rng);
        Ok(Self {
            config,
            params,
            backbone,
            correlation,
            transformer,
            heads,
            geometry,
        })
    }

    pub fn geometry(&self) -> MapGeometry {
        self.geometry
    }

    pub fn variant(&self) -> Variant {
        self.config.transformer.variant
    }

    fn image_node(&self, g: &mut Graph, image: &Tensor, size: usize) -> Result<NodeId> {
        if image.shape() != [3, size, size] {
            return Err(HiftError::Shape(format!(
                "expected a 3x{size}x{size} image, got {:?}",
                image.shape()
            )));
        }
        Ok(g.constant(image.reshape(&[1, 3, size, size])?))
    }

    pub fn extract_nodes(&self, g: &mut Graph, image: &Tensor, size: usize) -> Result<FeatureNodes> {
        let x = self.image_node(g, image, size)?;
        self.backbone.extract(g, &self.params, x)
    }

    /// Template-branch features for caching at tracker initialization.
    pub fn template_features(&self, template: &Tensor) -> Result<FeatureLevels> {
        let mut g = Graph::new();
        let nodes = self.extract_nodes(&mut g, template, self.config.backbone.template_size)?;
        Ok(nodes.to_tensors(&g))
    }

    /// Runs everything after feature extraction.
    pub fn forward_features(
        &self,
        g: &mut Graph,
        template: &FeatureNodes,
        search: &FeatureNodes,
    ) -> Result<ForwardNodes> {
        let maps = self.correlation.similarity_maps(g, &self.params, template, search)?;
        let feature = match &self.transformer {
            Some(t) => t.forward(g, &self.params, maps.m3, maps.m4, maps.m5)?,
            None => maps.m5,
        };
        let heads = self
            .heads
            .forward(g, &self.params, feature, (maps.height, maps.width))?;
        Ok(ForwardNodes { maps, feature, heads })
    }

    /// Both branches in the graph (training).
    pub fn forward_pair(&self, g: &mut Graph, template: &Tensor, search: &Tensor) -> Result<ForwardNodes> {
        let t = self.extract_nodes(g, template, self.config.backbone.template_size)?;
        let s = self.extract_nodes(g, search, self.config.backbone.search_size)?;
        self.forward_features(g, &t, &s)
    }

    /// Search branch against cached template features (tracking).
    pub fn forward_cached(&self, g: &mut Graph, template: &FeatureLevels, search: &Tensor) -> Result<ForwardNodes> {
        let t = FeatureNodes {
            levels: template.levels().map(|l| g.constant(l.clone())),
        };
        let s = self.extract_nodes(g, search, self.config.backbone.search_size)?;
        self.forward_features(g, &t, &s)
    }

    pub fn predict(&self, template: &FeatureLevels, search: &Tensor) -> Result<Prediction> {
        let mut g = Graph::new();
        let out = self.forward_cached(&mut g, template, search)?;
        Ok(self.read_prediction(&g, &out.heads))
    }

    pub fn read_prediction(&self, g: &Graph, heads: &HeadOutputs) -> Prediction {
        let n = self.geometry.locations();
        let cls1 = g.value(heads.cls1);
        let cls2 = g.value(heads.cls2);
        let reg = g.value(heads.reg);
        let stride = self.geometry.stride;
        let cls1_pos = (0..n).map(|i| sigmoid(cls1.at2(i, 1) - cls1.at2(i, 0))).collect();
        let cls2_prob = cls2.data().iter().map(|&z| sigmoid(z)).collect();
        let sides = (0..n)
            .map(|i| {
                let r = reg.row(i);
                [r[0] * stride, r[1] * stride, r[2] * stride, r[3] * stride]
            })
            .collect();
        Prediction {
            geometry: self.geometry,
            cls1_pos,
            cls2_prob,
            sides,
        }
    }

    pub fn labels(&self, gt_in_search: &BBox, config: &LabelConfig, seed: u64) -> Result<LabelMaps> {
        make_labels(gt_in_search, self.geometry, config, seed)
    }

    /// Training loss for one image pair; `gt_in_search` is in search-crop pixels.
    pub fn pair_loss(
        &self,
        g: &mut Graph,
        template: &Tensor,
        search: &Tensor,
        labels: &LabelMaps,
        weights: &LossWeights,
    ) -> Result<LossTerms> {
        let out = self.forward_pair(g, template, search)?;
        hift_loss(g, &out.heads, labels, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_geometry_is_centered() {
        let geom = ModelConfig::default().geometry().unwrap();
        assert_eq!((geom.width, geom.height), (17, 17));
        assert_eq!(geom.stride, 4.0);
        let (cx, cy) = geom.location_center(geom.center_index());
        assert_eq!((cx, cy), (64.0, 64.0));
    }

    #[test]
    fn tiny_geometry_is_six_by_six() {
        let geom = ModelConfig::tiny().geometry().unwrap();
        assert_eq!((geom.width, geom.height), (6, 6));
    }

    #[test]
    fn every_variant_builds() {
        for v in [Variant::Hft, Variant::Ft, Variant::Ot, Variant::None] {
            let mut cfg = ModelConfig::tiny();
            cfg.transformer.variant = v;
            let m = Model::new(cfg, 0).unwrap();
            assert_eq!(m.transformer.is_some(), v != Variant::None);
        }
    }
}
