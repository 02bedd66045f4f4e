//! Five-layer convolutional feature extractor shared by the template and
//! search branches. Features are tapped after the third, fourth and fifth
//! convolutions.

use rand::Rng;

use crate::error::{HiftError, Result};
use crate::graph::{Graph, NodeId};
use crate::kernels::conv_out_size;
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const NUM_CONVS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    /// Output channels of the two stem convolutions.
    pub stem_channels: [usize; 2],
    /// Output channels of convolutions 3, 4 and 5 (the tapped levels).
    pub channels_per_level: [usize; 3],
    pub kernel_sizes: [usize; NUM_CONVS],
    pub strides: [usize; NUM_CONVS],
    pub template_size: usize,
    pub search_size: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            stem_channels: [16, 32],
            channels_per_level: [32, 48, 64],
            kernel_sizes: [5, 3, 3, 3, 3],
            strides: [2, 2, 1, 1, 1],
            template_size: 64,
            search_size: 128,
        }
    }
}

impl BackboneConfig {
    /// Template 127 / search 287 input sizes.
    pub fn full_scale() -> Self {
        Self {
            template_size: 127,
            search_size: 287,
            ..Self::default()
        }
    }

    pub fn out_channels(&self) -> [usize; NUM_CONVS] {
        let [a, b] = self.stem_channels;
        let [c, d, e] = self.channels_per_level;
        [a, b, c, d, e]
    }

    /// Product of all strides: pixels per feature-map step.
    pub fn total_stride(&self) -> usize {
        self.strides.iter().product()
    }

    /// Spatial extent after every convolution for a square input.
    pub fn spatial_sizes(&self, input: usize) -> Result<[usize; NUM_CONVS]> {
        let mut sizes = [0; NUM_CONVS];
        let mut cur = input;
        for (i, size) in sizes.iter_mut().enumerate() {
            cur = conv_out_size(cur, self.kernel_sizes[i], self.strides[i], 0)
                .ok_or_else(|| HiftError::Config(format!("input {input} collapses before convolution {}", i + 1)))?;
            *size = cur;
        }
        Ok(sizes)
    }

    /// `(channels, side)` of the three tapped levels for a square input.
    pub fn level_shapes(&self, input: usize) -> Result<[(usize, usize); 3]> {
        let s = self.spatial_sizes(input)?;
        let c = self.channels_per_level;
        Ok([(c[0], s[2]), (c[1], s[3]), (c[2], s[4])])
    }

    /// Side of the correlation map at each level.
    pub fn correlation_sides(&self) -> Result<[usize; 3]> {
        let t = self.level_shapes(self.template_size)?;
        let s = self.level_shapes(self.search_size)?;
        let mut out = [0; 3];
        for i in 0..3 {
            if t[i].1 >= s[i].1 {
                return Err(HiftError::Config(format!(
                    "level {} template feature ({}) not smaller than search feature ({})",
                    i + 3,
                    t[i].1,
                    s[i].1
                )));
            }
            out[i] = s[i].1 - t[i].1 + 1;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_channels().contains(&0) || self.strides.contains(&0) || self.kernel_sizes.contains(&0) {
            return Err(HiftError::Config("backbone extents must be positive".into()));
        }
        let sides = self.correlation_sides()?;
        if sides.iter().any(|&s| s != sides[0]) {
            return Err(HiftError::Config(format!(
                "correlation maps differ in size across levels: {sides:?}"
            )));
        }
        Ok(())
    }
}

/// Tapped feature maps for one image, each `1 x C x h x w`.
#[derive(Clone, Debug)]
pub struct FeatureLevels {
    pub level3: Tensor,
    pub level4: Tensor,
    pub level5: Tensor,
}

impl FeatureLevels {
    pub fn levels(&self) -> [&Tensor; 3] {
        [&self.level3, &self.level4, &self.level5]
    }
}

/// Graph nodes for the three tapped levels.
#[derive(Clone, Copy, Debug)]
pub struct FeatureNodes {
    pub levels: [NodeId; 3],
}

impl FeatureNodes {
    pub fn to_tensors(self, g: &Graph) -> FeatureLevels {
        FeatureLevels {
            level3: g.value(self.levels[0]).clone(),
            level4: g.value(self.levels[1]).clone(),
            level5: g.value(self.levels[2]).clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    convs: Vec<(ParamId, ParamId)>,
}

impl Backbone {
    pub fn new<R: Rng + ?Sized>(config: BackboneConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let outs = config.out_channels();
        let mut cin = 3;
        let mut convs = Vec::with_capacity(NUM_CONVS);
        for (i, &cout) in outs.iter().enumerate() {
            let k = config.kernel_sizes[i];
            let w = store.add_kaiming(
                format!("backbone.conv{}.weight", i + 1),
                &[cout, cin, k, k],
                cin * k * k,
                rng,
            );
            let b = store.add_zeros(format!("backbone.conv{}.bias", i + 1), &[cout]);
            convs.push((w, b));
            cin = cout;
        }
        Ok(Self { config, convs })
    }

    pub fn conv_params(&self) -> &[(ParamId, ParamId)] {
        &self.convs
    }

    /// Marks the two stem convolutions as frozen (or trainable again).
    pub fn set_stem_trainable(&self, store: &mut ParamStore, trainable: bool) {
        for &(w, b) in &self.convs[..2] {
            store.get_mut(w).trainable = trainable;
            store.get_mut(b).trainable = trainable;
        }
    }

    /// Runs the stack on a `1 x 3 x S x S` image node, where `S` must be the
    /// configured template or search size.
    pub fn extract(&self, g: &mut Graph, store: &ParamStore, image: NodeId) -> Result<FeatureNodes> {
        let shape = g.shape(image).to_vec();
        let sizes = [self.config.template_size, self.config.search_size];
        if shape.len() != 4 || shape[0] != 1 || shape[1] != 3 || shape[2] != shape[3] || !sizes.contains(&shape[2]) {
            return Err(HiftError::Shape(format!(
                "backbone expects 1x3xSxS with S in {sizes:?}, got {shape:?}"
            )));
        }
        let mut x = image;
        let mut taps = Vec::with_capacity(3);
        for (i, &(w, b)) in self.convs.iter().enumerate() {
            let wn = g.param(store, w);
            let bn = g.param(store, b);
            x = g.conv2d(x, wn, bn, self.config.strides[i], 0)?;
            // The deepest tap stays linear so its correlation can be signed.
            if i + 1 < NUM_CONVS {
                x = g.relu(x);
            }
            if i >= 2 {
                taps.push(x);
            }
        }
        Ok(FeatureNodes {
            levels: [taps[0], taps[1], taps[2]],
        })
    }

    /// Convenience wrapper: extracts features from a `3 x S x S` image tensor.
    pub fn extract_tensor(&self, store: &ParamStore, image: &Tensor) -> Result<FeatureLevels> {
        let mut g = Graph::new();
        let s = image.shape();
        if s.len() != 3 {
            return Err(HiftError::Shape(format!("image must be 3xSxS, got {s:?}")));
        }
        let x = g.constant(image.reshape(&[1, s[0], s[1], s[2]])?);
        Ok(self.extract(&mut g, store, x)?.to_tensors(&g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn desk_sizes_follow_conv_formula() {
        let cfg = BackboneConfig::default();
        assert_eq!(cfg.spatial_sizes(128).unwrap(), [62, 30, 28, 26, 24]);
        assert_eq!(cfg.spatial_sizes(64).unwrap(), [30, 14, 12, 10, 8]);
        assert_eq!(cfg.correlation_sides().unwrap(), [17, 17, 17]);
    }

    #[test]
    fn full_scale_sizes_follow_conv_formula() {
        let cfg = BackboneConfig::full_scale();
        assert_eq!(cfg.spatial_sizes(287).unwrap(), [142, 70, 68, 66, 64]);
        assert_eq!(cfg.spatial_sizes(127).unwrap(), [62, 30, 28, 26, 24]);
        assert_eq!(cfg.correlation_sides().unwrap(), [41, 41, 41]);
    }

    #[test]
    fn rejects_template_not_smaller_than_search() {
        let cfg = BackboneConfig {
            template_size: 128,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wrong_input_size_is_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let bb = Backbone::new(BackboneConfig::default(), &mut store, &mut rng).unwrap();
        let err = bb.extract_tensor(&store, &Tensor::zeros(&[3, 100, 100]));
        assert!(matches!(err, Err(HiftError::Shape(_))));
    }

    #[test]
    fn frozen_stem_flags() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let bb = Backbone::new(BackboneConfig::default(), &mut store, &mut rng).unwrap();
        bb.set_stem_trainable(&mut store, false);
        let frozen: Vec<_> = store.iter().filter(|p| !p.trainable).map(|p| p.name.clone()).collect();
        assert_eq!(frozen.len(), 4);
        assert!(frozen.iter().all(|n| n.contains("conv1") || n.contains("conv2")));
    }
}
