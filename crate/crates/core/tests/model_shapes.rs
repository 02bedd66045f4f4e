use hift_core::backbone::BackboneConfig;
use hift_core::model::{Model, ModelConfig};
use hift_core::transformer::Variant;
use hift_core::{Graph, Tensor};

/// Closed-form output side of a convolution.
fn conv_out(input: usize, k: usize, s: usize) -> usize {
    (input - k) / s + 1
}

fn expected_sides(cfg: &BackboneConfig, input: usize) -> Vec<usize> {
    let mut side = input;
    cfg.kernel_sizes
        .iter()
        .zip(&cfg.strides)
        .map(|(&k, &s)| {
            side = conv_out(side, k, s);
            side
        })
        .collect()
}

#[test]
fn level_sides_follow_the_size_formula() {
    for cfg in [BackboneConfig::default(), BackboneConfig::full_scale()] {
        for input in [cfg.template_size, cfg.search_size] {
            assert_eq!(cfg.spatial_sizes(input).unwrap().to_vec(), expected_sides(&cfg, input));
        }
    }
}

#[test]
fn full_scale_pipeline_runs_end_to_end() {
    let cfg = ModelConfig::full_scale();
    assert_eq!((cfg.backbone.template_size, cfg.backbone.search_size), (127, 287));
    let model = Model::new(cfg, 0).unwrap();
    let t = model.transformer.as_ref().unwrap();
    assert_eq!(t.decoder.len(), 2);
    assert!(t.modulation.is_some());

    let mut g = Graph::new();
    let out = model
        .forward_pair(&mut g, &Tensor::zeros(&[3, 127, 127]), &Tensor::zeros(&[3, 287, 287]))
        .unwrap();
    let geom = model.geometry();
    assert_eq!((geom.width, geom.height), (41, 41));
    for m in [out.maps.m3, out.maps.m4, out.maps.m5, out.feature] {
        assert_eq!(g.shape(m), &[41 * 41, 128]);
    }
    assert_eq!(g.shape(out.heads.cls1), &[1681, 2]);
    assert_eq!(g.shape(out.heads.cls2), &[1681, 1]);
    assert_eq!(g.shape(out.heads.reg), &[1681, 4]);
    assert!(g.value(out.heads.reg).data().iter().all(|&v| v > 0.0));
}

#[test]
fn desk_map_is_centered_on_the_crop() {
    let model = Model::new(ModelConfig::default(), 0).unwrap();
    let geom = model.geometry();
    assert_eq!((geom.width, geom.height, geom.stride), (17, 17, 4.0));
    assert_eq!(geom.location_center(geom.center_index()), (64.0, 64.0));
}

#[test]
fn every_variant_produces_head_shapes() {
    for v in [Variant::None, Variant::Ot, Variant::Ft, Variant::Hft] {
        let mut cfg = ModelConfig::tiny();
        cfg.transformer.variant = v;
        let model = Model::new(cfg, 1).unwrap();
        let mut g = Graph::new();
        let out = model
            .forward_pair(&mut g, &Tensor::zeros(&[3, 39, 39]), &Tensor::zeros(&[3, 57, 57]))
            .unwrap();
        assert_eq!(g.shape(out.heads.reg), &[36, 4], "{v:?}");
    }
}

#[test]
fn mismatched_input_is_a_shape_error() {
    let model = Model::new(ModelConfig::tiny(), 0).unwrap();
    let mut g = Graph::new();
    let r = model.forward_pair(&mut g, &Tensor::zeros(&[3, 40, 40]), &Tensor::zeros(&[3, 57, 57]));
    assert!(matches!(r, Err(hift_core::HiftError::Shape(_))));
}
