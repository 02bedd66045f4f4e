//! Hierarchical feature transformer tracking pipeline.
//!
//! The crate is organised bottom-up: [`tensor`], [`kernels`] and [`graph`]
//! provide dense tensors with reverse-mode differentiation; [`backbone`],
//! [`correlation`], [`transformer`] and [`heads`] assemble the network in
//! [`model`]; [`labels`] and [`loss`] define the training objective;
//! [`tracker`], [`synth`] and [`metrics`] cover inference and one-pass
//! evaluation.

pub mod backbone;
pub mod bbox;
pub mod checkpoint;
pub mod correlation;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod heads;
pub mod image;
pub mod kernels;
pub mod labels;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod param;
pub mod sequence;
pub mod synth;
pub mod tensor;
pub mod tracker;
pub mod train;
pub mod transformer;

pub use bbox::{iou, BBox};
pub use error::{HiftError, Result};
pub use graph::{Graph, NodeId};
pub use model::{Model, ModelConfig};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
