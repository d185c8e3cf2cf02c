//! Action-object localization and transitive-action classification.
//!
//! The pipeline runs a coarse segmentation backend over the whole image,
//! refines it on subwindows with a fine backend, proposes candidate object
//! regions, ranks them by a regressor over pooled context, and classifies the
//! image by the best-scoring candidate under a one-vs-all linear SVM.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backends;
pub mod candidates;
pub mod classifier;
pub mod coarse2fine;
pub mod context;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod geom;
pub mod image;
pub mod pipeline;
pub mod probmap;
pub mod ranking;
pub mod region;
pub mod seed;
pub mod solver;

pub use error::{Error, Result};
pub use geom::{bbox_iou, scale_bbox, BBox};
pub use image::ImageU8;
pub use probmap::{LabelSet, Plane, ProbMap};
pub use region::{RegionMask, Source};
