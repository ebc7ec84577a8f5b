//! Detector output to scene: score filtering, class-alias merging,
//! class-agnostic mask NMS, polygonization, containment hierarchy and
//! attribute-region linking.

mod attributes;
mod detections;
mod nms;
mod pipeline;
mod polygonize;
mod rle;

use thiserror::Error;

use crate::scene::SceneError;

pub use attributes::{link_attributes, parse_regions, AttributeRegion, LinkReport};
pub use detections::{filter_and_merge, parse_detections, AliasMap, Detection, DetectionSet};
pub use nms::nms;
pub use pipeline::{ingest_pipeline, IngestConfig, IngestOutput, IngestReport};
pub use polygonize::polygonize;
pub use rle::{decode_rle, encode_rle, Rle};

pub use crate::mask::mask_iou;

/// Detections scoring below this are dropped.
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.2;
/// Pairs with mask IoU above this are treated as duplicates.
pub const DEFAULT_NMS_IOU: f64 = 0.7;
/// Attribute regions link to detections whose box IoU exceeds this.
pub const DEFAULT_ATTRIBUTE_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("rle counts sum to {found}, expected {expected}")]
    RleLength { expected: usize, found: usize },
    #[error("rle size {h}x{w} does not match image {img_h}x{img_w}")]
    RleSize {
        h: usize,
        w: usize,
        img_h: usize,
        img_w: usize,
    },
    #[error("score {0} outside [0, 1]")]
    BadScore(f64),
    #[error("bbox {0:?} outside the image or inverted")]
    BadBBox([f64; 4]),
    #[error("mask pixels extend outside bbox")]
    MaskOutsideBBox,
    #[error("attribute region has no attributes")]
    EmptyAttributes,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed json: {0}")]
    Json(String),
    #[error("record {index}: {reason}")]
    Record { index: usize, reason: RecordError },
    #[error("alias `{alias}` resolves to unknown class `{canonical}`")]
    UnknownCanonical { alias: String, canonical: String },
    #[error("alias `{0}` maps to another alias")]
    ChainedAlias(String),
    #[error("threshold {name} = {value} outside {range}")]
    Threshold {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
}
