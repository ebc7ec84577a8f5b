//! Linking ground-truth attribute regions to detected instances.

use serde::{Deserialize, Serialize};

use super::{IngestError, RecordError};
use crate::geometry::BBox;
use crate::scene::Instance;
use crate::vocab::AttributeVocab;

/// `{"bbox": [x0, y0, x1, y1], "attributes": ["red", ...]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRegion {
    pub bbox: BBox,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LinkReport {
    /// (region, instance) pairs that matched.
    pub links: usize,
    /// Attribute names not found in the vocabulary.
    pub unknown_attributes: usize,
}

pub fn parse_regions(bytes: &[u8]) -> Result<Vec<AttributeRegion>, IngestError> {
    let regions: Vec<AttributeRegion> =
        serde_json::from_slice(bytes).map_err(|e| IngestError::Json(e.to_string()))?;
    if let Some(index) = regions.iter().position(|r| r.attributes.is_empty()) {
        return Err(IngestError::Record {
            index,
            reason: RecordError::EmptyAttributes,
        });
    }
    Ok(regions)
}

/// Add each region's attributes to every instance whose detected box has
/// IoU strictly greater than `iou_threshold` with the region box.
/// `boxes[i]` is the detected box of `instances[i]`.
pub fn link_attributes(
    instances: &mut [Instance],
    boxes: &[BBox],
    regions: &[AttributeRegion],
    vocab: &AttributeVocab,
    iou_threshold: f64,
) -> LinkReport {
    let mut report = LinkReport::default();
    for region in regions {
        let mut ids = Vec::new();
        for name in &region.attributes {
            match vocab.lookup(name) {
                Some(id) => ids.push(id),
                None => report.unknown_attributes += 1,
            }
        }
        for (inst, bbox) in instances.iter_mut().zip(boxes) {
            if bbox.iou(&region.bbox) > iou_threshold {
                inst.attributes.extend(ids.iter().copied());
                report.links += 1;
            }
        }
    }
    report
}
