//! Detection JSON parsing, score filtering and alias merging.
//!
//! ```json
//! {"image": {"width": 640, "height": 480},
//!  "detections": [{"class": "car", "score": 0.93, "bbox": [x0, y0, x1, y1],
//!                  "rle": {"size": [480, 640], "counts": [..]}}]}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rle::{decode_rle, Rle};
use super::{IngestError, RecordError};
use crate::geometry::BBox;
use crate::mask::Bitmap;
use crate::vocab::ClassVocab;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_name: String,
    pub score: f64,
    pub bbox: BBox,
    /// Decoded at source (image) resolution.
    pub mask: Bitmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub width: usize,
    pub height: usize,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    /// `(index, name)` of every detection whose class is neither a vocabulary
    /// class nor an alias of one.
    pub fn unknown_classes(&self, classes: &ClassVocab, aliases: &AliasMap) -> Vec<(usize, String)> {
        self.detections
            .iter()
            .enumerate()
            .filter(|(_, d)| {
                classes.lookup(&d.class_name).is_none() && !aliases.0.contains_key(&d.class_name)
            })
            .map(|(i, d)| (i, d.class_name.clone()))
            .collect()
    }
}

#[derive(Deserialize)]
struct FileDoc {
    image: ImageDoc,
    detections: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
struct ImageDoc {
    width: usize,
    height: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RecordDoc {
    pub class: String,
    pub score: f64,
    pub bbox: BBox,
    pub rle: Rle,
}

/// Decode the detection file; errors name the offending record index.
pub fn parse_detections(bytes: &[u8]) -> Result<DetectionSet, IngestError> {
    let doc: FileDoc =
        serde_json::from_slice(bytes).map_err(|e| IngestError::Json(e.to_string()))?;
    let (w, h) = (doc.image.width, doc.image.height);
    let detections = doc
        .detections
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let rec: RecordDoc = serde_json::from_value(value)
                .map_err(|e| IngestError::Json(format!("record {index}: {e}")))?;
            decode_record(rec, w, h).map_err(|reason| IngestError::Record { index, reason })
        })
        .collect::<Result<_, _>>()?;
    Ok(DetectionSet {
        width: w,
        height: h,
        detections,
    })
}

fn decode_record(rec: RecordDoc, w: usize, h: usize) -> Result<Detection, RecordError> {
    if !(0.0..=1.0).contains(&rec.score) {
        return Err(RecordError::BadScore(rec.score));
    }
    let b = rec.bbox;
    let finite = [b.x0, b.y0, b.x1, b.y1].iter().all(|v| v.is_finite());
    if !finite || b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > w as f64 || b.y1 > h as f64 || b.x0 > b.x1 || b.y0 > b.y1
    {
        return Err(RecordError::BadBBox(b.into()));
    }
    if rec.rle.size != [h, w] {
        return Err(RecordError::RleSize {
            h: rec.rle.size[0],
            w: rec.rle.size[1],
            img_h: h,
            img_w: w,
        });
    }
    let mask = decode_rle(&rec.rle)?;
    // allow one pixel of slack between the detector's box and its mask
    if let Some(pb) = mask.bounds() {
        let inside = pb.x0 as f64 >= b.x0.floor() - 1.0
            && pb.y0 as f64 >= b.y0.floor() - 1.0
            && pb.x1 as f64 <= b.x1.ceil() + 1.0
            && pb.y1 as f64 <= b.y1.ceil() + 1.0;
        if !inside {
            return Err(RecordError::MaskOutsideBBox);
        }
    }
    Ok(Detection {
        class_name: rec.class,
        score: rec.score,
        bbox: b,
        mask,
    })
}

/// Alias name to canonical class name, e.g. `{"vehicle": "car"}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AliasMap(pub BTreeMap<String, String>);

impl AliasMap {
    pub fn from_json(bytes: &[u8]) -> Result<Self, IngestError> {
        serde_json::from_slice(bytes).map_err(|e| IngestError::Json(e.to_string()))
    }

    /// Every canonical must be a vocabulary class and no alias may map to another alias.
    pub fn validate(&self, classes: &ClassVocab) -> Result<(), IngestError> {
        for (alias, canonical) in &self.0 {
            if self.0.contains_key(canonical) {
                return Err(IngestError::ChainedAlias(alias.clone()));
            }
            if classes.lookup(canonical).is_none() {
                return Err(IngestError::UnknownCanonical {
                    alias: alias.clone(),
                    canonical: canonical.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Drop detections scoring below `threshold` and canonicalize class names
/// through `aliases` and the vocabulary's own aliases. Scores and masks are
/// untouched; unknown names pass through unchanged.
pub fn filter_and_merge(
    dets: Vec<Detection>,
    aliases: &AliasMap,
    classes: &ClassVocab,
    threshold: f64,
) -> Result<Vec<Detection>, IngestError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(IngestError::Threshold {
            name: "score",
            value: threshold,
            range: "[0, 1]",
        });
    }
    aliases.validate(classes)?;
    Ok(dets
        .into_iter()
        .filter(|d| d.score >= threshold)
        .map(|mut d| {
            let target = aliases.0.get(&d.class_name).unwrap_or(&d.class_name);
            if let Some(name) = classes.lookup(target).and_then(|id| classes.name(id)) {
                d.class_name = name.to_string();
            }
            d
        })
        .collect())
}
