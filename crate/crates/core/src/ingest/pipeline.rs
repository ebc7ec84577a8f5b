//! End-to-end ingestion: parse, filter/merge, NMS, polygonize, hierarchy,
//! attribute linking.

use std::collections::BTreeMap;

use serde::Serialize;

use super::attributes::{link_attributes, AttributeRegion};
use super::detections::{filter_and_merge, parse_detections, AliasMap};
use super::nms::nms;
use super::polygonize::polygonize;
use super::{IngestError, DEFAULT_ATTRIBUTE_IOU, DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD};
use crate::geometry::BBox;
use crate::scene::{build_hierarchy_with, Instance, InstanceMask, SceneGraph, DEFAULT_CONTAINMENT};
use crate::vocab::{AttributeVocab, ClassVocab};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IngestConfig {
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub attr_iou: f64,
    pub containment: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            nms_iou: DEFAULT_NMS_IOU,
            attr_iou: DEFAULT_ATTRIBUTE_IOU,
            containment: DEFAULT_CONTAINMENT,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let check = |name, value: f64, ok: bool, range| {
            if ok {
                Ok(())
            } else {
                Err(IngestError::Threshold { name, value, range })
            }
        };
        let s = self.score_threshold;
        check("score", s, (0.0..=1.0).contains(&s), "[0, 1]")?;
        let n = self.nms_iou;
        check("nms-iou", n, n > 0.0 && n <= 1.0, "(0, 1]")?;
        let a = self.attr_iou;
        check("attr-iou", a, (0.0..1.0).contains(&a), "[0, 1)")?;
        let c = self.containment;
        check("containment", c, c > 0.0 && c <= 1.0, "(0, 1]")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub parsed: usize,
    pub below_threshold: usize,
    pub unknown_classes: BTreeMap<String, usize>,
    pub suppressed: usize,
    pub empty_masks: usize,
    pub instances: usize,
    pub attribute_links: usize,
    pub unknown_attributes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub scene: SceneGraph,
    pub report: IngestReport,
}

/// Run the whole pipeline on one detection file. Instance ids are assigned
/// from 1 in score-descending order. Detections of classes outside the
/// vocabulary are dropped before suppression and counted in the report.
pub fn ingest_pipeline(
    bytes: &[u8],
    classes: &ClassVocab,
    attrs: &AttributeVocab,
    aliases: &AliasMap,
    regions: Option<&[AttributeRegion]>,
    config: &IngestConfig,
) -> Result<IngestOutput, IngestError> {
    config.validate()?;
    let set = parse_detections(bytes)?;
    let mut report = IngestReport {
        parsed: set.detections.len(),
        ..Default::default()
    };
    let merged = filter_and_merge(set.detections, aliases, classes, config.score_threshold)?;
    report.below_threshold = report.parsed - merged.len();

    let (known, unknown): (Vec<_>, Vec<_>) = merged
        .into_iter()
        .partition(|d| classes.lookup(&d.class_name).is_some());
    for d in unknown {
        *report.unknown_classes.entry(d.class_name).or_default() += 1;
    }
    let candidates = known.len();
    let kept = nms(known, config.nms_iou);
    report.suppressed = candidates - kept.len();

    let mut instances = Vec::with_capacity(kept.len());
    let mut boxes: Vec<BBox> = Vec::with_capacity(kept.len());
    for d in kept {
        let rings = polygonize(&d.mask);
        if rings.is_empty() {
            report.empty_masks += 1;
            continue;
        }
        let class_id = classes.lookup(&d.class_name).expect("partitioned on known");
        let id = instances.len() as u32 + 1;
        instances.push(Instance::new(id, class_id, InstanceMask::new(rings)).with_score(d.score));
        boxes.push(d.bbox);
    }

    if let Some(regions) = regions {
        let r = link_attributes(&mut instances, &boxes, regions, attrs, config.attr_iou);
        report.attribute_links = r.links;
        report.unknown_attributes = r.unknown_attributes;
    }
    report.instances = instances.len();
    let scene = build_hierarchy_with(
        instances,
        set.width as u32,
        set.height as u32,
        config.containment,
    )?;
    Ok(IngestOutput { scene, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{encode_rle, Rle};
    use crate::mask::Bitmap;
    use crate::vocab::Role;

    fn vocab() -> (ClassVocab, AttributeVocab) {
        (
            ClassVocab::from_names(&[
                ("bus", Role::Foreground),
                ("window", Role::Background),
                ("road", Role::Background),
            ])
            .unwrap(),
            AttributeVocab::from_names(&["red", "yellow"]).unwrap(),
        )
    }

    fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> (Rle, [usize; 4]) {
        let m = Bitmap::from_fn(64, 48, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1);
        (encode_rle(&m), [x0, y0, x1, y1])
    }

    fn file(dets: &[(&str, f64, (Rle, [usize; 4]))]) -> Vec<u8> {
        let records: Vec<serde_json::Value> = dets
            .iter()
            .map(|(c, s, (rle, b))| {
                serde_json::json!({"class": c, "score": s, "bbox": b, "rle": rle})
            })
            .collect();
        serde_json::to_vec(&serde_json::json!({
            "image": {"width": 64, "height": 48}, "detections": records
        }))
        .unwrap()
    }

    #[test]
    fn empty_input_gives_empty_scene() {
        let (c, a) = vocab();
        let out = ingest_pipeline(&file(&[]), &c, &a, &AliasMap::default(), None, &IngestConfig::default())
            .unwrap();
        assert!(out.scene.is_empty());
        assert_eq!((out.scene.width, out.scene.height), (64, 48));
    }

    #[test]
    fn bus_window_fixture_links_window_to_bus() {
        let (c, a) = vocab();
        let bytes = file(&[
            ("window", 0.7, rect(12, 12, 20, 18)),
            ("bus", 0.9, rect(8, 8, 56, 32)),
            ("road", 0.5, rect(0, 30, 64, 48)),
        ]);
        let regions = vec![AttributeRegion {
            bbox: BBox::new(8.0, 8.0, 56.0, 32.0),
            attributes: vec!["yellow".into()],
        }];
        let out = ingest_pipeline(
            &bytes,
            &c,
            &a,
            &AliasMap::default(),
            Some(&regions),
            &IngestConfig::default(),
        )
        .unwrap();
        let s = &out.scene;
        assert_eq!(s.len(), 3);
        // ids follow score order: bus 1, window 2, road 3
        assert_eq!(s.get(1).unwrap().class_id, c.lookup("bus").unwrap());
        assert_eq!(s.get(2).unwrap().parent, Some(1));
        assert_eq!(s.get(3).unwrap().parent, None);
        assert_eq!(s.get(1).unwrap().attributes, [1].into());
        assert!(s.get(2).unwrap().attributes.is_empty());
        assert_eq!(out.report.attribute_links, 1);
        s.validate().unwrap();
    }

    #[test]
    fn duplicate_detections_collapse() {
        let (c, a) = vocab();
        let aliases = AliasMap([("coach".to_string(), "bus".to_string())].into());
        let bytes = file(&[
            ("bus", 0.9, rect(8, 8, 56, 32)),
            ("coach", 0.8, rect(8, 8, 55, 32)),
            ("bus", 0.1, rect(40, 0, 60, 5)),
            ("zebra", 0.9, rect(0, 0, 4, 4)),
        ]);
        let out = ingest_pipeline(&bytes, &c, &a, &aliases, None, &IngestConfig::default()).unwrap();
        assert_eq!(out.scene.len(), 1);
        assert_eq!(out.report.suppressed, 1);
        assert_eq!(out.report.below_threshold, 1);
        assert_eq!(out.report.unknown_classes.get("zebra"), Some(&1));
    }

    #[test]
    fn polygons_rasterize_back_to_masks() {
        let (c, a) = vocab();
        let (rle, b) = rect(3, 5, 17, 9);
        let mask = crate::ingest::decode_rle(&rle).unwrap();
        let out = ingest_pipeline(
            &file(&[("bus", 0.9, (rle, b))]),
            &c,
            &a,
            &AliasMap::default(),
            None,
            &IngestConfig::default(),
        )
        .unwrap();
        assert_eq!(out.scene.get(1).unwrap().mask.rasterize(64, 48), mask);
    }

    #[test]
    fn deterministic() {
        let (c, a) = vocab();
        let bytes = file(&[("bus", 0.9, rect(8, 8, 56, 32)), ("window", 0.3, rect(10, 10, 14, 14))]);
        let run = || {
            ingest_pipeline(&bytes, &c, &a, &AliasMap::default(), None, &IngestConfig::default())
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
