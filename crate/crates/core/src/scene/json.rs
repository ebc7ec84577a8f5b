//! Scene JSON: classes and attributes by name, children derived from parents.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Instance, InstanceId, InstanceMask, SceneError, SceneGraph};
use crate::geometry::Point;
use crate::vocab::{AttributeVocab, ClassVocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDoc {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub frozen_background: bool,
    pub instances: Vec<InstanceDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub id: InstanceId,
    pub class: String,
    #[serde(default = "one")]
    pub score: f64,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default)]
    pub parent: Option<InstanceId>,
    pub rings: Vec<Vec<Point>>,
}

fn one() -> f64 {
    1.0
}

impl SceneGraph {
    pub fn to_doc(
        &self,
        classes: &ClassVocab,
        attrs: &AttributeVocab,
    ) -> Result<SceneDoc, SceneError> {
        let instances = self
            .instances
            .values()
            .map(|inst| {
                let class = classes
                    .name(inst.class_id)
                    .ok_or(SceneError::InvalidClass(inst.id, inst.class_id))?
                    .to_string();
                let attributes = inst
                    .attributes
                    .iter()
                    .map(|a| {
                        attrs
                            .name(*a)
                            .map(str::to_string)
                            .ok_or(SceneError::InvalidAttribute(inst.id, *a))
                    })
                    .collect::<Result<_, _>>()?;
                Ok(InstanceDoc {
                    id: inst.id,
                    class,
                    score: inst.score,
                    attributes,
                    parent: inst.parent,
                    rings: inst.mask.rings.clone(),
                })
            })
            .collect::<Result<_, SceneError>>()?;
        Ok(SceneDoc {
            width: self.width,
            height: self.height,
            frozen_background: self.frozen_background,
            instances,
        })
    }

    /// Decode and validate a scene document.
    pub fn from_doc(
        doc: &SceneDoc,
        classes: &ClassVocab,
        attrs: &AttributeVocab,
    ) -> Result<Self, SceneError> {
        let mut scene = SceneGraph::empty(doc.width, doc.height);
        scene.frozen_background = doc.frozen_background;
        for d in &doc.instances {
            let class_id = classes
                .lookup(&d.class)
                .ok_or_else(|| SceneError::UnknownClass(d.class.clone()))?;
            let attributes = d
                .attributes
                .iter()
                .map(|n| {
                    attrs
                        .lookup(n)
                        .ok_or_else(|| SceneError::UnknownAttribute(n.clone()))
                })
                .collect::<Result<BTreeSet<_>, _>>()?;
            let inst = Instance {
                id: d.id,
                class_id,
                score: d.score,
                mask: InstanceMask::new(d.rings.clone()),
                attributes,
                parent: d.parent,
                children: Vec::new(),
            };
            if scene.instances.insert(d.id, inst).is_some() {
                return Err(SceneError::DuplicateId(d.id));
            }
        }
        for inst in scene.instances.values() {
            if let Some(p) = inst.parent {
                if !scene.instances.contains_key(&p) {
                    return Err(SceneError::AsymmetricLink(inst.id));
                }
            }
        }
        scene.relink_children();
        scene.validate()?;
        Ok(scene)
    }

    /// Canonical pretty JSON bytes (instances in id order, trailing newline).
    pub fn to_json(
        &self,
        classes: &ClassVocab,
        attrs: &AttributeVocab,
    ) -> Result<Vec<u8>, SceneError> {
        let mut out = serde_json::to_vec_pretty(&self.to_doc(classes, attrs)?)
            .map_err(|e| SceneError::Json(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(
        bytes: &[u8],
        classes: &ClassVocab,
        attrs: &AttributeVocab,
    ) -> Result<Self, SceneError> {
        let doc: SceneDoc =
            serde_json::from_slice(bytes).map_err(|e| SceneError::Json(e.to_string()))?;
        Self::from_doc(&doc, classes, attrs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::build_hierarchy;
    use crate::vocab::Role;

    fn vocabs() -> (ClassVocab, AttributeVocab) {
        (
            ClassVocab::from_names(&[("car", Role::Foreground), ("headlight", Role::Background)])
                .unwrap(),
            AttributeVocab::from_names(&["red", "rusty"]).unwrap(),
        )
    }

    #[test]
    fn json_round_trip() {
        let (c, a) = vocabs();
        let scene = build_hierarchy(
            vec![
                Instance::new(1, 1, InstanceMask::rect(10.0, 10.0, 60.0, 40.0))
                    .with_attributes([0, 1])
                    .with_score(0.875),
                Instance::new(2, 2, InstanceMask::rect(12.0, 30.0, 18.0, 36.0)),
            ],
            64,
            64,
        )
        .unwrap();
        let bytes = scene.to_json(&c, &a).unwrap();
        let back = SceneGraph::from_json(&bytes, &c, &a).unwrap();
        assert_eq!(back, scene);
        assert_eq!(back.to_json(&c, &a).unwrap(), bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("\"class\": \"car\""));
        assert!(text.contains("\"rusty\""));
    }

    #[test]
    fn cyclic_parent_links_rejected() {
        let (c, a) = vocabs();
        let doc = SceneDoc {
            width: 10,
            height: 10,
            frozen_background: false,
            instances: vec![
                InstanceDoc {
                    id: 1,
                    class: "car".into(),
                    score: 1.0,
                    attributes: vec![],
                    parent: Some(2),
                    rings: InstanceMask::rect(0.0, 0.0, 5.0, 5.0).rings,
                },
                InstanceDoc {
                    id: 2,
                    class: "car".into(),
                    score: 1.0,
                    attributes: vec![],
                    parent: Some(1),
                    rings: InstanceMask::rect(0.0, 0.0, 5.0, 5.0).rings,
                },
            ],
        };
        assert!(matches!(
            SceneGraph::from_doc(&doc, &c, &a),
            Err(SceneError::Cycle(_))
        ));
    }

    #[test]
    fn unknown_names_rejected() {
        let (c, a) = vocabs();
        let mut doc = SceneGraph::empty(8, 8).to_doc(&c, &a).unwrap();
        doc.instances.push(InstanceDoc {
            id: 1,
            class: "zebra".into(),
            score: 1.0,
            attributes: vec![],
            parent: None,
            rings: InstanceMask::rect(0.0, 0.0, 2.0, 2.0).rings,
        });
        assert_eq!(
            SceneGraph::from_doc(&doc, &c, &a),
            Err(SceneError::UnknownClass("zebra".into()))
        );
        doc.instances[0].class = "car".into();
        doc.instances[0].attributes = vec!["shiny".into()];
        assert_eq!(
            SceneGraph::from_doc(&doc, &c, &a),
            Err(SceneError::UnknownAttribute("shiny".into()))
        );
    }
}
