//! Per-class attribute distributions, style randomization, and slerp.

mod sample;
mod slerp;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::SceneGraph;
use crate::vocab::{AttrId, AttributeVocab, ClassId, ClassVocab};

pub use sample::{sample_styles, SampleReport, Strategy};
pub use slerp::{interpolate_styles, slerp, OMEGA_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StyleError {
    #[error("empty corpus: no instances to fit")]
    EmptyCorpus,
    #[error("zero-length vector")]
    ZeroVector,
    #[error("vectors are anti-parallel; the great circle is undefined")]
    AntiParallel,
    #[error("interpolation parameter {0} outside [0, 1]")]
    BadT(f64),
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 interpolation steps, got {0}")]
    TooFewSteps(usize),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("probabilities for {class:?} sum to {sum}")]
    NotNormalized { class: String, sum: f64 },
    #[error("invalid probability {p} for {class:?}")]
    BadProbability { class: String, p: f64 },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("json: {0}")]
    Json(String),
}

pub type AttrSet = BTreeSet<AttrId>;

/// For each class, outcomes over exact attribute sets (the empty set and
/// compound sets are outcomes of their own), sorted by set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StyleDistribution {
    pub classes: BTreeMap<ClassId, Vec<(AttrSet, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct Outcome {
    attrs: Vec<String>,
    p: f64,
}

impl StyleDistribution {
    pub fn get(&self, class: ClassId) -> Option<&[(AttrSet, f64)]> {
        self.classes.get(&class).map(Vec::as_slice)
    }

    /// `{class_name: [{attrs: [names], p}]}`, pretty-printed with a trailing newline.
    pub fn to_json(&self, classes: &ClassVocab, attrs: &AttributeVocab) -> String {
        let mut doc: BTreeMap<String, Vec<Outcome>> = BTreeMap::new();
        for (c, outcomes) in &self.classes {
            let name = classes.name(*c).map_or_else(|| format!("#{c}"), str::to_string);
            let list = outcomes
                .iter()
                .map(|(set, p)| Outcome {
                    attrs: set
                        .iter()
                        .map(|a| attrs.name(*a).map_or_else(|| format!("#{a}"), str::to_string))
                        .collect(),
                    p: *p,
                })
                .collect();
            doc.insert(name, list);
        }
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, classes: &ClassVocab, attrs: &AttributeVocab) -> Result<Self, StyleError> {
        let doc: BTreeMap<String, Vec<Outcome>> =
            serde_json::from_str(text).map_err(|e| StyleError::Json(e.to_string()))?;
        let mut out = BTreeMap::new();
        for (name, list) in doc {
            let c = classes.lookup(&name).ok_or_else(|| StyleError::UnknownClass(name.clone()))?;
            let mut merged: BTreeMap<AttrSet, f64> = BTreeMap::new();
            for o in list {
                if !(o.p.is_finite() && (0.0..=1.0).contains(&o.p)) {
                    return Err(StyleError::BadProbability { class: name, p: o.p });
                }
                let set = o
                    .attrs
                    .iter()
                    .map(|a| attrs.lookup(a).ok_or_else(|| StyleError::UnknownAttribute(a.clone())))
                    .collect::<Result<AttrSet, _>>()?;
                *merged.entry(set).or_insert(0.0) += o.p;
            }
            let sum: f64 = merged.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(StyleError::NotNormalized { class: name, sum });
            }
            out.insert(c, merged.into_iter().collect());
        }
        Ok(Self { classes: out })
    }
}

/// Relative frequency of each exact attribute set among each class's instances.
pub fn fit_distribution(scenes: &[SceneGraph]) -> Result<StyleDistribution, StyleError> {
    let mut counts: BTreeMap<ClassId, BTreeMap<AttrSet, u64>> = BTreeMap::new();
    for scene in scenes {
        for inst in scene.instances.values() {
            *counts
                .entry(inst.class_id)
                .or_default()
                .entry(inst.attributes.clone())
                .or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(StyleError::EmptyCorpus);
    }
    let classes = counts
        .into_iter()
        .map(|(c, sets)| {
            let total: u64 = sets.values().sum();
            let list = sets
                .into_iter()
                .map(|(s, n)| (s, n as f64 / total as f64))
                .collect();
            (c, list)
        })
        .collect();
    Ok(StyleDistribution { classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Instance, InstanceMask};
    use crate::vocab::Role;

    pub(crate) fn vocabs() -> (ClassVocab, AttributeVocab) {
        (
            ClassVocab::from_names(&[("car", Role::Foreground), ("tree", Role::Background), ("wheel", Role::Background)])
                .unwrap(),
            AttributeVocab::from_names(&["red", "blue", "leafless"]).unwrap(),
        )
    }

    fn scene(items: &[(ClassId, &[AttrId])]) -> SceneGraph {
        let mut s = SceneGraph::empty(32, 32);
        for (i, (c, a)) in items.iter().enumerate() {
            let id = i as u32 + 1;
            let x = i as f64;
            s.instances.insert(
                id,
                Instance::new(id, *c, InstanceMask::rect(x, 0.0, x + 1.0, 1.0)).with_attributes(a.iter().copied()),
            );
        }
        s
    }

    #[test]
    fn counts_exact_sets() {
        let d = fit_distribution(&[scene(&[(1, &[0]), (1, &[0]), (1, &[])])]).unwrap();
        let car = d.get(1).unwrap();
        assert_eq!(car.len(), 2);
        assert_eq!(car[0], (AttrSet::new(), 1.0 / 3.0));
        assert_eq!(car[1], (AttrSet::from([0]), 2.0 / 3.0));
    }

    #[test]
    fn compound_set_is_its_own_outcome() {
        let d = fit_distribution(&[scene(&[(1, &[0, 1]), (1, &[1])])]).unwrap();
        let car = d.get(1).unwrap();
        assert_eq!(car.len(), 2);
        assert!(car.iter().any(|(s, p)| *s == AttrSet::from([0, 1]) && *p == 0.5));
    }

    #[test]
    fn fit_ignores_scene_order_and_rejects_empty() {
        let a = scene(&[(1, &[0]), (2, &[2])]);
        let b = scene(&[(1, &[]), (2, &[2]), (1, &[0])]);
        assert_eq!(
            fit_distribution(&[a.clone(), b.clone()]).unwrap(),
            fit_distribution(&[b, a]).unwrap()
        );
        assert_eq!(fit_distribution(&[]), Err(StyleError::EmptyCorpus));
        assert_eq!(fit_distribution(&[SceneGraph::empty(4, 4)]), Err(StyleError::EmptyCorpus));
    }

    #[test]
    fn json_round_trip() {
        let (cv, av) = vocabs();
        let d = fit_distribution(&[scene(&[(1, &[0, 1]), (1, &[]), (2, &[2]), (1, &[1])])]).unwrap();
        let text = d.to_json(&cv, &av);
        assert!(text.contains("\"car\""));
        assert_eq!(StyleDistribution::from_json(&text, &cv, &av).unwrap(), d);
        assert!(matches!(
            StyleDistribution::from_json(r#"{"car": [{"attrs": [], "p": 0.5}]}"#, &cv, &av),
            Err(StyleError::NotNormalized { .. })
        ));
        assert!(StyleDistribution::from_json(r#"{"bus": []}"#, &cv, &av).is_err());
    }
}
