//! Class and attribute vocabularies.
//!
//! Class id 0 is reserved for "no class" (unlabeled pixels); real classes are
//! numbered contiguously from 1. Attribute ids are contiguous from 0.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ClassId = u16;
pub type AttrId = u16;

/// Class id painted where no instance covers a pixel.
pub const NO_CLASS: ClassId = 0;

/// Number of merged detector classes used for the reference vocabulary.
pub const REFERENCE_CLASS_COUNT: usize = 280;

/// Size of the reference attribute vocabulary.
pub const REFERENCE_ATTRIBUTE_COUNT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Background,
    Foreground,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    pub id: ClassId,
    pub name: String,
    pub default_role: Role,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub id: AttrId,
    pub name: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("class ids must be contiguous from 1: expected {expected}, found {found}")]
    NonContiguous { expected: u32, found: u32 },
    #[error("name `{0}` is used by more than one class or alias")]
    DuplicateName(String),
    #[error("attribute id {0} out of range or duplicated")]
    BadAttributeId(AttrId),
    #[error("attribute name `{0}` is duplicated")]
    DuplicateAttribute(String),
    #[error("vocabulary too large for 16-bit ids")]
    TooLarge,
    #[error("invalid vocabulary json: {0}")]
    Json(String),
}

/// Validated class vocabulary with name/alias lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocab {
    classes: Vec<ClassDef>,
    by_name: HashMap<String, ClassId>,
}

impl ClassVocab {
    pub fn new(mut classes: Vec<ClassDef>) -> Result<Self, VocabError> {
        if classes.len() >= usize::from(u16::MAX) {
            return Err(VocabError::TooLarge);
        }
        classes.sort_by_key(|c| c.id);
        let mut by_name = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            let expected = i as u32 + 1;
            if u32::from(c.id) != expected {
                return Err(VocabError::NonContiguous {
                    expected,
                    found: c.id.into(),
                });
            }
            for name in std::iter::once(&c.name).chain(c.aliases.iter()) {
                if by_name.insert(name.clone(), c.id).is_some() {
                    return Err(VocabError::DuplicateName(name.clone()));
                }
            }
        }
        Ok(Self { classes, by_name })
    }

    /// Vocabulary built from `(name, role)` pairs, ids assigned in order.
    pub fn from_names<S: AsRef<str>>(names: &[(S, Role)]) -> Result<Self, VocabError> {
        Self::new(
            names
                .iter()
                .enumerate()
                .map(|(i, (n, r))| ClassDef {
                    id: (i + 1) as ClassId,
                    name: n.as_ref().to_string(),
                    default_role: *r,
                    aliases: BTreeSet::new(),
                })
                .collect(),
        )
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, VocabError> {
        let defs: Vec<ClassDef> =
            serde_json::from_slice(bytes).map_err(|e| VocabError::Json(e.to_string()))?;
        Self::new(defs)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.classes).expect("class defs serialize")
    }

    /// Number of real classes (excluding "no class").
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Resolve a class name or alias.
    pub fn lookup(&self, name: &str) -> Option<ClassId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassDef> {
        if id == NO_CLASS {
            return None;
        }
        self.classes.get(usize::from(id) - 1)
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.get(id).map(|c| c.name.as_str())
    }

    pub fn default_role(&self, id: ClassId) -> Option<Role> {
        self.get(id).map(|c| c.default_role)
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.get(id).is_some()
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }
}

/// Validated attribute vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeVocab {
    attrs: Vec<AttributeDef>,
    by_name: HashMap<String, AttrId>,
}

impl AttributeVocab {
    pub fn new(mut attrs: Vec<AttributeDef>) -> Result<Self, VocabError> {
        if attrs.len() > usize::from(u16::MAX) {
            return Err(VocabError::TooLarge);
        }
        attrs.sort_by_key(|a| a.id);
        let mut by_name = HashMap::new();
        for (i, a) in attrs.iter().enumerate() {
            if usize::from(a.id) != i {
                return Err(VocabError::BadAttributeId(a.id));
            }
            if by_name.insert(a.name.clone(), a.id).is_some() {
                return Err(VocabError::DuplicateAttribute(a.name.clone()));
            }
        }
        Ok(Self { attrs, by_name })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, VocabError> {
        Self::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| AttributeDef {
                    id: i as AttrId,
                    name: n.as_ref().to_string(),
                })
                .collect(),
        )
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, VocabError> {
        let defs: Vec<AttributeDef> =
            serde_json::from_slice(bytes).map_err(|e| VocabError::Json(e.to_string()))?;
        Self::new(defs)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.attrs).expect("attribute defs serialize")
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<AttrId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: AttrId) -> Option<&str> {
        self.attrs.get(usize::from(id)).map(|a| a.name.as_str())
    }

    pub fn contains(&self, id: AttrId) -> bool {
        usize::from(id) < self.attrs.len()
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attrs
    }
}

/// Class and attribute vocabularies loaded together from one file:
/// `{"classes": [...], "attributes": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub classes: ClassVocab,
    pub attributes: AttributeVocab,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    classes: Vec<ClassDef>,
    #[serde(default)]
    attributes: Vec<AttributeDef>,
}

impl Vocabulary {
    pub fn from_json(bytes: &[u8]) -> Result<Self, VocabError> {
        let f: VocabularyFile =
            serde_json::from_slice(bytes).map_err(|e| VocabError::Json(e.to_string()))?;
        Ok(Self {
            classes: ClassVocab::new(f.classes)?,
            attributes: AttributeVocab::new(f.attributes)?,
        })
    }

    pub fn to_json(&self) -> Vec<u8> {
        let f = VocabularyFile {
            classes: self.classes.classes().to_vec(),
            attributes: self.attributes.attributes().to_vec(),
        };
        let mut out = serde_json::to_vec_pretty(&f).expect("vocabulary serializes");
        out.push(b'\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combined_file_round_trip() {
        let v = Vocabulary {
            classes: ClassVocab::from_names(&[("sky", Role::Background), ("car", Role::Foreground)]).unwrap(),
            attributes: AttributeVocab::from_names(&["red"]).unwrap(),
        };
        assert_eq!(Vocabulary::from_json(&v.to_json()).unwrap(), v);
    }

    #[test]
    fn class_ids_must_be_contiguous() {
        let mut defs = vec![ClassDef {
            id: 2,
            name: "car".into(),
            default_role: Role::Foreground,
            aliases: BTreeSet::new(),
        }];
        assert!(matches!(
            ClassVocab::new(defs.clone()),
            Err(VocabError::NonContiguous { .. })
        ));
        defs[0].id = 1;
        assert!(ClassVocab::new(defs).is_ok());
    }

    #[test]
    fn alias_collision_rejected_and_lookup_resolves_aliases() {
        let defs = vec![
            ClassDef {
                id: 1,
                name: "car".into(),
                default_role: Role::Foreground,
                aliases: ["vehicle".to_string()].into(),
            },
            ClassDef {
                id: 2,
                name: "vehicle".into(),
                default_role: Role::Foreground,
                aliases: BTreeSet::new(),
            },
        ];
        assert_eq!(
            ClassVocab::new(defs.clone()),
            Err(VocabError::DuplicateName("vehicle".into()))
        );
        let v = ClassVocab::new(defs[..1].to_vec()).unwrap();
        assert_eq!(v.lookup("vehicle"), Some(1));
        assert_eq!(v.name(1), Some("car"));
        assert_eq!(v.get(NO_CLASS), None);
    }

    #[test]
    fn vocab_json_round_trip() {
        let v = ClassVocab::from_names(&[("sky", Role::Background), ("car", Role::Foreground)])
            .unwrap();
        assert_eq!(ClassVocab::from_json(&v.to_json()).unwrap(), v);
        let a = AttributeVocab::from_names(&["red", "rusty"]).unwrap();
        assert_eq!(AttributeVocab::from_json(&a.to_json()).unwrap(), a);
        assert_eq!(a.lookup("rusty"), Some(1));
    }
}
