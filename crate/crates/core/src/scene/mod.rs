//! The editable sparse scene: a canvas-sized forest of class-labeled,
//! attribute-tagged instances with polygon masks.
//!
//! Masks are polygons so that translation and scaling are exact; they are
//! rasterized on demand (pixel centers, even-odd) whenever pixel areas or
//! containment are needed.

mod edit;
mod hierarchy;
mod json;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::geometry::{BBox, Point};
use crate::mask::Bitmap;
use crate::raster::fill::fill_rings;
use crate::vocab::{AttrId, AttributeVocab, ClassId, ClassVocab};

pub use hierarchy::{build_hierarchy, build_hierarchy_with, resolve_roles, DEFAULT_CONTAINMENT};
pub use json::{InstanceDoc, SceneDoc};

pub type InstanceId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("no such instance: {0}")]
    NoSuchInstance(InstanceId),
    #[error("duplicate instance id {0}")]
    DuplicateId(InstanceId),
    #[error("instance id 0 is reserved")]
    ZeroId,
    #[error("scale factor must be finite and > 0, got {0}")]
    InvalidFactor(f64),
    #[error("non-finite coordinate or offset")]
    NonFinite,
    #[error("instance {0}: ring with fewer than 3 points")]
    ShortRing(InstanceId),
    #[error("instance {id}: point ({x}, {y}) outside the {width}x{height} canvas")]
    OutOfBounds {
        id: InstanceId,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("instance {0}: score outside [0, 1]")]
    BadScore(InstanceId),
    #[error("instance {0}: invalid attribute id {1}")]
    InvalidAttribute(InstanceId, AttrId),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("instance {0}: invalid class id {1}")]
    InvalidClass(InstanceId, ClassId),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("instance {0}: parent/child links are not symmetric")]
    AsymmetricLink(InstanceId),
    #[error("instance {0} is its own ancestor")]
    Cycle(InstanceId),
    #[error("invalid scene json: {0}")]
    Json(String),
}

/// Polygon mask: one or more rings filled with the even-odd rule.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceMask {
    pub rings: Vec<Vec<Point>>,
}

impl InstanceMask {
    pub fn new(rings: Vec<Vec<Point>>) -> Self {
        Self { rings }
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]])
    }

    /// Tight bound of all ring points.
    pub fn bbox(&self) -> Option<BBox> {
        BBox::of_points(self.rings.iter().flatten())
    }

    pub fn rasterize(&self, width: usize, height: usize) -> Bitmap {
        fill_rings(&self.rings, width, height)
    }

    /// Rasterized pixel count at canvas resolution.
    pub fn area_px(&self, width: u32, height: u32) -> usize {
        self.rasterize(width as usize, height as usize).count()
    }

    pub fn map_points(&mut self, f: impl Fn(Point) -> Point) {
        for p in self.rings.iter_mut().flatten() {
            *p = f(*p);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: InstanceId,
    pub class_id: ClassId,
    pub score: f64,
    pub mask: InstanceMask,
    pub attributes: BTreeSet<AttrId>,
    pub parent: Option<InstanceId>,
    /// Kept sorted ascending.
    pub children: Vec<InstanceId>,
}

impl Instance {
    pub fn new(id: InstanceId, class_id: ClassId, mask: InstanceMask) -> Self {
        Self {
            id,
            class_id,
            score: 1.0,
            mask,
            attributes: BTreeSet::new(),
            parent: None,
            children: Vec::new(),
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn with_attributes(mut self, attrs: impl IntoIterator<Item = AttrId>) -> Self {
        self.attributes = attrs.into_iter().collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub width: u32,
    pub height: u32,
    pub instances: BTreeMap<InstanceId, Instance>,
    pub frozen_background: bool,
}

impl SceneGraph {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            instances: BTreeMap::new(),
            frozen_background: false,
        }
    }

    pub fn get(&self, id: InstanceId) -> Result<&Instance, SceneError> {
        self.instances.get(&id).ok_or(SceneError::NoSuchInstance(id))
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn roots(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values().filter(|i| i.parent.is_none())
    }

    /// `id` followed by all of its descendants, depth-first.
    pub fn subtree(&self, id: InstanceId) -> Result<Vec<InstanceId>, SceneError> {
        self.get(id)?;
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            if out.len() > self.instances.len() {
                return Err(SceneError::Cycle(id));
            }
            out.push(cur);
            if let Some(inst) = self.instances.get(&cur) {
                stack.extend(inst.children.iter().rev());
            }
        }
        Ok(out)
    }

    /// Ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: InstanceId) -> Result<Vec<InstanceId>, SceneError> {
        let mut out = Vec::new();
        let mut cur = self.get(id)?.parent;
        while let Some(p) = cur {
            if p == id || out.len() > self.instances.len() {
                return Err(SceneError::Cycle(id));
            }
            out.push(p);
            cur = self.get(p)?.parent;
        }
        Ok(out)
    }

    pub fn next_id(&self) -> InstanceId {
        self.instances.keys().next_back().map_or(1, |m| m + 1)
    }

    /// Pixel area of every instance at canvas resolution.
    pub fn areas(&self) -> BTreeMap<InstanceId, usize> {
        self.instances
            .iter()
            .map(|(id, i)| (*id, i.mask.area_px(self.width, self.height)))
            .collect()
    }

    /// Structural checks: ring sizes, canvas bounds, scores, symmetric links,
    /// and acyclicity.
    pub fn validate(&self) -> Result<(), SceneError> {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        for (id, inst) in &self.instances {
            if *id == 0 {
                return Err(SceneError::ZeroId);
            }
            if inst.id != *id {
                return Err(SceneError::DuplicateId(*id));
            }
            if !(0.0..=1.0).contains(&inst.score) {
                return Err(SceneError::BadScore(*id));
            }
            for ring in &inst.mask.rings {
                if ring.len() < 3 {
                    return Err(SceneError::ShortRing(*id));
                }
                for p in ring {
                    if !p.is_finite() {
                        return Err(SceneError::NonFinite);
                    }
                    if p.x < 0.0 || p.y < 0.0 || p.x > w || p.y > h {
                        return Err(SceneError::OutOfBounds {
                            id: *id,
                            x: p.x,
                            y: p.y,
                            width: self.width,
                            height: self.height,
                        });
                    }
                }
            }
            if let Some(p) = inst.parent {
                if p == *id {
                    return Err(SceneError::Cycle(*id));
                }
                let parent = self
                    .instances
                    .get(&p)
                    .ok_or(SceneError::AsymmetricLink(*id))?;
                if !parent.children.contains(id) {
                    return Err(SceneError::AsymmetricLink(*id));
                }
            }
            let mut seen = BTreeSet::new();
            for c in &inst.children {
                if !seen.insert(*c) {
                    return Err(SceneError::AsymmetricLink(*id));
                }
                match self.instances.get(c) {
                    Some(child) if child.parent == Some(*id) => {}
                    _ => return Err(SceneError::AsymmetricLink(*id)),
                }
            }
        }
        for id in self.instances.keys() {
            self.ancestors(*id)?;
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus class and attribute ids against vocabularies.
    pub fn validate_with(
        &self,
        classes: &ClassVocab,
        attrs: &AttributeVocab,
    ) -> Result<(), SceneError> {
        self.validate()?;
        for inst in self.instances.values() {
            if !classes.contains(inst.class_id) {
                return Err(SceneError::InvalidClass(inst.id, inst.class_id));
            }
            if let Some(a) = inst.attributes.iter().find(|a| !attrs.contains(**a)) {
                return Err(SceneError::InvalidAttribute(inst.id, *a));
            }
        }
        Ok(())
    }

    /// Recompute child lists from parent links (sorted ascending).
    pub(crate) fn relink_children(&mut self) {
        let mut children: BTreeMap<InstanceId, Vec<InstanceId>> = BTreeMap::new();
        for inst in self.instances.values() {
            if let Some(p) = inst.parent {
                children.entry(p).or_default().push(inst.id);
            }
        }
        for inst in self.instances.values_mut() {
            inst.children = children.remove(&inst.id).unwrap_or_default();
        }
    }
}
