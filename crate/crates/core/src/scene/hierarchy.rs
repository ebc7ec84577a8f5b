//! Containment hierarchy and background/foreground role resolution.

use std::collections::BTreeMap;

use super::{Instance, InstanceId, SceneError, SceneGraph};
use crate::mask::{Bitmap, PixelBounds};
use crate::vocab::{ClassVocab, Role};

/// Fraction of a child's pixels that must fall inside its parent.
pub const DEFAULT_CONTAINMENT: f64 = 0.7;

/// Build a scene from loose instances, linking each instance to the smallest
/// instance containing at least 70% of its pixels.
pub fn build_hierarchy(
    instances: Vec<Instance>,
    width: u32,
    height: u32,
) -> Result<SceneGraph, SceneError> {
    build_hierarchy_with(instances, width, height, DEFAULT_CONTAINMENT)
}

struct Rasterized {
    id: InstanceId,
    area: usize,
    bounds: Option<PixelBounds>,
    bitmap: Bitmap,
}

/// Like [`build_hierarchy`] with an explicit containment threshold.
///
/// Containment is `|child ∩ parent| / |child|` on pixels rasterized at canvas
/// resolution. A candidate parent must rank before the child in
/// (area descending, id ascending) order, which keeps the result a forest even
/// for near-identical masks. Among qualifying candidates the smallest area
/// wins, ties going to the lowest id. Zero-area instances stay roots and never
/// receive children.
pub fn build_hierarchy_with(
    instances: Vec<Instance>,
    width: u32,
    height: u32,
    threshold: f64,
) -> Result<SceneGraph, SceneError> {
    let mut scene = SceneGraph::empty(width, height);
    let (w, h) = (f64::from(width), f64::from(height));
    for mut inst in instances {
        if inst.id == 0 {
            return Err(SceneError::ZeroId);
        }
        if inst.mask.rings.iter().flatten().any(|p| !p.is_finite()) {
            return Err(SceneError::NonFinite);
        }
        inst.mask.map_points(|p| p.clamp_to(w, h));
        inst.parent = None;
        inst.children.clear();
        let id = inst.id;
        if scene.instances.insert(id, inst).is_some() {
            return Err(SceneError::DuplicateId(id));
        }
    }
    link(&mut scene, threshold);
    Ok(scene)
}

impl SceneGraph {
    /// Recompute all parent/child links from geometry.
    pub fn rebuild_hierarchy(&mut self, threshold: f64) {
        link(self, threshold);
    }
}

fn link(scene: &mut SceneGraph, threshold: f64) {
    let (w, h) = (scene.width as usize, scene.height as usize);
    let masks: Vec<Rasterized> = scene
        .instances
        .values()
        .map(|inst| {
            let bitmap = inst.mask.rasterize(w, h);
            Rasterized {
                id: inst.id,
                area: bitmap.count(),
                bounds: bitmap.bounds(),
                bitmap,
            }
        })
        .collect();

    let ranks_before = |a: &Rasterized, b: &Rasterized| {
        a.area > b.area || (a.area == b.area && a.id < b.id)
    };

    let mut parents: BTreeMap<InstanceId, InstanceId> = BTreeMap::new();
    for child in &masks {
        let Some(child_bounds) = child.bounds else {
            continue;
        };
        let mut best: Option<&Rasterized> = None;
        for cand in &masks {
            if cand.id == child.id || cand.area == 0 || !ranks_before(cand, child) {
                continue;
            }
            let Some(window) = cand.bounds.and_then(|b| b.intersect(&child_bounds)) else {
                continue;
            };
            let inter = child.bitmap.intersection_in(&cand.bitmap, window);
            if (inter as f64) / (child.area as f64) < threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => cand.area < b.area || (cand.area == b.area && cand.id < b.id),
            };
            if better {
                best = Some(cand);
            }
        }
        if let Some(p) = best {
            parents.insert(child.id, p.id);
        }
    }
    for inst in scene.instances.values_mut() {
        inst.parent = parents.get(&inst.id).copied();
    }
    scene.relink_children();
}

/// Resolve each instance to background or foreground.
///
/// An instance takes its class's default role, switching to foreground when
/// any ancestor resolves to foreground. Classes missing from the vocabulary
/// default to background.
pub fn resolve_roles(scene: &SceneGraph, classes: &ClassVocab) -> BTreeMap<InstanceId, Role> {
    let default = |inst: &Instance| {
        classes
            .default_role(inst.class_id)
            .unwrap_or(Role::Background)
    };
    let mut roles = BTreeMap::new();
    for inst in scene.instances.values() {
        let mut role = default(inst);
        let mut cur = inst.parent;
        let mut steps = 0;
        while role == Role::Background {
            let Some(p) = cur.and_then(|p| scene.instances.get(&p)) else {
                break;
            };
            role = default(p);
            cur = p.parent;
            steps += 1;
            if steps > scene.instances.len() {
                break;
            }
        }
        roles.insert(inst.id, role);
    }
    roles
}
