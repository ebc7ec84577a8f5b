//! Instance manipulations. Each returns the ids it touched.

use std::collections::BTreeSet;

use super::{InstanceId, SceneError, SceneGraph};
use crate::geometry::Point;
use crate::vocab::{AttrId, AttributeVocab};

impl SceneGraph {
    fn clamp_all(&mut self, ids: &[InstanceId]) {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        for id in ids {
            if let Some(inst) = self.instances.get_mut(id) {
                inst.mask.map_points(|p| p.clamp_to(w, h));
            }
        }
    }

    /// Translate an instance and all its descendants, clamping to the canvas.
    pub fn move_instance(
        &mut self,
        id: InstanceId,
        dx: f64,
        dy: f64,
    ) -> Result<Vec<InstanceId>, SceneError> {
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(SceneError::NonFinite);
        }
        let ids = self.subtree(id)?;
        for i in &ids {
            if let Some(inst) = self.instances.get_mut(i) {
                inst.mask.map_points(|p| p.translate(dx, dy));
            }
        }
        self.clamp_all(&ids);
        Ok(ids)
    }

    /// Scale an instance and its descendants about `pivot`.
    pub fn scale_instance(
        &mut self,
        id: InstanceId,
        factor: f64,
        pivot: Point,
    ) -> Result<Vec<InstanceId>, SceneError> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(SceneError::InvalidFactor(factor));
        }
        if !pivot.is_finite() {
            return Err(SceneError::NonFinite);
        }
        let ids = self.subtree(id)?;
        for i in &ids {
            if let Some(inst) = self.instances.get_mut(i) {
                inst.mask.map_points(|p| p.scale_about(pivot, factor));
            }
        }
        self.clamp_all(&ids);
        Ok(ids)
    }

    /// Delete an instance. With `cascade` its whole subtree goes; otherwise its
    /// children become roots. Returns removed ids followed by re-rooted ids.
    pub fn delete_instance(
        &mut self,
        id: InstanceId,
        cascade: bool,
    ) -> Result<Vec<InstanceId>, SceneError> {
        let inst = self.get(id)?.clone();
        let removed = if cascade {
            self.subtree(id)?
        } else {
            vec![id]
        };
        let mut changed = removed.clone();
        for r in &removed {
            self.instances.remove(r);
        }
        if let Some(p) = inst.parent.and_then(|p| self.instances.get_mut(&p)) {
            p.children.retain(|c| *c != id);
        }
        if !cascade {
            for c in &inst.children {
                if let Some(child) = self.instances.get_mut(c) {
                    child.parent = None;
                    changed.push(*c);
                }
            }
        }
        Ok(changed)
    }

    /// Deep-copy an instance subtree with fresh ids, translated by `offset`.
    /// The copy keeps the original's parent. Returns the new root id and all
    /// new ids.
    pub fn duplicate_instance(
        &mut self,
        id: InstanceId,
        offset: (f64, f64),
    ) -> Result<(InstanceId, Vec<InstanceId>), SceneError> {
        if !(offset.0.is_finite() && offset.1.is_finite()) {
            return Err(SceneError::NonFinite);
        }
        let ids = self.subtree(id)?;
        let base = self.next_id();
        let fresh = |old: InstanceId| -> InstanceId {
            let pos = ids.iter().position(|i| *i == old).expect("in subtree");
            base + pos as InstanceId
        };
        let mut copies = Vec::with_capacity(ids.len());
        for old in &ids {
            let mut c = self.get(*old)?.clone();
            c.id = fresh(*old);
            c.parent = if *old == id {
                c.parent
            } else {
                c.parent.map(fresh)
            };
            c.children = c.children.iter().copied().map(fresh).collect();
            c.mask.map_points(|p| p.translate(offset.0, offset.1));
            copies.push(c);
        }
        let new_ids: Vec<InstanceId> = copies.iter().map(|c| c.id).collect();
        let root = new_ids[0];
        let parent = copies[0].parent;
        for c in copies {
            self.instances.insert(c.id, c);
        }
        if let Some(p) = parent.and_then(|p| self.instances.get_mut(&p)) {
            p.children.push(root);
            p.children.sort_unstable();
        }
        self.clamp_all(&new_ids);
        Ok((root, new_ids))
    }

    /// Replace the attribute set of an instance. The empty set is allowed.
    pub fn set_attributes(
        &mut self,
        id: InstanceId,
        attrs: BTreeSet<AttrId>,
        vocab: &AttributeVocab,
    ) -> Result<(), SceneError> {
        if let Some(bad) = attrs.iter().find(|a| !vocab.contains(**a)) {
            return Err(SceneError::InvalidAttribute(id, *bad));
        }
        self.instances
            .get_mut(&id)
            .ok_or(SceneError::NoSuchInstance(id))?
            .attributes = attrs;
        Ok(())
    }
}
