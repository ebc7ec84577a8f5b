//! Painting scenes into the sparse label planes consumed by the conditioning
//! kernels.
//!
//! Instances are drawn from the largest to the smallest pixel area so that
//! parts (a headlight) land on top of the objects that contain them (a car).
//! Equal areas are drawn in ascending id order, so the higher id wins.

pub mod fill;
mod encode;
mod render;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::mask::Bitmap;
use crate::scene::{InstanceId, SceneGraph};
use crate::vocab::{AttrId, ClassId, Role, NO_CLASS};

pub use encode::{
    decode_label_png, decode_raw, encode_label_png, encode_raw, encode_rgb_png, Palette,
    RAW_MAGIC,
};
pub use render::{output_size, render_maps, render_png, render_raw, RasterKind};

/// Default output resolution (square).
pub const DEFAULT_RESOLUTION: u32 = 256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("label value {0} does not fit a 16-bit png")]
    LabelOverflow(u32),
    #[error("dimensions {0}x{1} not encodable")]
    BadDimensions(usize, usize),
    #[error("png: {0}")]
    Png(String),
    #[error("raw dump: {0}")]
    Raw(String),
}

/// Per-pixel class and instance planes, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMaps {
    pub width: usize,
    pub height: usize,
    pub class_map: Vec<ClassId>,
    pub instance_map: Vec<InstanceId>,
}

impl LabelMaps {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            class_map: vec![NO_CLASS; width * height],
            instance_map: vec![0; width * height],
        }
    }

    #[inline]
    pub fn class_at(&self, x: usize, y: usize) -> ClassId {
        self.class_map[y * self.width + x]
    }

    #[inline]
    pub fn instance_at(&self, x: usize, y: usize) -> InstanceId {
        self.instance_map[y * self.width + x]
    }

    /// Set of class ids that appear anywhere, `NO_CLASS` included when present.
    pub fn classes_present(&self) -> std::collections::BTreeSet<ClassId> {
        self.class_map.iter().copied().collect()
    }

    pub fn nonzero_pixels(&self) -> usize {
        self.instance_map.iter().filter(|i| **i != 0).count()
    }
}

/// Rasterize at canvas resolution.
pub fn rasterize(scene: &SceneGraph) -> LabelMaps {
    rasterize_at(scene, scene.width as usize, scene.height as usize)
}

/// Rasterize at an arbitrary output resolution; polygon coordinates are scaled
/// from the canvas. Draw order uses areas measured at the output resolution.
pub fn rasterize_at(scene: &SceneGraph, width: usize, height: usize) -> LabelMaps {
    let mut maps = LabelMaps::empty(width, height);
    if scene.width == 0 || scene.height == 0 {
        return maps;
    }
    let sx = width as f64 / f64::from(scene.width);
    let sy = height as f64 / f64::from(scene.height);
    let mut drawn: Vec<(usize, InstanceId, ClassId, Bitmap)> = scene
        .instances
        .values()
        .map(|inst| {
            let bm = fill::fill_rings_scaled(&inst.mask.rings, width, height, sx, sy);
            (bm.count(), inst.id, inst.class_id, bm)
        })
        .collect();
    drawn.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, id, class, bm) in &drawn {
        for (p, on) in bm.bits().iter().enumerate() {
            if *on {
                maps.class_map[p] = *class;
                maps.instance_map[p] = *id;
            }
        }
    }
    maps
}

/// Split label maps into a background plane and a foreground plane.
///
/// A pixel goes to the plane of the role its owning instance resolves to;
/// the other plane gets 0 there. Owners missing from `roles` count as
/// background.
pub fn split_bg_fg(maps: &LabelMaps, roles: &BTreeMap<InstanceId, Role>) -> (LabelMaps, LabelMaps) {
    let mut bg = LabelMaps::empty(maps.width, maps.height);
    let mut fg = LabelMaps::empty(maps.width, maps.height);
    for (p, (&inst, &class)) in maps.instance_map.iter().zip(&maps.class_map).enumerate() {
        if inst == 0 {
            continue;
        }
        let target = match roles.get(&inst) {
            Some(Role::Foreground) => &mut fg,
            _ => &mut bg,
        };
        target.instance_map[p] = inst;
        target.class_map[p] = class;
    }
    (bg, fg)
}

/// Multi-hot attribute plane stored sparsely: each pixel indexes a shared
/// table of attribute sets (index 0 is the empty set).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributePlane {
    pub width: usize,
    pub height: usize,
    sets: Vec<Vec<AttrId>>,
    pixels: Vec<u32>,
}

impl AttributePlane {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            sets: vec![Vec::new()],
            pixels: vec![0; width * height],
        }
    }

    /// Attribute ids at pixel `(x, y)`, ascending.
    pub fn at(&self, x: usize, y: usize) -> &[AttrId] {
        &self.sets[self.pixels[y * self.width + x] as usize]
    }

    pub fn at_index(&self, p: usize) -> &[AttrId] {
        &self.sets[self.pixels[p] as usize]
    }

    /// Assign a sorted, deduplicated copy of `attrs` to pixel `(x, y)`.
    pub fn set(&mut self, x: usize, y: usize, attrs: &[AttrId]) {
        let mut key = attrs.to_vec();
        key.sort_unstable();
        key.dedup();
        let idx = match self.sets.iter().position(|s| *s == key) {
            Some(i) => i,
            None => {
                self.sets.push(key);
                self.sets.len() - 1
            }
        };
        self.pixels[y * self.width + x] = idx as u32;
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.iter().all(|s| self.sets[*s as usize].is_empty())
    }

    /// Dense `H x W x n_attr` multi-hot expansion, row-major.
    pub fn to_dense(&self, n_attr: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.width * self.height * n_attr];
        for p in 0..self.pixels.len() {
            for a in self.at_index(p) {
                out[p * n_attr + usize::from(*a)] = 1.0;
            }
        }
        out
    }
}

/// Broadcast each instance's attributes over the pixels it owns in `maps`.
pub fn attribute_plane(scene: &SceneGraph, maps: &LabelMaps) -> AttributePlane {
    let mut plane = AttributePlane::empty(maps.width, maps.height);
    let mut index: BTreeMap<InstanceId, u32> = BTreeMap::new();
    for inst in scene.instances.values() {
        if inst.attributes.is_empty() {
            index.insert(inst.id, 0);
        } else {
            index.insert(inst.id, plane.sets.len() as u32);
            plane.sets.push(inst.attributes.iter().copied().collect());
        }
    }
    for (p, inst) in maps.instance_map.iter().enumerate() {
        if *inst != 0 {
            plane.pixels[p] = index.get(inst).copied().unwrap_or(0);
        }
    }
    plane
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_hierarchy, resolve_roles, Instance, InstanceMask};
    use crate::vocab::ClassVocab;

    fn car_scene() -> SceneGraph {
        build_hierarchy(
            vec![
                Instance::new(1, 1, InstanceMask::rect(10.0, 10.0, 60.0, 40.0)).with_attributes([0]),
                Instance::new(2, 2, InstanceMask::rect(12.0, 30.0, 18.0, 36.0)),
                Instance::new(3, 3, InstanceMask::rect(0.0, 50.0, 64.0, 64.0)),
            ],
            64,
            64,
        )
        .unwrap()
    }

    fn vocab() -> ClassVocab {
        ClassVocab::from_names(&[
            ("car", Role::Foreground),
            ("headlight", Role::Background),
            ("road", Role::Background),
        ])
        .unwrap()
    }

    #[test]
    fn headlight_drawn_over_car() {
        let maps = rasterize(&car_scene());
        assert_eq!(maps.class_at(14, 32), 2);
        assert_eq!(maps.class_at(30, 20), 1);
        assert_eq!(maps.class_at(1, 1), NO_CLASS);
        assert_eq!(maps.instance_at(14, 32), 2);
    }

    #[test]
    fn empty_scene_is_all_zero() {
        let maps = rasterize(&SceneGraph::empty(16, 16));
        assert!(maps.class_map.iter().all(|c| *c == 0));
        assert!(maps.instance_map.iter().all(|c| *c == 0));
    }

    #[test]
    fn equal_area_higher_id_wins() {
        let scene = build_hierarchy(
            vec![
                Instance::new(7, 1, InstanceMask::rect(0.0, 0.0, 4.0, 4.0)),
                Instance::new(3, 2, InstanceMask::rect(0.0, 0.0, 4.0, 4.0)),
            ],
            8,
            8,
        )
        .unwrap();
        assert_eq!(rasterize(&scene).instance_at(1, 1), 7);
    }

    #[test]
    fn scaling_changes_draw_order() {
        let mut scene = build_hierarchy(
            vec![
                Instance::new(1, 1, InstanceMask::rect(15.0, 15.0, 25.0, 25.0)),
                Instance::new(2, 2, InstanceMask::rect(20.0, 20.0, 24.0, 24.0)),
            ],
            64,
            64,
        )
        .unwrap();
        assert_eq!(rasterize(&scene).instance_at(21, 21), 2);
        scene
            .scale_instance(2, 10.0, crate::Point::new(20.0, 20.0))
            .unwrap();
        // instance 2 now covers 40x40 and is drawn first; 1 lands on top
        let maps = rasterize(&scene);
        assert_eq!(maps.instance_at(21, 21), 1);
        assert_eq!(maps.instance_at(40, 40), 2);
    }

    #[test]
    fn bg_fg_split_follows_roles() {
        let scene = car_scene();
        let maps = rasterize(&scene);
        let (bg, fg) = split_bg_fg(&maps, &resolve_roles(&scene, &vocab()));
        assert_eq!(fg.class_at(14, 32), 2, "headlight child of car is foreground");
        assert_eq!(fg.class_at(30, 20), 1);
        assert_eq!(bg.class_at(30, 60), 3);
        assert_eq!(bg.class_at(30, 20), 0);
        for p in 0..maps.class_map.len() {
            let (b, f) = (bg.instance_map[p] != 0, fg.instance_map[p] != 0);
            assert!(!(b && f));
            assert_eq!(b || f, maps.instance_map[p] != 0);
        }
    }

    #[test]
    fn all_background_scene_has_empty_fg() {
        let scene = build_hierarchy(
            vec![Instance::new(1, 3, InstanceMask::rect(0.0, 0.0, 8.0, 8.0))],
            8,
            8,
        )
        .unwrap();
        let maps = rasterize(&scene);
        let (_, fg) = split_bg_fg(&maps, &resolve_roles(&scene, &vocab()));
        assert_eq!(fg.nonzero_pixels(), 0);
    }

    #[test]
    fn attribute_plane_follows_owner() {
        let scene = car_scene();
        let maps = rasterize(&scene);
        let plane = attribute_plane(&scene, &maps);
        assert_eq!(plane.at(30, 20), &[0]);
        assert!(plane.at(14, 32).is_empty(), "headlight owns its pixels");
        assert!(plane.at(1, 1).is_empty());
        for p in 0..maps.instance_map.len() {
            let owner = maps.instance_map[p];
            let expect: Vec<AttrId> = if owner == 0 {
                vec![]
            } else {
                scene.get(owner).unwrap().attributes.iter().copied().collect()
            };
            assert_eq!(plane.at_index(p), expect.as_slice());
        }
        assert!(attribute_plane(&SceneGraph::empty(4, 4), &LabelMaps::empty(4, 4)).is_empty());
    }

    #[test]
    fn resolution_scales_coordinates() {
        let maps = rasterize_at(&car_scene(), 128, 128);
        assert_eq!(maps.class_at(28, 64), 2);
        assert_eq!(maps.class_at(60, 40), 1);
    }
}
