//! One-call rendering of a scene to an encoded label image, shared by the
//! CLI and the service so both produce identical bytes.

use std::fmt;
use std::str::FromStr;

use super::{encode_label_png, encode_raw, rasterize_at, split_bg_fg, LabelMaps, Palette, RasterError};
use crate::scene::{resolve_roles, SceneGraph};
use crate::vocab::ClassVocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    Class,
    Instance,
    Bg,
    Fg,
}

impl FromStr for RasterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "class" => Ok(RasterKind::Class),
            "instance" => Ok(RasterKind::Instance),
            "bg" => Ok(RasterKind::Bg),
            "fg" => Ok(RasterKind::Fg),
            _ => Err(format!("unknown raster kind {s:?} (expected class|instance|bg|fg)")),
        }
    }
}

impl fmt::Display for RasterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RasterKind::Class => "class",
            RasterKind::Instance => "instance",
            RasterKind::Bg => "bg",
            RasterKind::Fg => "fg",
        })
    }
}

/// Output size with the longer side equal to `res` (canvas size if `None`).
pub fn output_size(scene: &SceneGraph, res: Option<u32>) -> (usize, usize) {
    let (w, h) = (scene.width.max(1), scene.height.max(1));
    match res {
        None => (w as usize, h as usize),
        Some(r) => {
            let long = w.max(h) as f64;
            let scale = f64::from(r) / long;
            let sw = ((f64::from(w) * scale).round() as usize).max(1);
            let sh = ((f64::from(h) * scale).round() as usize).max(1);
            (sw, sh)
        }
    }
}

/// Label planes for `kind`. For the split kinds, pixels owned by the other
/// role are 0.
pub fn render_maps(scene: &SceneGraph, classes: &ClassVocab, kind: RasterKind, res: Option<u32>) -> LabelMaps {
    let (w, h) = output_size(scene, res);
    let maps = rasterize_at(scene, w, h);
    match kind {
        RasterKind::Class | RasterKind::Instance => maps,
        RasterKind::Bg | RasterKind::Fg => {
            let (bg, fg) = split_bg_fg(&maps, &resolve_roles(scene, classes));
            if kind == RasterKind::Bg { bg } else { fg }
        }
    }
}

/// PNG of the class plane (or instance plane for [`RasterKind::Instance`]).
pub fn render_png(
    scene: &SceneGraph,
    classes: &ClassVocab,
    kind: RasterKind,
    res: Option<u32>,
) -> Result<Vec<u8>, RasterError> {
    let maps = render_maps(scene, classes, kind, res);
    let palette = Palette::default();
    match kind {
        RasterKind::Instance => encode_label_png(&maps.instance_map, maps.width, maps.height, &palette),
        _ => maps.class_png(&palette),
    }
}

/// `SPMK` dump of the same plane [`render_png`] would encode.
pub fn render_raw(
    scene: &SceneGraph,
    classes: &ClassVocab,
    kind: RasterKind,
    res: Option<u32>,
) -> Result<Vec<u8>, RasterError> {
    let mut maps = render_maps(scene, classes, kind, res);
    if kind == RasterKind::Instance {
        maps.class_map = maps
            .instance_map
            .iter()
            .map(|i| u16::try_from(*i).map_err(|_| RasterError::LabelOverflow(*i)))
            .collect::<Result<_, _>>()?;
    }
    encode_raw(&maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{decode_label_png, decode_raw};
    use crate::scene::{build_hierarchy, Instance, InstanceMask};
    use crate::vocab::Role;

    fn setup() -> (SceneGraph, ClassVocab) {
        let v = ClassVocab::from_names(&[("road", Role::Background), ("car", Role::Foreground)]).unwrap();
        let s = build_hierarchy(
            vec![
                Instance::new(1, 1, InstanceMask::rect(0.0, 20.0, 40.0, 30.0)),
                Instance::new(2, 2, InstanceMask::rect(5.0, 22.0, 15.0, 28.0)),
            ],
            40,
            30,
        )
        .unwrap();
        (s, v)
    }

    #[test]
    fn sizes_follow_longer_side() {
        let (s, _) = setup();
        assert_eq!(output_size(&s, None), (40, 30));
        assert_eq!(output_size(&s, Some(80)), (80, 60));
        assert_eq!(output_size(&s, Some(20)), (20, 15));
    }

    #[test]
    fn split_kinds_partition_the_class_plane() {
        let (s, v) = setup();
        let (_, _, full) = decode_label_png(&render_png(&s, &v, RasterKind::Class, None).unwrap()).unwrap();
        let (_, _, bg) = decode_label_png(&render_png(&s, &v, RasterKind::Bg, None).unwrap()).unwrap();
        let (_, _, fg) = decode_label_png(&render_png(&s, &v, RasterKind::Fg, None).unwrap()).unwrap();
        for p in 0..full.len() {
            assert!(bg[p] == 0 || fg[p] == 0);
            assert_eq!(bg[p].max(fg[p]), full[p]);
        }
        assert!(fg.contains(&2) && bg.contains(&1));
    }

    #[test]
    fn raw_matches_png_values() {
        let (s, v) = setup();
        let (w, h, ids) = decode_raw(&render_raw(&s, &v, RasterKind::Instance, Some(20)).unwrap()).unwrap();
        let (w2, h2, vals) = decode_label_png(&render_png(&s, &v, RasterKind::Instance, Some(20)).unwrap()).unwrap();
        assert_eq!((w, h), (w2, h2));
        assert!(ids.iter().zip(&vals).all(|(a, b)| u32::from(*a) == *b));
    }

    #[test]
    fn kinds_parse() {
        for k in ["class", "instance", "bg", "fg"] {
            assert_eq!(k.parse::<RasterKind>().unwrap().to_string(), k);
        }
        assert!("depth".parse::<RasterKind>().is_err());
    }
}
