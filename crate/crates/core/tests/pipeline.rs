use std::collections::BTreeSet;

use sparsescene::compositor::blend;
use sparsescene::condkernel::{toy_forward, StyleInput, ToyConfig, ToyWeights};
use sparsescene::ingest::{encode_rle, ingest_pipeline, AliasMap, IngestConfig};
use sparsescene::preview::{preview_rgb, PreviewStyle};
use sparsescene::raster::{rasterize, render_maps, split_bg_fg, RasterKind};
use sparsescene::scene::resolve_roles;
use sparsescene::{AttributeVocab, Bitmap, ClassVocab, Role, SceneGraph, Tensor};

fn vocab() -> (ClassVocab, AttributeVocab) {
    (
        ClassVocab::from_names(&[
            ("sky", Role::Background),
            ("car", Role::Foreground),
            ("wheel", Role::Background),
        ])
        .unwrap(),
        AttributeVocab::from_names(&["red", "blue", "shiny"]).unwrap(),
    )
}

fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Bitmap {
    let mut m = Bitmap::new(w, h);
    for y in y0..y1 {
        for x in x0..x1 {
            m.set(x, y, true);
        }
    }
    m
}

fn record(class: &str, score: f64, m: &Bitmap, bbox: [f64; 4]) -> serde_json::Value {
    serde_json::json!({"class": class, "score": score, "bbox": bbox, "rle": encode_rle(m)})
}

fn detections() -> Vec<u8> {
    let (w, h) = (48, 32);
    let doc = serde_json::json!({
        "image": {"width": w, "height": h},
        "detections": [
            record("sky", 0.9, &rect_mask(w, h, 0, 0, 48, 10), [0.0, 0.0, 48.0, 10.0]),
            record("automobile", 0.95, &rect_mask(w, h, 8, 12, 32, 26), [8.0, 12.0, 32.0, 26.0]),
            record("car", 0.5, &rect_mask(w, h, 8, 12, 31, 26), [8.0, 12.0, 31.0, 26.0]),
            record("wheel", 0.8, &rect_mask(w, h, 10, 22, 14, 26), [10.0, 22.0, 14.0, 26.0]),
            record("wheel", 0.1, &rect_mask(w, h, 24, 22, 28, 26), [24.0, 22.0, 28.0, 26.0]),
        ]
    });
    serde_json::to_vec(&doc).unwrap()
}

fn ingest() -> SceneGraph {
    let (classes, attrs) = vocab();
    let aliases = AliasMap([("automobile".to_string(), "car".to_string())].into());
    let out = ingest_pipeline(&detections(), &classes, &attrs, &aliases, None, &IngestConfig::default()).unwrap();
    assert_eq!(out.report.parsed, 5);
    assert_eq!(out.report.below_threshold, 1);
    assert_eq!(out.report.suppressed, 1);
    out.scene
}

fn weights() -> ToyWeights {
    ToyWeights::init(
        ToyConfig {
            classes: 3,
            attributes: 3,
            channels: 4,
            mid: 16,
            heads: 6,
            d_lm: 16,
        },
        11,
    )
}

#[test]
fn detections_to_scene_to_maps() {
    let scene = ingest();
    assert_eq!(scene.len(), 3);
    let car = scene.instances.values().find(|i| i.class_id == 2).unwrap();
    assert!((car.score - 0.95).abs() < 1e-12, "highest-scoring duplicate survives");
    let wheel = scene.instances.values().find(|i| i.class_id == 3).unwrap();
    assert_eq!(wheel.parent, Some(car.id));

    let maps = rasterize(&scene);
    assert_eq!(maps.class_at(12, 24), 3);
    assert_eq!(maps.class_at(20, 15), 2);
    assert_eq!(maps.class_at(5, 5), 1);
    assert_eq!(maps.class_at(40, 30), 0);

    // A background-class child of a foreground object is foreground.
    let roles = resolve_roles(&scene, &vocab().0);
    assert_eq!(roles[&wheel.id], Role::Foreground);
    let (bg, fg) = split_bg_fg(&maps, &roles);
    assert_eq!(bg.class_at(12, 24), 0);
    assert_eq!(fg.class_at(12, 24), 3);
}

#[test]
fn ingest_is_deterministic_through_json() {
    let (classes, attrs) = vocab();
    let a = ingest().to_json(&classes, &attrs).unwrap();
    let b = ingest().to_json(&classes, &attrs).unwrap();
    assert_eq!(a, b);
    let back = SceneGraph::from_json(&a, &classes, &attrs).unwrap();
    assert_eq!(back.to_json(&classes, &attrs).unwrap(), a);
}

#[test]
fn bg_fg_previews_blend_by_fg_mask() {
    let scene = ingest();
    let (classes, _) = vocab();
    let w = weights();
    let bg_maps = render_maps(&scene, &classes, RasterKind::Bg, None);
    let fg_maps = render_maps(&scene, &classes, RasterKind::Fg, None);
    let (bg, _) = toy_forward(&bg_maps, StyleInput::None, &w).unwrap();
    let (fg, _) = toy_forward(&fg_maps, StyleInput::None, &w).unwrap();
    let (h, wd) = (fg_maps.height, fg_maps.width);
    let logit = Tensor::from_fn(&[1, h, wd], |p| if fg_maps.class_map[p] != 0 { 40.0 } else { -40.0 });
    let (out, alpha, _) = blend(&bg, &fg, &logit).unwrap();
    let plane = h * wd;
    for p in 0..plane {
        let src = if fg_maps.class_map[p] != 0 { &fg } else { &bg };
        for c in 0..3 {
            assert!((out.data()[c * plane + p] - src.data()[c * plane + p]).abs() < 1e-12);
        }
        let expect = if fg_maps.class_map[p] != 0 { 1.0 } else { 0.0 };
        assert!((alpha.data()[p] - expect).abs() < 1e-15);
    }
}

fn dilate(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for y in 0..h {
        for x in 0..w {
            if !mask[y * w + x] {
                continue;
            }
            for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                    out[yy * w + xx] = true;
                }
            }
        }
    }
    out
}

#[test]
fn attribute_edit_changes_preview_near_the_instance() {
    let (_, attrs) = vocab();
    let mut scene = ingest();
    let w = weights();
    let car = scene.instances.values().find(|i| i.class_id == 2).unwrap().id;
    let (maps, before, _) = preview_rgb(&scene, &w, PreviewStyle::Attributes, None).unwrap();
    scene.set_attributes(car, BTreeSet::from([0, 2]), &attrs).unwrap();
    let (_, after, _) = preview_rgb(&scene, &w, PreviewStyle::Attributes, None).unwrap();

    let (wd, h) = (maps.width, maps.height);
    let plane = wd * h;
    let diff: Vec<f64> = (0..plane)
        .map(|p| (0..3).map(|c| (after.data()[c * plane + p] - before.data()[c * plane + p]).abs()).sum())
        .collect();
    let owned: Vec<bool> = maps.instance_map.iter().map(|i| *i == car).collect();
    // Two S-blocks with two 3x3 convs each reach 4 px beyond the mask.
    let near = dilate(&owned, wd, h, 4);
    let argmax = (0..plane).max_by(|a, b| diff[*a].total_cmp(&diff[*b])).unwrap();
    assert!(diff[argmax] > 0.0);
    assert!(near[argmax]);
    // Batch statistics spread a small global shift; the bulk stays local.
    let mean = |sel: bool| {
        let v: Vec<f64> = (0..plane).filter(|p| near[*p] == sel).map(|p| diff[p]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (inside, outside) = (mean(true), mean(false));
    assert!(inside > 3.0 * outside, "mean change {inside:e} near vs {outside:e} away");
}
