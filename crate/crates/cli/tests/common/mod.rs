//! Brute-force reference implementations shared by the integration tests.
//! They work on plain vectors and never call into the library's own
//! geometry or raster code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub type Ring = Vec<(f64, f64)>;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparsescene"));
    c.current_dir(fixtures());
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sparsescene")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Even-odd test of the point `(px, py)` against all rings: count ring edges
/// crossed by a ray towards +x.
pub fn inside(rings: &[Ring], px: f64, py: f64) -> bool {
    let mut odd = false;
    for r in rings {
        if r.len() < 3 {
            continue;
        }
        for i in 0..r.len() {
            let (xi, yi) = r[i];
            let (xj, yj) = r[(i + r.len() - 1) % r.len()];
            if (yi > py) != (yj > py) {
                let xc = xi + (xj - xi) * (py - yi) / (yj - yi);
                if px < xc {
                    odd = !odd;
                }
            }
        }
    }
    odd
}

/// Pixels whose centers fall inside `rings` after scaling by `(sx, sy)`,
/// row-major.
pub fn coverage(rings: &[Ring], w: usize, h: usize, sx: f64, sy: f64) -> Vec<bool> {
    let scaled: Vec<Ring> = rings
        .iter()
        .map(|r| r.iter().map(|&(x, y)| (x * sx, y * sy)).collect())
        .collect();
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = inside(&scaled, x as f64 + 0.5, y as f64 + 0.5);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Shape {
    pub id: u32,
    pub class: u32,
    pub rings: Vec<Ring>,
}

/// Per pixel, the smallest-area instance covering it; equal areas go to the
/// higher id. Returns (class map, instance map), row-major.
pub fn smallest_cover(shapes: &[Shape], cw: f64, ch: f64, w: usize, h: usize) -> (Vec<u32>, Vec<u32>) {
    let (sx, sy) = (w as f64 / cw, h as f64 / ch);
    let covers: Vec<Vec<bool>> = shapes.iter().map(|s| coverage(&s.rings, w, h, sx, sy)).collect();
    let areas: Vec<usize> = covers.iter().map(|c| c.iter().filter(|b| **b).count()).collect();
    let mut class = vec![0; w * h];
    let mut inst = vec![0; w * h];
    for p in 0..w * h {
        let mut best: Option<usize> = None;
        for i in 0..shapes.len() {
            if !covers[i][p] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) if areas[i] < areas[b] || (areas[i] == areas[b] && shapes[i].id > shapes[b].id) => Some(i),
                keep => keep,
            };
        }
        if let Some(b) = best {
            class[p] = shapes[b].class;
            inst[p] = shapes[b].id;
        }
    }
    (class, inst)
}

/// Column-major COCO counts, starting with zeros. Row-major output.
pub fn decode_counts(counts: &[u64], w: usize, h: usize) -> Option<Vec<bool>> {
    if counts.iter().sum::<u64>() != (w * h) as u64 {
        return None;
    }
    let mut out = vec![false; w * h];
    let mut k = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            if i % 2 == 1 {
                let (x, y) = (k / h, k % h);
                out[y * w + x] = true;
            }
            k += 1;
        }
    }
    Some(out)
}

pub fn pixel_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy suppression by brute force: visit in descending score (input order
/// on ties), keep anything whose IoU with every kept item is ≤ `thr`.
/// Returns kept input indices in visiting order.
pub fn greedy_nms(scores: &[f64], masks: &[Vec<bool>], thr: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    for i in 0..order.len() {
        for j in 0..order.len() - 1 - i {
            let (a, b) = (order[j], order[j + 1]);
            if scores[b] > scores[a] || (scores[b] == scores[a] && b < a) {
                order.swap(j, j + 1);
            }
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| pixel_iou(&masks[i], &masks[k]) <= thr) {
            kept.push(i);
        }
    }
    kept
}

/// Parent of each instance: the smallest qualifying container among those
/// that rank before it in (area desc, id asc), ties to the lowest id.
pub fn containment_parents(ids: &[u32], masks: &[Vec<bool>], thr: f64) -> BTreeMap<u32, Option<u32>> {
    let area = |i: usize| masks[i].iter().filter(|b| **b).count();
    let rank = |i: usize| (std::cmp::Reverse(area(i)), ids[i]);
    let mut out = BTreeMap::new();
    for c in 0..ids.len() {
        let ac = area(c);
        let mut best: Option<usize> = None;
        if ac > 0 {
            for p in 0..ids.len() {
                if p == c || area(p) == 0 || rank(p) >= rank(c) {
                    continue;
                }
                let inter = masks[c].iter().zip(&masks[p]).filter(|(x, y)| **x && **y).count();
                if (inter as f64) / (ac as f64) < thr {
                    continue;
                }
                best = match best {
                    Some(b) if (area(b), ids[b]) <= (area(p), ids[p]) => Some(b),
                    _ => Some(p),
                };
            }
        }
        out.insert(ids[c], best.map(|b| ids[b]));
    }
    out
}

/// Shapes of a scene JSON document with class names resolved via `vocab`.
pub fn scene_shapes(scene: &Value, vocab: &Value) -> Vec<Shape> {
    let class_ids: BTreeMap<&str, u32> = vocab["classes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["name"].as_str().unwrap(), c["id"].as_u64().unwrap() as u32))
        .collect();
    scene["instances"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| Shape {
            id: i["id"].as_u64().unwrap() as u32,
            class: class_ids[i["class"].as_str().unwrap()],
            rings: i["rings"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| {
                    r.as_array()
                        .unwrap()
                        .iter()
                        .map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
                        .collect()
                })
                .collect(),
        })
        .collect()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Empirical attribute-set frequencies per class name over scene documents.
pub fn set_frequencies(scenes: &[Value]) -> BTreeMap<String, BTreeMap<BTreeSet<String>, f64>> {
    let mut counts: BTreeMap<String, BTreeMap<BTreeSet<String>, usize>> = BTreeMap::new();
    for s in scenes {
        for i in s["instances"].as_array().unwrap() {
            let set: BTreeSet<String> = i["attributes"]
                .as_array()
                .unwrap()
                .iter()
                .map(|a| a.as_str().unwrap().to_string())
                .collect();
            *counts
                .entry(i["class"].as_str().unwrap().to_string())
                .or_default()
                .entry(set)
                .or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(c, m)| {
            let total: usize = m.values().sum();
            (c, m.into_iter().map(|(k, v)| (k, v as f64 / total as f64)).collect())
        })
        .collect()
}
