//! Class-agnostic greedy non-maximum suppression over mask IoU.

use super::detections::Detection;
use crate::mask::PixelBounds;

struct Prepared {
    area: usize,
    bounds: Option<PixelBounds>,
}

fn iou(a: &Detection, pa: &Prepared, b: &Detection, pb: &Prepared) -> f64 {
    if a.mask.width() != b.mask.width() || a.mask.height() != b.mask.height() {
        return 0.0;
    }
    let inter = match (pa.bounds, pb.bounds) {
        (Some(x), Some(y)) => x
            .intersect(&y)
            .map_or(0, |w| a.mask.intersection_in(&b.mask, w)),
        _ => 0,
    };
    let union = pa.area + pb.area - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Sort by score descending (input order breaks ties) and keep a detection
/// iff its mask IoU with every already-kept detection is at most
/// `iou_threshold`. Class labels play no part.
pub fn nms(dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score.total_cmp(&dets[i].score).then(i.cmp(&j)));
    let prepared: Vec<Prepared> = dets
        .iter()
        .map(|d| Prepared {
            area: d.mask.count(),
            bounds: d.mask.bounds(),
        })
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let suppressed = kept
            .iter()
            .any(|&k| iou(&dets[i], &prepared[i], &dets[k], &prepared[k]) > iou_threshold);
        if !suppressed {
            kept.push(i);
        }
    }
    let mut slots: Vec<Option<Detection>> = dets.into_iter().map(Some).collect();
    kept.into_iter()
        .map(|i| slots[i].take().expect("kept once"))
        .collect()
}
