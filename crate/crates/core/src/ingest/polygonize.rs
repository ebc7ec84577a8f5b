//! Bitmap to polygon rings by tracing pixel-boundary contours (marching
//! squares on the pixel-corner lattice).
//!
//! Every boundary between a set pixel and an unset (or out-of-image) neighbor
//! becomes one directed unit edge, oriented so each pixel square is walked the
//! same way round. Edges chain into closed rings; holes come out as separate
//! rings. Rasterizing the rings with the even-odd rule at pixel centers gives
//! back the input bitmap exactly.

use std::collections::BTreeMap;

use crate::geometry::Point;
use crate::mask::Bitmap;

type Vertex = (i64, i64);

pub fn polygonize(mask: &Bitmap) -> Vec<Vec<Point>> {
    let Some(b) = mask.bounds() else {
        return Vec::new();
    };
    let on = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < mask.width()
            && (y as usize) < mask.height()
            && mask.get(x as usize, y as usize)
    };

    // outgoing edges per start vertex, in insertion order
    let mut out: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
    let mut add = |from: Vertex, to: Vertex| out.entry(from).or_default().push(to);
    for y in b.y0 as i64..b.y1 as i64 {
        for x in b.x0 as i64..b.x1 as i64 {
            if !on(x, y) {
                continue;
            }
            if !on(x - 1, y) {
                add((x, y), (x, y + 1));
            }
            if !on(x, y + 1) {
                add((x, y + 1), (x + 1, y + 1));
            }
            if !on(x + 1, y) {
                add((x + 1, y + 1), (x + 1, y));
            }
            if !on(x, y - 1) {
                add((x + 1, y), (x, y));
            }
        }
    }

    let mut rings = Vec::new();
    while let Some((&start, _)) = out.iter().find(|(_, v)| !v.is_empty()) {
        let mut ring = vec![start];
        let mut prev = start;
        let mut cur = take(&mut out, start, None);
        while cur != start {
            ring.push(cur);
            let dir = (cur.0 - prev.0, cur.1 - prev.1);
            let next = take(&mut out, cur, Some(dir));
            prev = cur;
            cur = next;
        }
        rings.push(simplify(&ring));
    }
    rings
}

/// Remove an outgoing edge of `v`. At saddle vertices take the sharpest
/// turn, which keeps diagonally touching pixels in separate rings.
fn take(out: &mut BTreeMap<Vertex, Vec<Vertex>>, v: Vertex, dir: Option<Vertex>) -> Vertex {
    let edges = out.get_mut(&v).expect("closed contour");
    let pick = match (dir, edges.len()) {
        (Some(d), n) if n > 1 => (0..n)
            .min_by_key(|&i| {
                let c = (edges[i].0 - v.0, edges[i].1 - v.1);
                d.0 * c.1 - d.1 * c.0
            })
            .expect("non-empty"),
        _ => 0,
    };
    edges.swap_remove(pick)
}

/// Drop vertices lying on a straight run.
fn simplify(ring: &[Vertex]) -> Vec<Point> {
    let n = ring.len();
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let a = ring[(i + n - 1) % n];
        let b = ring[i];
        let c = ring[(i + 1) % n];
        let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
        if cross != 0 {
            pts.push(Point::new(b.0 as f64, b.1 as f64));
        }
    }
    pts
}
