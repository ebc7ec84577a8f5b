//! Even-odd scanline fill sampled at pixel centers.
//!
//! A pixel `(i, j)` is inside a set of rings when a ray from its center
//! `(i + 0.5, j + 0.5)` towards `+x` crosses an odd number of ring edges. An
//! edge from `p` to `q` crosses the scanline `y` when exactly one endpoint lies
//! strictly below it (`(p.y > y) != (q.y > y)`), so shared vertices and
//! horizontal edges are counted consistently.

use crate::geometry::Point;
use crate::mask::Bitmap;

/// Rasterize `rings` into a `width x height` bitmap after scaling coordinates
/// by `(sx, sy)`.
pub fn fill_rings_scaled(
    rings: &[Vec<Point>],
    width: usize,
    height: usize,
    sx: f64,
    sy: f64,
) -> Bitmap {
    let mut out = Bitmap::new(width, height);
    if width == 0 || height == 0 {
        return out;
    }
    let scaled: Vec<Vec<Point>> = rings
        .iter()
        .map(|r| r.iter().map(|p| Point::new(p.x * sx, p.y * sy)).collect())
        .collect();
    let (y_lo, y_hi) = scaled
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    if !(y_lo.is_finite() && y_hi.is_finite()) {
        return out;
    }
    let row_start = ((y_lo - 0.5).floor().max(0.0)) as usize;
    let row_end = ((y_hi + 0.5).ceil().max(0.0) as usize).min(height);

    let mut xs: Vec<f64> = Vec::new();
    for y in row_start..row_end {
        let py = y as f64 + 0.5;
        xs.clear();
        for ring in &scaled {
            let n = ring.len();
            if n < 3 {
                continue;
            }
            let mut j = n - 1;
            for i in 0..n {
                let (pi, pj) = (ring[i], ring[j]);
                if (pi.y > py) != (pj.y > py) {
                    xs.push((pj.x - pi.x) * (py - pi.y) / (pj.y - pi.y) + pi.x);
                }
                j = i;
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            if let Some((x0, x1)) = span(pair[0], pair[1], width) {
                out.fill_span(y, x0, x1);
            }
        }
    }
    out
}

pub fn fill_rings(rings: &[Vec<Point>], width: usize, height: usize) -> Bitmap {
    fill_rings_scaled(rings, width, height, 1.0, 1.0)
}

/// Pixel columns whose centers satisfy `a <= i + 0.5 < b`, clipped to the row.
fn span(a: f64, b: f64, width: usize) -> Option<(usize, usize)> {
    if !(b > a) {
        return None;
    }
    let center = |i: i64| i as f64 + 0.5;
    let mut i0 = (a - 0.5).ceil().max(0.0) as i64;
    while i0 > 0 && center(i0 - 1) >= a {
        i0 -= 1;
    }
    while center(i0) < a {
        i0 += 1;
    }
    let w = width as i64;
    if i0 >= w {
        return None;
    }
    let mut i1 = (b - 0.5).ceil().max(0.0) as i64;
    i1 = i1.min(w);
    while i1 > i0 && center(i1 - 1) >= b {
        i1 -= 1;
    }
    while i1 < w && center(i1) < b {
        i1 += 1;
    }
    (i1 > i0).then_some((i0 as usize, i1 as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
        vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]
    }

    #[test]
    fn integer_rect_covers_exact_pixels() {
        let m = fill_rings(&[rect(2.0, 3.0, 6.0, 5.0)], 10, 10);
        assert_eq!(m.count(), 8);
        assert!(m.get(2, 3) && m.get(5, 4));
        assert!(!m.get(6, 4) && !m.get(1, 3) && !m.get(2, 5));
    }

    #[test]
    fn hole_ring_is_subtracted() {
        let m = fill_rings(&[rect(0.0, 0.0, 6.0, 6.0), rect(2.0, 2.0, 4.0, 4.0)], 8, 8);
        assert_eq!(m.count(), 36 - 4);
        assert!(!m.get(2, 2) && !m.get(3, 3));
    }

    #[test]
    fn half_open_at_pixel_centers() {
        // left edge exactly on a center includes it, right edge on a center excludes it
        let m = fill_rings(&[rect(0.5, 0.0, 2.5, 1.0)], 4, 1);
        assert_eq!(m.bits(), &[true, true, false, false]);
    }

    #[test]
    fn clipped_to_canvas() {
        let m = fill_rings(&[rect(-5.0, -5.0, 50.0, 50.0)], 4, 3);
        assert_eq!(m.count(), 12);
    }

    #[test]
    fn degenerate_rings_are_empty() {
        assert!(fill_rings(&[vec![Point::new(1.0, 1.0), Point::new(3.0, 3.0)]], 5, 5).is_empty());
        assert!(fill_rings(&[rect(1.0, 1.0, 1.0, 4.0)], 5, 5).is_empty());
    }
}
