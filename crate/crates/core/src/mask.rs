//! Binary pixel masks.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("mask resolution mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
pub struct ResolutionMismatch {
    pub a_w: usize,
    pub a_h: usize,
    pub b_w: usize,
    pub b_h: usize,
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Inclusive-exclusive pixel window `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBounds {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBounds {
    pub fn intersect(&self, other: &PixelBounds) -> Option<PixelBounds> {
        let b = PixelBounds {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (b.x0 < b.x1 && b.y0 < b.y1).then_some(b)
    }
}

impl Bitmap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width * height).then_some(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Set pixels `[x0, x1)` of row `y`.
    pub fn fill_span(&mut self, y: usize, x0: usize, x1: usize) {
        let row = y * self.width;
        self.bits[row + x0..row + x1].fill(true);
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Tight window around set pixels, `None` for an empty mask.
    pub fn bounds(&self) -> Option<PixelBounds> {
        let mut b: Option<PixelBounds> = None;
        for y in 0..self.height {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            let Some(first) = row.iter().position(|v| *v) else {
                continue;
            };
            let last = row.iter().rposition(|v| *v).unwrap_or(first);
            b = Some(match b {
                None => PixelBounds {
                    x0: first,
                    y0: y,
                    x1: last + 1,
                    y1: y + 1,
                },
                Some(b) => PixelBounds {
                    x0: b.x0.min(first),
                    y0: b.y0,
                    x1: b.x1.max(last + 1),
                    y1: y + 1,
                },
            });
        }
        b
    }

    /// Number of pixels set in both masks, restricted to `window`.
    pub fn intersection_in(&self, other: &Bitmap, window: PixelBounds) -> usize {
        let mut n = 0;
        for y in window.y0..window.y1 {
            let r = y * self.width;
            for x in window.x0..window.x1 {
                n += usize::from(self.bits[r + x] && other.bits[r + x]);
            }
        }
        n
    }

    fn check_same(&self, other: &Bitmap) -> Result<(), ResolutionMismatch> {
        if self.width != other.width || self.height != other.height {
            return Err(ResolutionMismatch {
                a_w: self.width,
                a_h: self.height,
                b_w: other.width,
                b_h: other.height,
            });
        }
        Ok(())
    }

    pub fn intersection(&self, other: &Bitmap) -> Result<usize, ResolutionMismatch> {
        self.check_same(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count())
    }
}

/// Mask intersection-over-union, `|a ∩ b| / |a ∪ b|`, 0 when the union is empty.
pub fn mask_iou(a: &Bitmap, b: &Bitmap) -> Result<f64, ResolutionMismatch> {
    a.check_same(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += usize::from(*x && *y);
        union += usize::from(*x || *y);
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}
