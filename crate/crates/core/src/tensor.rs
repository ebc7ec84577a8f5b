//! Shape-tagged dense `f64` arrays, row-major.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("data length {len} does not match shape {shape:?}")]
    Length { shape: Vec<usize>, len: usize },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Mismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, ShapeError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(ShapeError::Length {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let dist = Uniform::new(lo, hi).expect("lo < hi");
        Self::from_fn(shape, |_| dist.sample(rng))
    }

    pub fn normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        Self::from_fn(shape, |_| dist.sample(rng))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn expect_shape(&self, expected: &[usize]) -> Result<(), ShapeError> {
        if self.shape != expected {
            return Err(ShapeError::Mismatch {
                expected: expected.to_vec(),
                found: self.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, ShapeError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(ShapeError::Length {
                shape: shape.to_vec(),
                len: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `Σ self ⊙ other`.
    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Concatenate channel-last tensors `[.., K1]` and `[.., K2]` along the last axis.
    pub fn concat_last(a: &Tensor, b: &Tensor) -> Result<Tensor, ShapeError> {
        let (ra, rb) = (a.shape.len(), b.shape.len());
        if ra == 0 || ra != rb || a.shape[..ra - 1] != b.shape[..rb - 1] {
            return Err(ShapeError::Mismatch {
                expected: a.shape.clone(),
                found: b.shape.clone(),
            });
        }
        let (ka, kb) = (a.shape[ra - 1], b.shape[rb - 1]);
        let rows = a.data.len() / ka.max(1);
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        for r in 0..rows {
            data.extend_from_slice(&a.data[r * ka..(r + 1) * ka]);
            data.extend_from_slice(&b.data[r * kb..(r + 1) * kb]);
        }
        let mut shape = a.shape.clone();
        shape[ra - 1] = ka + kb;
        Ok(Tensor { shape, data })
    }

    /// Split a channel-last tensor at channel `k` (inverse of [`concat_last`](Self::concat_last)).
    pub fn split_last(&self, k: usize) -> (Tensor, Tensor) {
        let r = self.shape.len();
        let total = self.shape[r - 1];
        let rows = self.data.len() / total.max(1);
        let mut a = Vec::with_capacity(rows * k);
        let mut b = Vec::with_capacity(rows * (total - k));
        for row in self.data.chunks_exact(total) {
            a.extend_from_slice(&row[..k]);
            b.extend_from_slice(&row[k..]);
        }
        let mut sa = self.shape.clone();
        sa[r - 1] = k;
        let mut sb = self.shape.clone();
        sb[r - 1] = total - k;
        (Tensor { shape: sa, data: a }, Tensor { shape: sb, data: b })
    }

    /// `[H, W, K]` channel-last to `[K, H, W]` channel-first.
    pub fn hwc_to_chw(&self) -> Tensor {
        let (h, w, k) = (self.shape[0], self.shape[1], self.shape[2]);
        let mut out = vec![0.0; self.data.len()];
        for p in 0..h * w {
            for c in 0..k {
                out[c * h * w + p] = self.data[p * k + c];
            }
        }
        Tensor {
            shape: vec![k, h, w],
            data: out,
        }
    }

    /// `[K, H, W]` channel-first to `[H, W, K]` channel-last.
    pub fn chw_to_hwc(&self) -> Tensor {
        let (k, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let mut out = vec![0.0; self.data.len()];
        for c in 0..k {
            for p in 0..h * w {
                out[p * k + c] = self.data[c * h * w + p];
            }
        }
        Tensor {
            shape: vec![h, w, k],
            data: out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_checked() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn concat_split_inverse() {
        let a = Tensor::from_fn(&[2, 3, 2], |i| i as f64);
        let b = Tensor::from_fn(&[2, 3, 4], |i| -(i as f64));
        let c = Tensor::concat_last(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 3, 6]);
        assert_eq!(&c.data()[..6], &[0.0, 1.0, -0.0, -1.0, -2.0, -3.0]);
        let (a2, b2) = c.split_last(2);
        assert_eq!((a2, b2), (a, b));
    }

    #[test]
    fn layout_transposes_invert() {
        let t = Tensor::from_fn(&[3, 4, 5], |i| i as f64);
        assert_eq!(t.hwc_to_chw().chw_to_hwc(), t);
    }
}
