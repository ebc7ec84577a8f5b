//! Stride-1, zero-padded "same" 2-D convolution over `[C, H, W]` maps.

use rand::Rng;

use super::KernelError;
use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out, in, k, k]`, `k` odd.
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn zeros(cin: usize, cout: usize, k: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[cout, cin, k, k]),
            bias: Tensor::zeros(&[cout]),
        }
    }

    /// Weights ~ N(0, std), zero bias.
    pub fn normal<R: Rng + ?Sized>(cin: usize, cout: usize, k: usize, std: f64, rng: &mut R) -> Self {
        Self {
            weight: Tensor::normal(&[cout, cin, k, k], std, rng),
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim(2)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let s = self.weight.shape();
        if s.len() != 4 || s[2] != s[3] || s[2] % 2 == 0 {
            return Err(KernelError::Invalid(format!("bad conv kernel shape {s:?}")));
        }
        self.bias.expect_shape(&[s[0]])?;
        Ok(())
    }
}

/// Output-row range `[lo, hi)` for which `y + off` stays inside `[0, n)`.
#[inline]
fn valid(n: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n as isize - off).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

pub fn conv2d(input: &Tensor, conv: &Conv2d) -> Result<Tensor, KernelError> {
    conv.validate()?;
    let s = input.shape();
    if s.len() != 3 || s[0] != conv.in_channels() {
        return Err(ShapeError::Mismatch {
            expected: vec![conv.in_channels(), 0, 0],
            found: s.to_vec(),
        }
        .into());
    }
    let (cin, h, w) = (s[0], s[1], s[2]);
    let (cout, k) = (conv.out_channels(), conv.kernel());
    let pad = (k / 2) as isize;
    let x = input.data();
    let wt = conv.weight.data();
    let mut out = vec![0.0; cout * h * w];
    for co in 0..cout {
        let o = &mut out[co * h * w..(co + 1) * h * w];
        o.fill(conv.bias.data()[co]);
        for ci in 0..cin {
            let xi = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid(w, dx);
                    let wv = wt[((co * cin + ci) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize) * w;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let irow = &xi[(src as isize + x0 as isize + dx) as usize
                            ..(src as isize + x1 as isize + dx) as usize];
                        for (a, b) in orow.iter_mut().zip(irow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::new(vec![cout, h, w], out)?)
}

/// Gradients of [`conv2d`] w.r.t. its input and parameters.
pub fn conv2d_backward(input: &Tensor, conv: &Conv2d, dout: &Tensor) -> (Tensor, Conv2dGrads) {
    let (cin, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let (cout, k) = (conv.out_channels(), conv.kernel());
    let pad = (k / 2) as isize;
    let x = input.data();
    let g = dout.data();
    let wt = conv.weight.data();
    let mut dx = vec![0.0; cin * h * w];
    let mut dw = vec![0.0; cout * cin * k * k];
    let mut db = vec![0.0; cout];
    for co in 0..cout {
        let go = &g[co * h * w..(co + 1) * h * w];
        db[co] = go.iter().sum();
        for ci in 0..cin {
            let xi = &x[ci * h * w..(ci + 1) * h * w];
            let dxi = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid(h, dy);
                for kx in 0..k {
                    let ddx = kx as isize - pad;
                    let (x0, x1) = valid(w, ddx);
                    let widx = ((co * cin + ci) * k + ky) * k + kx;
                    let wv = wt[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let src = ((y as isize + dy) as usize * w) as isize;
                        let grow = &go[y * w + x0..y * w + x1];
                        let lo = (src + x0 as isize + ddx) as usize;
                        let hi = (src + x1 as isize + ddx) as usize;
                        let irow = &xi[lo..hi];
                        for (a, b) in grow.iter().zip(irow) {
                            acc += a * b;
                        }
                        if wv != 0.0 {
                            for (d, a) in dxi[lo..hi].iter_mut().zip(grow) {
                                *d += wv * a;
                            }
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
    (
        Tensor::new(vec![cin, h, w], dx).expect("shape"),
        Conv2dGrads {
            weight: Tensor::new(vec![cout, cin, k, k], dw).expect("shape"),
            bias: Tensor::new(vec![cout], db).expect("shape"),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct definition: out[o,y,x] = b[o] + Σ w[o,i,ky,kx] · in[i, y+ky-p, x+kx-p].
    fn naive(input: &Tensor, conv: &Conv2d) -> Tensor {
        let (cin, h, w) = (input.dim(0), input.dim(1), input.dim(2));
        let (cout, k) = (conv.out_channels(), conv.kernel());
        let p = (k / 2) as isize;
        Tensor::from_fn(&[cout, h, w], |idx| {
            let (o, y, x) = (idx / (h * w), (idx / w) % h, idx % w);
            let mut s = conv.bias.data()[o];
            for i in 0..cin {
                for ky in 0..k {
                    for kx in 0..k {
                        let (yy, xx) = (y as isize + ky as isize - p, x as isize + kx as isize - p);
                        if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                            s += conv.weight.data()[((o * cin + i) * k + ky) * k + kx]
                                * input.data()[(i * h + yy as usize) * w + xx as usize];
                        }
                    }
                }
            }
            s
        })
    }

    #[test]
    fn matches_naive_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in [1, 3] {
            let mut conv = Conv2d::normal(3, 4, k, 1.0, &mut rng);
            conv.bias = Tensor::uniform(&[4], -1.0, 1.0, &mut rng);
            let x = Tensor::uniform(&[3, 5, 6], -1.0, 1.0, &mut rng);
            let fast = conv2d(&x, &conv).unwrap();
            assert!(fast.max_abs_diff(&naive(&x, &conv)) < 1e-12);
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // L = <conv(x), g> is affine in each argument separately.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut conv = Conv2d::normal(2, 3, 3, 1.0, &mut rng);
        conv.bias = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
        let x = Tensor::uniform(&[2, 4, 5], -1.0, 1.0, &mut rng);
        let g = Tensor::uniform(&[3, 4, 5], -1.0, 1.0, &mut rng);
        let (dx, grads) = conv2d_backward(&x, &conv, &g);
        let loss = |x: &Tensor, c: &Conv2d| conv2d(x, c).unwrap().dot(&g);
        // linear in x: L(x) - L(0) = <dx, x>
        let zero_x = Tensor::zeros(x.shape());
        assert!((loss(&x, &conv) - loss(&zero_x, &conv) - dx.dot(&x)).abs() < 1e-10);
        // linear in w at fixed x
        let mut zero_w = conv.clone();
        zero_w.weight = Tensor::zeros(conv.weight.shape());
        assert!((loss(&x, &conv) - loss(&x, &zero_w) - grads.weight.dot(&conv.weight)).abs() < 1e-10);
        let mut zero_b = conv.clone();
        zero_b.bias = Tensor::zeros(&[3]);
        assert!((loss(&x, &conv) - loss(&x, &zero_b) - grads.bias.dot(&conv.bias)).abs() < 1e-10);
    }
}
