//! Alpha-blend composition of background and foreground renders.
//!
//! Images are `[3, H, W]`; transparency logits are `[1, H, W]`.

use crate::condkernel::KernelError;
use crate::tensor::{ShapeError, Tensor};

/// Overflow-safe logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dims(x_bg: &Tensor) -> Result<(usize, usize), KernelError> {
    match x_bg.shape() {
        [c, h, w] if *c > 0 => Ok((*c, h * w)),
        s => Err(ShapeError::Invalid(format!("expected C x H x W image, got {s:?}")).into()),
    }
}

fn check(x_bg: &Tensor, x_fg: &Tensor, logit: &Tensor) -> Result<(usize, usize), KernelError> {
    let (c, hw) = dims(x_bg)?;
    x_fg.expect_shape(x_bg.shape())?;
    logit.expect_shape(&[1, x_bg.dim(1), x_bg.dim(2)])?;
    for (name, t) in [("background", x_bg), ("foreground", x_fg), ("alpha logits", logit)] {
        if !t.is_finite() {
            return Err(KernelError::NonFinite(name));
        }
    }
    Ok((c, hw))
}

#[derive(Debug, Clone)]
pub struct BlendCache {
    x_bg: Tensor,
    x_fg: Tensor,
    alpha: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendGrads {
    pub x_bg: Tensor,
    pub x_fg: Tensor,
    pub logit: Tensor,
}

/// `α = sigmoid(α')`, `x_final = x_bg·(1−α) + x_fg·α`. Returns `(x_final, α)`.
pub fn blend(x_bg: &Tensor, x_fg: &Tensor, logit: &Tensor) -> Result<(Tensor, Tensor, BlendCache), KernelError> {
    let (c, hw) = check(x_bg, x_fg, logit)?;
    let alpha = Tensor::from_fn(logit.shape(), |p| sigmoid(logit.data()[p]));
    let out = Tensor::from_fn(x_bg.shape(), |i| {
        let a = alpha.data()[i % hw];
        x_bg.data()[i] * (1.0 - a) + x_fg.data()[i] * a
    });
    debug_assert_eq!(out.len(), c * hw);
    Ok((
        out,
        alpha.clone(),
        BlendCache {
            x_bg: x_bg.clone(),
            x_fg: x_fg.clone(),
            alpha,
        },
    ))
}

pub fn blend_backward(cache: &BlendCache, dout: &Tensor) -> BlendGrads {
    let hw = cache.alpha.len();
    let a = cache.alpha.data();
    let x_bg = Tensor::from_fn(dout.shape(), |i| dout.data()[i] * (1.0 - a[i % hw]));
    let x_fg = Tensor::from_fn(dout.shape(), |i| dout.data()[i] * a[i % hw]);
    let mut logit = Tensor::zeros(cache.alpha.shape());
    for (i, g) in dout.data().iter().enumerate() {
        let p = i % hw;
        logit.data_mut()[p] += g * (cache.x_fg.data()[i] - cache.x_bg.data()[i]) * a[p] * (1.0 - a[p]);
    }
    BlendGrads { x_bg, x_fg, logit }
}

#[derive(Debug, Clone)]
pub struct MultiCache {
    x_bg: Tensor,
    x_fg: Vec<Tensor>,
    /// Per object, `[H·W]` softmax weights.
    w: Vec<Vec<f64>>,
    sig: Vec<Vec<f64>>,
    fg: Vec<f64>,
    alpha: Vec<f64>,
}

impl MultiCache {
    /// Object weights `w_i` at pixel `p`.
    pub fn weights_at(&self, p: usize) -> Vec<f64> {
        self.w.iter().map(|w| w[p]).collect()
    }

    pub fn objects(&self) -> usize {
        self.x_fg.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiGrads {
    pub x_bg: Tensor,
    pub x_fg: Vec<Tensor>,
    pub logits: Vec<Tensor>,
}

/// Object-wise weighted average of foregrounds with `w_i = softmax_i(α'_i)`,
/// then `α = Σ sigmoid(α'_i)·w_i` and the two-layer blend. With no objects
/// the background is returned unchanged.
pub fn blend_multi(
    x_bg: &Tensor,
    x_fg: &[Tensor],
    logits: &[Tensor],
) -> Result<(Tensor, MultiCache), KernelError> {
    let (c, hw) = dims(x_bg)?;
    if x_fg.len() != logits.len() {
        return Err(KernelError::Invalid(format!(
            "{} foregrounds but {} logit maps",
            x_fg.len(),
            logits.len()
        )));
    }
    for (f, l) in x_fg.iter().zip(logits) {
        check(x_bg, f, l)?;
    }
    if !x_bg.is_finite() {
        return Err(KernelError::NonFinite("background"));
    }
    let n = x_fg.len();
    let mut w = vec![vec![0.0; hw]; n];
    let mut sig = vec![vec![0.0; hw]; n];
    let mut alpha = vec![0.0; hw];
    if n > 0 {
        for p in 0..hw {
            let mx = logits.iter().map(|l| l.data()[p]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..n {
                let e = (logits[i].data()[p] - mx).exp();
                w[i][p] = e;
                z += e;
            }
            for i in 0..n {
                w[i][p] /= z;
                sig[i][p] = sigmoid(logits[i].data()[p]);
                alpha[p] += sig[i][p] * w[i][p];
            }
        }
    }
    let mut fg = vec![0.0; c * hw];
    for (i, f) in x_fg.iter().enumerate() {
        for (k, v) in fg.iter_mut().enumerate() {
            *v += f.data()[k] * w[i][k % hw];
        }
    }
    let out = Tensor::from_fn(x_bg.shape(), |k| {
        let a = alpha[k % hw];
        x_bg.data()[k] * (1.0 - a) + fg[k] * a
    });
    Ok((
        out,
        MultiCache {
            x_bg: x_bg.clone(),
            x_fg: x_fg.to_vec(),
            w,
            sig,
            fg,
            alpha,
        },
    ))
}

pub fn blend_multi_backward(cache: &MultiCache, dout: &Tensor) -> MultiGrads {
    let hw = cache.alpha.len();
    let n = cache.x_fg.len();
    let g = dout.data();
    let x_bg = Tensor::from_fn(dout.shape(), |k| g[k] * (1.0 - cache.alpha[k % hw]));
    let dfg: Vec<f64> = (0..g.len()).map(|k| g[k] * cache.alpha[k % hw]).collect();
    let mut dalpha = vec![0.0; hw];
    for k in 0..g.len() {
        dalpha[k % hw] += g[k] * (cache.fg[k] - cache.x_bg.data()[k]);
    }
    let x_fg: Vec<Tensor> = (0..n)
        .map(|i| Tensor::from_fn(dout.shape(), |k| dfg[k] * cache.w[i][k % hw]))
        .collect();
    // dL/dw_i per pixel
    let mut dw = vec![vec![0.0; hw]; n];
    for i in 0..n {
        for k in 0..g.len() {
            dw[i][k % hw] += dfg[k] * cache.x_fg[i].data()[k];
        }
        for p in 0..hw {
            dw[i][p] += dalpha[p] * cache.sig[i][p];
        }
    }
    let shape = [1, cache.x_bg.dim(1), cache.x_bg.dim(2)];
    let logits = (0..n)
        .map(|i| {
            Tensor::from_fn(&shape, |p| {
                let mean: f64 = (0..n).map(|j| cache.w[j][p] * dw[j][p]).sum();
                let s = cache.sig[i][p];
                cache.w[i][p] * (dw[i][p] - mean) + dalpha[p] * cache.w[i][p] * s * (1.0 - s)
            })
        })
        .collect();
    MultiGrads { x_bg, x_fg, logits }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_img(rng: &mut ChaCha8Rng, c: usize) -> Tensor {
        Tensor::uniform(&[c, 4, 4], -1.0, 1.0, rng)
    }

    #[test]
    fn saturated_logits_pick_one_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (bg, fg) = (rand_img(&mut rng, 3), rand_img(&mut rng, 3));
        let (lo, _, _) = blend(&bg, &fg, &Tensor::filled(&[1, 4, 4], -40.0)).unwrap();
        assert!(lo.max_abs_diff(&bg) <= 1e-15);
        let (hi, _, _) = blend(&bg, &fg, &Tensor::filled(&[1, 4, 4], 40.0)).unwrap();
        assert!(hi.max_abs_diff(&fg) <= 1e-15);
    }

    #[test]
    fn half_transparency() {
        let (out, a, _) = blend(
            &Tensor::zeros(&[3, 2, 2]),
            &Tensor::filled(&[3, 2, 2], 1.0),
            &Tensor::zeros(&[1, 2, 2]),
        )
        .unwrap();
        assert!(out.data().iter().all(|v| *v == 0.5));
        assert!(a.data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn gradient_routing_at_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (bg, fg, g) = (rand_img(&mut rng, 3), rand_img(&mut rng, 3), rand_img(&mut rng, 3));
        let (_, _, c) = blend(&bg, &fg, &Tensor::filled(&[1, 4, 4], 40.0)).unwrap();
        assert!(blend_backward(&c, &g).x_bg.max_abs() <= 1e-12);
        let (_, _, c) = blend(&bg, &fg, &Tensor::filled(&[1, 4, 4], -40.0)).unwrap();
        assert!(blend_backward(&c, &g).x_fg.max_abs() <= 1e-12);
    }

    #[test]
    fn one_object_equals_blend() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (bg, fg) = (rand_img(&mut rng, 3), rand_img(&mut rng, 3));
        let l = Tensor::uniform(&[1, 4, 4], -3.0, 3.0, &mut rng);
        let (a, _, _) = blend(&bg, &fg, &l).unwrap();
        let (b, _) = blend_multi(&bg, &[fg.clone()], &[l.clone()]).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-15);
        let (d, _) = blend_multi(&bg, &[fg.clone(), fg], &[l.clone(), l]).unwrap();
        assert!(a.max_abs_diff(&d) <= 1e-15);
    }

    #[test]
    fn no_objects_returns_background() {
        let bg = Tensor::filled(&[3, 2, 2], 0.25);
        assert_eq!(blend_multi(&bg, &[], &[]).unwrap().0, bg);
        assert!(blend_multi(&bg, &[bg.clone()], &[]).is_err());
    }

    #[test]
    fn three_objects_match_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bg = rand_img(&mut rng, 3);
        let fgs: Vec<_> = (0..3).map(|_| rand_img(&mut rng, 3)).collect();
        let ls: Vec<_> = (0..3).map(|_| rand_img(&mut rng, 1).map_scale(4.0)).collect();
        let (out, cache) = blend_multi(&bg, &fgs, &ls).unwrap();
        for p in 0..16 {
            let e: Vec<f64> = ls.iter().map(|l| l.data()[p].exp()).collect();
            let z: f64 = e.iter().sum();
            let a: f64 = (0..3).map(|i| e[i] / z / (1.0 + (-ls[i].data()[p]).exp())).sum();
            let ws = cache.weights_at(p);
            assert!((ws.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for ch in 0..3 {
                let k = ch * 16 + p;
                let f: f64 = (0..3).map(|i| fgs[i].data()[k] * e[i] / z).sum();
                let want = bg.data()[k] * (1.0 - a) + f * a;
                assert!((out.data()[k] - want).abs() <= 1e-12);
            }
        }
    }

    trait MapScale {
        fn map_scale(self, s: f64) -> Self;
    }
    impl MapScale for Tensor {
        fn map_scale(mut self, s: f64) -> Self {
            self.scale(s);
            self
        }
    }

    proptest! {
        #[test]
        fn convex_and_order_invariant(seed in 0u64..1000, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bg = rand_img(&mut rng, 3);
            let fgs: Vec<_> = (0..n).map(|_| rand_img(&mut rng, 3)).collect();
            let ls: Vec<_> = (0..n).map(|_| rand_img(&mut rng, 1).map_scale(10.0)).collect();
            let (out, cache) = blend_multi(&bg, &fgs, &ls).unwrap();
            for k in 0..48 {
                let vals = std::iter::once(bg.data()[k]).chain(fgs.iter().map(|f| f.data()[k]));
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                prop_assert!(out.data()[k] >= lo - 1e-12 && out.data()[k] <= hi + 1e-12);
            }
            for p in 0..16 {
                let ws = cache.weights_at(p);
                prop_assert!(ws.iter().all(|w| *w >= 0.0));
                prop_assert!((ws.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            let (rf, rl): (Vec<_>, Vec<_>) = (fgs.iter().rev().cloned().collect(), ls.iter().rev().cloned().collect());
            let (rev, _) = blend_multi(&bg, &rf, &rl).unwrap();
            prop_assert!(out.max_abs_diff(&rev) <= 1e-12);
        }
    }
}
