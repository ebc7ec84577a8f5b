//! Conditional normalization: the S-block and the S_avg-block.

use rand::Rng;

use super::conv::{conv2d, conv2d_backward, Conv2d, Conv2dGrads};
use super::KernelError;
use crate::tensor::{ShapeError, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const DEFAULT_MID_CHANNELS: usize = 128;

/// The conv3x3 → ReLU → conv3x3 path producing γ and β.
#[derive(Debug, Clone, PartialEq)]
pub struct SBlockWeights {
    pub conv1: Conv2d,
    pub conv_gamma: Conv2d,
    pub conv_beta: Conv2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SBlockWeightGrads {
    pub conv1: Conv2dGrads,
    pub conv_gamma: Conv2dGrads,
    pub conv_beta: Conv2dGrads,
}

impl SBlockWeights {
    /// Conv kernels ~ N(0, 0.02), zero biases.
    pub fn init<R: Rng + ?Sized>(cond: usize, mid: usize, channels: usize, rng: &mut R) -> Self {
        Self {
            conv1: Conv2d::normal(cond, mid, 3, 0.02, rng),
            conv_gamma: Conv2d::normal(mid, channels, 3, 0.02, rng),
            conv_beta: Conv2d::normal(mid, channels, 3, 0.02, rng),
        }
    }

    pub fn zeros(cond: usize, mid: usize, channels: usize) -> Self {
        Self {
            conv1: Conv2d::zeros(cond, mid, 3),
            conv_gamma: Conv2d::zeros(mid, channels, 3),
            conv_beta: Conv2d::zeros(mid, channels, 3),
        }
    }

    pub fn cond_channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn channels(&self) -> usize {
        self.conv_gamma.out_channels()
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        for c in [&self.conv1, &self.conv_gamma, &self.conv_beta] {
            c.validate()?;
            if c.kernel() != 3 {
                return Err(KernelError::Invalid("S-path kernels must be 3x3".into()));
            }
        }
        let mid = self.conv1.out_channels();
        if self.conv_gamma.in_channels() != mid
            || self.conv_beta.in_channels() != mid
            || self.conv_beta.out_channels() != self.channels()
        {
            return Err(KernelError::Invalid("inconsistent S-path channel widths".into()));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 6] {
        [
            ("conv1.weight", &self.conv1.weight),
            ("conv1.bias", &self.conv1.bias),
            ("conv_gamma.weight", &self.conv_gamma.weight),
            ("conv_gamma.bias", &self.conv_gamma.bias),
            ("conv_beta.weight", &self.conv_beta.weight),
            ("conv_beta.bias", &self.conv_beta.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 6] {
        [
            ("conv1.weight", &mut self.conv1.weight),
            ("conv1.bias", &mut self.conv1.bias),
            ("conv_gamma.weight", &mut self.conv_gamma.weight),
            ("conv_gamma.bias", &mut self.conv_gamma.bias),
            ("conv_beta.weight", &mut self.conv_beta.weight),
            ("conv_beta.bias", &mut self.conv_beta.bias),
        ]
    }
}

impl SBlockWeightGrads {
    pub fn tensors(&self) -> [(&'static str, &Tensor); 6] {
        [
            ("conv1.weight", &self.conv1.weight),
            ("conv1.bias", &self.conv1.bias),
            ("conv_gamma.weight", &self.conv_gamma.weight),
            ("conv_gamma.bias", &self.conv_gamma.bias),
            ("conv_beta.weight", &self.conv_beta.weight),
            ("conv_beta.bias", &self.conv_beta.bias),
        ]
    }
}

#[derive(Debug, Clone)]
struct Modulation {
    cond_chw: Tensor,
    h1: Tensor,
    r: Tensor,
    gamma: Tensor,
    beta: Tensor,
}

fn modulation(cond: &Tensor, w: &SBlockWeights, h: usize, wd: usize) -> Result<Modulation, KernelError> {
    w.validate()?;
    let k = w.cond_channels();
    if cond.shape() != [h, wd, k] {
        return Err(ShapeError::Mismatch {
            expected: vec![h, wd, k],
            found: cond.shape().to_vec(),
        }
        .into());
    }
    if !cond.is_finite() {
        return Err(KernelError::NonFinite("conditioning map"));
    }
    let cond_chw = cond.hwc_to_chw();
    let h1 = conv2d(&cond_chw, &w.conv1)?;
    let r = Tensor::from_fn(h1.shape(), |i| h1.data()[i].max(0.0));
    let gamma = conv2d(&r, &w.conv_gamma)?;
    let beta = conv2d(&r, &w.conv_beta)?;
    Ok(Modulation { cond_chw, h1, r, gamma, beta })
}

fn modulation_backward(
    m: &Modulation,
    w: &SBlockWeights,
    dgamma: &Tensor,
    dbeta: &Tensor,
) -> (Tensor, SBlockWeightGrads) {
    let (mut dr, g_gamma) = conv2d_backward(&m.r, &w.conv_gamma, dgamma);
    let (dr_b, g_beta) = conv2d_backward(&m.r, &w.conv_beta, dbeta);
    dr.add_assign(&dr_b);
    for (d, h) in dr.data_mut().iter_mut().zip(m.h1.data()) {
        if *h <= 0.0 {
            *d = 0.0;
        }
    }
    let (dcond, g1) = conv2d_backward(&m.cond_chw, &w.conv1, &dr);
    (
        dcond.chw_to_hwc(),
        SBlockWeightGrads {
            conv1: g1,
            conv_gamma: g_gamma,
            conv_beta: g_beta,
        },
    )
}

#[derive(Debug, Clone)]
struct BatchNorm {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

fn dims4(x: &Tensor) -> Result<(usize, usize, usize, usize), KernelError> {
    match x.shape() {
        [n, c, h, w] => Ok((*n, *c, *h, *w)),
        s => Err(ShapeError::Invalid(format!("expected N x C x H x W, got {s:?}")).into()),
    }
}

fn batch_norm(x: &Tensor) -> Result<BatchNorm, KernelError> {
    let (n, c, h, w) = dims4(x)?;
    if !x.is_finite() {
        return Err(KernelError::NonFinite("activations"));
    }
    let hw = h * w;
    let m = (n * hw) as f64;
    let mut xhat = Tensor::zeros(x.shape());
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let plane = |b: usize| b * c * hw + ch * hw;
        let mut mean = 0.0;
        for b in 0..n {
            mean += x.data()[plane(b)..plane(b) + hw].iter().sum::<f64>();
        }
        mean /= m;
        let mut var = 0.0;
        for b in 0..n {
            var += x.data()[plane(b)..plane(b) + hw]
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>();
        }
        var /= m;
        let is = 1.0 / (var + BN_EPS).sqrt();
        inv_std[ch] = is;
        for b in 0..n {
            let o = plane(b);
            for i in o..o + hw {
                xhat.data_mut()[i] = (x.data()[i] - mean) * is;
            }
        }
    }
    Ok(BatchNorm { xhat, inv_std })
}

fn batch_norm_backward(bn: &BatchNorm, dxhat: &Tensor) -> Tensor {
    let s = bn.xhat.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let m = (n * hw) as f64;
    let mut dx = Tensor::zeros(s);
    for ch in 0..c {
        let (mut sum_d, mut sum_dx) = (0.0, 0.0);
        for b in 0..n {
            let o = b * c * hw + ch * hw;
            for i in o..o + hw {
                sum_d += dxhat.data()[i];
                sum_dx += dxhat.data()[i] * bn.xhat.data()[i];
            }
        }
        let is = bn.inv_std[ch];
        for b in 0..n {
            let o = b * c * hw + ch * hw;
            for i in o..o + hw {
                dx.data_mut()[i] =
                    is / m * (m * dxhat.data()[i] - sum_d - bn.xhat.data()[i] * sum_dx);
            }
        }
    }
    dx
}

fn check_channels(x: &Tensor, w: &SBlockWeights) -> Result<(usize, usize, usize, usize), KernelError> {
    let d = dims4(x)?;
    if d.1 != w.channels() {
        return Err(ShapeError::Mismatch {
            expected: vec![d.0, w.channels(), d.2, d.3],
            found: x.shape().to_vec(),
        }
        .into());
    }
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct SBlockCache {
    bn: BatchNorm,
    m: Modulation,
}

impl SBlockCache {
    pub fn gamma(&self) -> &Tensor {
        &self.m.gamma
    }

    pub fn beta(&self) -> &Tensor {
        &self.m.beta
    }

    pub fn normalized(&self) -> &Tensor {
        &self.bn.xhat
    }
}

#[derive(Debug, Clone)]
pub struct SBlockGrads {
    pub x: Tensor,
    pub cond: Tensor,
    pub weights: SBlockWeightGrads,
}

/// `y = BN(x) ⊙ (1 + γ) + β`, with γ, β (`[C, H, W]`) shared across the batch.
pub fn s_block_forward(
    x: &Tensor,
    cond: &Tensor,
    w: &SBlockWeights,
) -> Result<(Tensor, SBlockCache), KernelError> {
    let (n, c, h, wd) = check_channels(x, w)?;
    let m = modulation(cond, w, h, wd)?;
    let bn = batch_norm(x)?;
    let hw = h * wd;
    let mut y = Tensor::zeros(x.shape());
    for b in 0..n {
        for i in 0..c * hw {
            let j = b * c * hw + i;
            y.data_mut()[j] = bn.xhat.data()[j] * (1.0 + m.gamma.data()[i]) + m.beta.data()[i];
        }
    }
    Ok((y, SBlockCache { bn, m }))
}

pub fn s_block_backward(cache: &SBlockCache, w: &SBlockWeights, dy: &Tensor) -> SBlockGrads {
    let s = cache.bn.xhat.shape();
    let (n, chw) = (s[0], s[1] * s[2] * s[3]);
    let mut dgamma = Tensor::zeros(&s[1..]);
    let mut dbeta = Tensor::zeros(&s[1..]);
    let mut dxhat = Tensor::zeros(s);
    for b in 0..n {
        for i in 0..chw {
            let j = b * chw + i;
            let g = dy.data()[j];
            dgamma.data_mut()[i] += g * cache.bn.xhat.data()[j];
            dbeta.data_mut()[i] += g;
            dxhat.data_mut()[j] = g * (1.0 + cache.m.gamma.data()[i]);
        }
    }
    let (cond, weights) = modulation_backward(&cache.m, w, &dgamma, &dbeta);
    SBlockGrads {
        x: batch_norm_backward(&cache.bn, &dxhat),
        cond,
        weights,
    }
}

#[derive(Debug, Clone)]
pub struct SAvgBlockCache {
    bn: BatchNorm,
    m_s: Modulation,
    m_avg: Modulation,
    gamma_avg: Vec<f64>,
}

impl SAvgBlockCache {
    /// Pooled per-channel `(γ_avg, β_avg)`.
    pub fn pooled(&self) -> (Vec<f64>, Vec<f64>) {
        (self.gamma_avg.clone(), pool(&self.m_avg.beta))
    }
}

#[derive(Debug, Clone)]
pub struct SAvgBlockGrads {
    pub x: Tensor,
    pub cond_bg: Tensor,
    pub cond_full: Tensor,
    pub w_s: SBlockWeightGrads,
    pub w_avg: SBlockWeightGrads,
}

/// Spatial mean per channel of a `[C, H, W]` map.
fn pool(t: &Tensor) -> Vec<f64> {
    let (c, hw) = (t.dim(0), t.dim(1) * t.dim(2));
    (0..c)
        .map(|ch| t.data()[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
        .collect()
}

/// `y = BN(x) ⊙ (1 + γ + γ_avg) + β + β_avg`. `(γ, β)` come from `cond_bg`;
/// `(γ_avg, β_avg)` from `cond_full` after global average pooling.
pub fn s_avg_block_forward(
    x: &Tensor,
    cond_bg: &Tensor,
    cond_full: &Tensor,
    w_s: &SBlockWeights,
    w_avg: &SBlockWeights,
) -> Result<(Tensor, SAvgBlockCache), KernelError> {
    let (n, c, h, wd) = check_channels(x, w_s)?;
    check_channels(x, w_avg)?;
    let m_s = modulation(cond_bg, w_s, h, wd)?;
    let m_avg = modulation(cond_full, w_avg, h, wd)?;
    let bn = batch_norm(x)?;
    let ga = pool(&m_avg.gamma);
    let ba = pool(&m_avg.beta);
    let hw = h * wd;
    let mut y = Tensor::zeros(x.shape());
    for b in 0..n {
        for ch in 0..c {
            for p in 0..hw {
                let i = ch * hw + p;
                let j = b * c * hw + i;
                y.data_mut()[j] = bn.xhat.data()[j] * (1.0 + m_s.gamma.data()[i] + ga[ch])
                    + m_s.beta.data()[i]
                    + ba[ch];
            }
        }
    }
    Ok((
        y,
        SAvgBlockCache {
            bn,
            m_s,
            m_avg,
            gamma_avg: ga,
        },
    ))
}

pub fn s_avg_block_backward(
    cache: &SAvgBlockCache,
    w_s: &SBlockWeights,
    w_avg: &SBlockWeights,
    dy: &Tensor,
) -> SAvgBlockGrads {
    let s = cache.bn.xhat.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let mut dgamma = Tensor::zeros(&s[1..]);
    let mut dbeta = Tensor::zeros(&s[1..]);
    let mut dxhat = Tensor::zeros(s);
    let mut dga = vec![0.0; c];
    let mut dba = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            for p in 0..hw {
                let i = ch * hw + p;
                let j = b * c * hw + i;
                let g = dy.data()[j];
                let xh = cache.bn.xhat.data()[j];
                dgamma.data_mut()[i] += g * xh;
                dbeta.data_mut()[i] += g;
                dga[ch] += g * xh;
                dba[ch] += g;
                dxhat.data_mut()[j] =
                    g * (1.0 + cache.m_s.gamma.data()[i] + cache.gamma_avg[ch]);
            }
        }
    }
    let spread = |v: &[f64]| Tensor::from_fn(&s[1..], |i| v[i / hw] / hw as f64);
    let (cond_bg, gs) = modulation_backward(&cache.m_s, w_s, &dgamma, &dbeta);
    let (cond_full, ga) = modulation_backward(&cache.m_avg, w_avg, &spread(&dga), &spread(&dba));
    SAvgBlockGrads {
        x: batch_norm_backward(&cache.bn, &dxhat),
        cond_bg,
        cond_full,
        w_s: gs,
        w_avg: ga,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_modulation_is_plain_batch_norm() {
        let mut r = rng();
        let x = Tensor::normal(&[2, 4, 5, 5], 3.0, &mut r);
        let cond = Tensor::uniform(&[5, 5, 8], -1.0, 1.0, &mut r);
        let w = SBlockWeights::zeros(8, 6, 4);
        let (y, _) = s_block_forward(&x, &cond, &w).unwrap();
        let m = 50.0;
        for ch in 0..4 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| y.data()[b * 100 + ch * 25..b * 100 + ch * 25 + 25].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            assert!(mean.abs() <= 1e-10);
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
    }

    #[test]
    fn constant_input_yields_beta() {
        let mut r = rng();
        let x = Tensor::from_fn(&[2, 3, 4, 4], |i| ((i / 16) % 3) as f64 * 2.5);
        let cond = Tensor::uniform(&[4, 4, 5], -1.0, 1.0, &mut r);
        let w = SBlockWeights::init(5, 6, 3, &mut r);
        let (y, cache) = s_block_forward(&x, &cond, &w).unwrap();
        for b in 0..2 {
            for i in 0..48 {
                assert!((y.data()[b * 48 + i] - cache.beta().data()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeroed_average_branch_reduces_to_s_block() {
        let mut r = rng();
        let x = Tensor::normal(&[2, 3, 4, 5], 1.0, &mut r);
        let cb = Tensor::uniform(&[4, 5, 6], -1.0, 1.0, &mut r);
        let cf = Tensor::uniform(&[4, 5, 6], -1.0, 1.0, &mut r);
        let ws = SBlockWeights::init(6, 4, 3, &mut r);
        let wa = SBlockWeights::zeros(6, 4, 3);
        let (y1, _) = s_block_forward(&x, &cb, &ws).unwrap();
        let (y2, _) = s_avg_block_forward(&x, &cb, &cf, &ws, &wa).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn average_branch_ignores_translation_away_from_borders() {
        let mut r = rng();
        let (h, w, k) = (10, 10, 3);
        let x = Tensor::normal(&[1, 2, h, w], 1.0, &mut r);
        let cb = Tensor::uniform(&[h, w, k], -1.0, 1.0, &mut r);
        let blob = Tensor::uniform(&[3, 3, k], -1.0, 1.0, &mut r);
        let place = |oy: usize, ox: usize| {
            let mut t = Tensor::zeros(&[h, w, k]);
            for y in 0..3 {
                for x in 0..3 {
                    for c in 0..k {
                        t.data_mut()[((oy + y) * w + ox + x) * k + c] = blob.data()[(y * 3 + x) * k + c];
                    }
                }
            }
            t
        };
        let mut ws = SBlockWeights::init(k, 4, 2, &mut r);
        let mut wa = SBlockWeights::init(k, 4, 2, &mut r);
        ws.conv1.bias = Tensor::filled(&[4], 0.01);
        wa.conv1.bias = Tensor::filled(&[4], 0.01);
        let (y1, _) = s_avg_block_forward(&x, &cb, &place(2, 2), &ws, &wa).unwrap();
        let (y2, _) = s_avg_block_forward(&x, &cb, &place(5, 4), &ws, &wa).unwrap();
        assert!(y1.max_abs_diff(&y2) < 1e-12);
        // a different multiset of values does change the output
        let mut doubled = place(2, 2);
        doubled.scale(2.0);
        let (y3, _) = s_avg_block_forward(&x, &cb, &doubled, &ws, &wa).unwrap();
        assert!(y1.max_abs_diff(&y3) > 1e-9);
    }

    #[test]
    fn zero_upstream_gradient_is_zero_everywhere() {
        let mut r = rng();
        let x = Tensor::normal(&[2, 3, 4, 4], 1.0, &mut r);
        let cond = Tensor::uniform(&[4, 4, 5], -1.0, 1.0, &mut r);
        let w = SBlockWeights::init(5, 4, 3, &mut r);
        let (y, cache) = s_block_forward(&x, &cond, &w).unwrap();
        let g = s_block_backward(&cache, &w, &Tensor::zeros(y.shape()));
        assert_eq!(g.x.max_abs(), 0.0);
        assert_eq!(g.cond.max_abs(), 0.0);
        for (_, t) in g.weights.tensors() {
            assert_eq!(t.max_abs(), 0.0);
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let w = SBlockWeights::zeros(4, 4, 3);
        let x = Tensor::zeros(&[1, 3, 4, 4]);
        assert!(s_block_forward(&x, &Tensor::zeros(&[4, 5, 4]), &w).is_err());
        assert!(s_block_forward(&Tensor::zeros(&[1, 2, 4, 4]), &Tensor::zeros(&[4, 4, 4]), &w).is_err());
    }
}
