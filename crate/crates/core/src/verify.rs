//! Self-checks of the numerical kernels and the rasterizer against naive
//! reference computations. Backs the `verify` command.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::compositor::{blend, blend_backward, blend_multi, blend_multi_backward, sigmoid};
use crate::condkernel::attention::{attention_backward, attention_forward, AttentionWeights, HEAD_SIZE};
use crate::condkernel::embed::{apply_contextualized, EMBED_DIM};
use crate::condkernel::norm::{
    s_avg_block_backward, s_avg_block_forward, s_block_backward, s_block_forward, SBlockWeights,
};
use crate::condkernel::tokens::{pseudo_encode, LayerTag, TokenEmbeddings};
use crate::condkernel::toy::{toy_backward, toy_forward, StyleInput, ToyConfig, ToyWeights};
use crate::geometry::Point;
use crate::raster::{attribute_plane, rasterize, rasterize_at, split_bg_fg};
use crate::scene::{build_hierarchy, resolve_roles, Instance, InstanceMask, SceneGraph};
use crate::tensor::Tensor;
use crate::vocab::{ClassVocab, Role};

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const EXACT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Grads,
    Attention,
    Blend,
    Raster,
    All,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grads" => Ok(Suite::Grads),
            "attention" => Ok(Suite::Attention),
            "blend" => Ok(Suite::Blend),
            "raster" => Ok(Suite::Raster),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite {s:?} (expected grads|attention|blend|raster|all)")),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Grads => "grads",
            Suite::Attention => "attention",
            Suite::Blend => "blend",
            Suite::Raster => "raster",
            Suite::All => "all",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst error observed; `null` in JSON when not finite.
    pub max_error: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn new(name: impl Into<String>, max_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: max_error.is_finite() && max_error <= tolerance,
            max_error,
            tolerance,
            detail: None,
        }
    }

    fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random instances per gradient check.
    pub instances: usize,
    /// Weights to include in the gradient suite, e.g. a loaded checkpoint.
    pub weights: Option<ToyWeights>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 5,
            weights: None,
        }
    }
}

pub fn run(suite: Suite, opts: &VerifyOptions) -> VerifyReport {
    let suites: Vec<SuiteReport> = match suite {
        Suite::All => [Suite::Grads, Suite::Attention, Suite::Blend, Suite::Raster]
            .iter()
            .map(|s| run_one(*s, opts))
            .collect(),
        s => vec![run_one(s, opts)],
    };
    VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        seed: opts.seed,
        suites,
    }
}

fn run_one(suite: Suite, opts: &VerifyOptions) -> SuiteReport {
    let checks = match suite {
        Suite::Grads => grads(opts),
        Suite::Attention => attention(opts.seed),
        Suite::Blend => blend_suite(opts.seed),
        Suite::Raster => raster(opts.seed),
        Suite::All => unreachable!(),
    };
    SuiteReport {
        suite: suite.to_string(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, 0 when both vanish.
pub fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let d = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let s = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s == 0.0 {
        if d == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        d / s
    }
}

/// Up to `k` distinct coordinates of a tensor of length `len`.
fn picks(len: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= k {
        return (0..len).collect();
    }
    rand::seq::index::sample(rng, len, k).into_vec()
}

/// Central differences of `loss` at sampled coordinates of `x`, compared to
/// `analytic`.
pub fn fd_compare(
    x: &Tensor,
    analytic: &Tensor,
    coords: &[usize],
    mut loss: impl FnMut(&Tensor) -> f64,
) -> f64 {
    let mut a = Vec::with_capacity(coords.len());
    let mut n = Vec::with_capacity(coords.len());
    let mut probe = x.clone();
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        n.push((up - down) / (2.0 * FD_STEP));
        a.push(analytic.data()[i]);
    }
    rel_error(&a, &n)
}

/// Tracks the worst relative error over several probes of one block.
struct Worst {
    name: &'static str,
    err: f64,
    at: String,
    probes: usize,
}

impl Worst {
    fn new(name: &'static str) -> Self {
        Self { name, err: 0.0, at: String::new(), probes: 0 }
    }

    fn add(&mut self, label: &str, e: f64) {
        self.probes += 1;
        if !self.err.is_nan() && (e.is_nan() || e > self.err) {
            self.err = e;
            self.at = label.to_string();
        }
    }

    fn check(self, instances: usize) -> Check {
        let n = self.probes;
        Check::new(self.name, self.err, GRAD_TOLERANCE).with_detail(format!(
            "{instances} instances, {n} tensors probed, worst at {}",
            if self.at.is_empty() { "-" } else { &self.at }
        ))
    }
}

const COORDS: usize = 16;

fn s_weights(k: usize, mid: usize, c: usize, rng: &mut ChaCha8Rng) -> SBlockWeights {
    let mut w = SBlockWeights::init(k, mid, c, rng);
    for (_, t) in w.tensors_mut() {
        *t = Tensor::normal(t.shape(), 0.4, rng);
    }
    w
}

fn grads(opts: &VerifyOptions) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6772_6164);
    let inst = opts.instances.max(1);
    let mut out = Vec::new();

    let mut w_s = Worst::new("s_block");
    for _ in 0..inst {
        let (n, c, h, wd, k, mid) = (2, 4, 5, 5, 6, 5);
        let x = Tensor::normal(&[n, c, h, wd], 1.0, &mut rng);
        let cond = Tensor::uniform(&[h, wd, k], -1.0, 1.0, &mut rng);
        let w = s_weights(k, mid, c, &mut rng);
        let g = Tensor::uniform(&[n, c, h, wd], -1.0, 1.0, &mut rng);
        let (_, cache) = s_block_forward(&x, &cond, &w).expect("shapes");
        let an = s_block_backward(&cache, &w, &g);
        let loss = |x: &Tensor, cond: &Tensor, w: &SBlockWeights| s_block_forward(x, cond, w).unwrap().0.dot(&g);
        w_s.add("x", fd_compare(&x, &an.x, &picks(x.len(), COORDS, &mut rng), |t| loss(t, &cond, &w)));
        w_s.add("cond", fd_compare(&cond, &an.cond, &picks(cond.len(), COORDS, &mut rng), |t| loss(&x, t, &w)));
        for (idx, (label, gt)) in an.weights.tensors().into_iter().enumerate() {
            let base = w.tensors()[idx].1.clone();
            let coords = picks(base.len(), COORDS, &mut rng);
            w_s.add(label, fd_compare(&base, gt, &coords, |t| {
                let mut w2 = w.clone();
                *w2.tensors_mut()[idx].1 = t.clone();
                loss(&x, &cond, &w2)
            }));
        }
    }
    out.push(w_s.check(inst));

    let mut w_a = Worst::new("s_avg_block");
    for _ in 0..inst {
        let (n, c, h, wd, k, mid) = (2, 3, 4, 5, 5, 4);
        let x = Tensor::normal(&[n, c, h, wd], 1.0, &mut rng);
        let cb = Tensor::uniform(&[h, wd, k], -1.0, 1.0, &mut rng);
        let cf = Tensor::uniform(&[h, wd, k], -1.0, 1.0, &mut rng);
        let ws = s_weights(k, mid, c, &mut rng);
        let wa = s_weights(k, mid, c, &mut rng);
        let g = Tensor::uniform(&[n, c, h, wd], -1.0, 1.0, &mut rng);
        let (_, cache) = s_avg_block_forward(&x, &cb, &cf, &ws, &wa).expect("shapes");
        let an = s_avg_block_backward(&cache, &ws, &wa, &g);
        let loss = |x: &Tensor, cb: &Tensor, cf: &Tensor, ws: &SBlockWeights, wa: &SBlockWeights| {
            s_avg_block_forward(x, cb, cf, ws, wa).unwrap().0.dot(&g)
        };
        w_a.add("x", fd_compare(&x, &an.x, &picks(x.len(), COORDS, &mut rng), |t| loss(t, &cb, &cf, &ws, &wa)));
        w_a.add("cond_bg", fd_compare(&cb, &an.cond_bg, &picks(cb.len(), COORDS, &mut rng), |t| loss(&x, t, &cf, &ws, &wa)));
        w_a.add("cond_full", fd_compare(&cf, &an.cond_full, &picks(cf.len(), COORDS, &mut rng), |t| loss(&x, &cb, t, &ws, &wa)));
        for (idx, (label, gt)) in an.w_avg.tensors().into_iter().enumerate() {
            let base = wa.tensors()[idx].1.clone();
            let coords = picks(base.len(), COORDS, &mut rng);
            w_a.add(label, fd_compare(&base, gt, &coords, |t| {
                let mut w2 = wa.clone();
                *w2.tensors_mut()[idx].1 = t.clone();
                loss(&x, &cb, &cf, &ws, &w2)
            }));
        }
        for (idx, (label, gt)) in an.w_s.tensors().into_iter().enumerate() {
            let base = ws.tensors()[idx].1.clone();
            let coords = picks(base.len(), COORDS, &mut rng);
            w_a.add(label, fd_compare(&base, gt, &coords, |t| {
                let mut w2 = ws.clone();
                *w2.tensors_mut()[idx].1 = t.clone();
                loss(&x, &cb, &cf, &w2, &wa)
            }));
        }
    }
    out.push(w_a.check(inst));

    let mut w_t = Worst::new("attention");
    for i in 0..inst {
        let heads = if i % 2 == 0 { 6 } else { 12 };
        let (rows, d, n) = (4, 6, 5);
        let mut w = AttentionWeights::init(rows, heads, d, &mut rng);
        for (_, t) in w.tensors_mut() {
            *t = Tensor::uniform(t.shape(), -0.5, 0.5, &mut rng);
        }
        let tok = Tensor::uniform(&[n, d], -1.0, 1.0, &mut rng);
        let g = Tensor::uniform(&[rows, EMBED_DIM], -1.0, 1.0, &mut rng);
        let te = TokenEmbeddings::new(tok.clone(), LayerTag::Last).unwrap();
        let (_, cache) = attention_forward(&te, &w).unwrap();
        let an = attention_backward(&cache, &w, &g);
        let loss = |tok: &Tensor, w: &AttentionWeights| {
            let te = TokenEmbeddings::from_tensor_unchecked(tok.clone(), LayerTag::Last);
            attention_forward(&te, w).unwrap().0.ctx.dot(&g)
        };
        w_t.add("tokens", fd_compare(&tok, &an.tokens, &picks(tok.len(), COORDS, &mut rng), |t| loss(t, &w)));
        for (idx, (label, gt)) in an.tensors().into_iter().enumerate() {
            let base = w.tensors()[idx].1.clone();
            let coords = picks(base.len(), COORDS, &mut rng);
            w_t.add(label, fd_compare(&base, gt, &coords, |t| {
                let mut w2 = w.clone();
                *w2.tensors_mut()[idx].1 = t.clone();
                loss(&tok, &w2)
            }));
        }
    }
    out.push(w_t.check(inst));

    let mut w_b = Worst::new("blend");
    for _ in 0..inst {
        let bg = Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng);
        let fg = Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng);
        let l = Tensor::uniform(&[1, 4, 4], -3.0, 3.0, &mut rng);
        let g = Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng);
        let (_, _, cache) = blend(&bg, &fg, &l).unwrap();
        let an = blend_backward(&cache, &g);
        let loss = |bg: &Tensor, fg: &Tensor, l: &Tensor| blend(bg, fg, l).unwrap().0.dot(&g);
        w_b.add("x_bg", fd_compare(&bg, &an.x_bg, &picks(48, 48, &mut rng), |t| loss(t, &fg, &l)));
        w_b.add("x_fg", fd_compare(&fg, &an.x_fg, &picks(48, 48, &mut rng), |t| loss(&bg, t, &l)));
        w_b.add("logit", fd_compare(&l, &an.logit, &picks(16, 16, &mut rng), |t| loss(&bg, &fg, t)));
    }
    out.push(w_b.check(inst));

    let mut w_m = Worst::new("blend_multi");
    for _ in 0..inst {
        let objs = 3;
        let bg = Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng);
        let fgs: Vec<_> = (0..objs).map(|_| Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng)).collect();
        let ls: Vec<_> = (0..objs).map(|_| Tensor::uniform(&[1, 4, 4], -3.0, 3.0, &mut rng)).collect();
        let g = Tensor::uniform(&[3, 4, 4], -1.0, 1.0, &mut rng);
        let (_, cache) = blend_multi(&bg, &fgs, &ls).unwrap();
        let an = blend_multi_backward(&cache, &g);
        let loss = |bg: &Tensor, fgs: &[Tensor], ls: &[Tensor]| blend_multi(bg, fgs, ls).unwrap().0.dot(&g);
        w_m.add("x_bg", fd_compare(&bg, &an.x_bg, &picks(48, 48, &mut rng), |t| loss(t, &fgs, &ls)));
        for i in 0..objs {
            w_m.add("x_fg", fd_compare(&fgs[i], &an.x_fg[i], &picks(48, 48, &mut rng), |t| {
                let mut f2 = fgs.clone();
                f2[i] = t.clone();
                loss(&bg, &f2, &ls)
            }));
            w_m.add("logits", fd_compare(&ls[i], &an.logits[i], &picks(16, 16, &mut rng), |t| {
                let mut l2 = ls.clone();
                l2[i] = t.clone();
                loss(&bg, &fgs, &l2)
            }));
        }
    }
    out.push(w_m.check(inst));

    let small = ToyConfig {
        classes: 4,
        attributes: 3,
        channels: 3,
        mid: 4,
        heads: 6,
        d_lm: 8,
    };
    let mut toy_w = ToyWeights::init(small, opts.seed);
    for t in [&mut toy_w.e_cls, &mut toy_w.e_attr, &mut toy_w.proj.weight] {
        *t = Tensor::uniform(t.shape(), -0.5, 0.5, &mut rng);
    }
    for b in [&mut toy_w.block1, &mut toy_w.block2] {
        *b = s_weights(128, small.mid, small.channels, &mut rng);
    }
    for (_, t) in toy_w.attention.tensors_mut() {
        *t = Tensor::uniform(t.shape(), -0.5, 0.5, &mut rng);
    }
    out.push(toy_check("toy_forward", &toy_w, 6, 3, &mut rng));
    if let Some(w) = &opts.weights {
        let c = if !w.is_finite() {
            Check::new("toy_forward[weights]", f64::NAN, GRAD_TOLERANCE).with_detail("weights contain non-finite values")
        } else if let Err(e) = w.validate() {
            Check::new("toy_forward[weights]", f64::NAN, GRAD_TOLERANCE).with_detail(e.to_string())
        } else {
            toy_check("toy_forward[weights]", w, 6, 2, &mut rng)
        };
        out.push(c);
    }
    out
}

/// Small scene of stripes with attribute and token styles, probed through
/// every parameter of the toy render path.
fn toy_check(name: &'static str, w: &ToyWeights, res: usize, coords: usize, rng: &mut ChaCha8Rng) -> Check {
    let classes = w.config.classes.max(1) as u16;
    let mut v = vec![];
    for i in 0..3u32 {
        let x = i as f64 * 2.0;
        let class = (i as u16 % classes) + 1;
        let attrs = if w.config.attributes > 0 { vec![(i as u16) % w.config.attributes as u16] } else { vec![] };
        v.push(Instance::new(i + 1, class, InstanceMask::rect(x, 0.0, x + 3.0, res as f64 - i as f64)).with_attributes(attrs));
    }
    let scene = build_hierarchy(v, res as u32, res as u32).expect("valid scene");
    let maps = rasterize(&scene);
    let plane = attribute_plane(&scene, &maps);
    let tok = pseudo_encode("a small red house", w.config.d_lm);
    let mut worst = Worst::new(name);
    for style in [StyleInput::Attributes(&plane), StyleInput::Tokens(&tok)] {
        let (out, cache) = match toy_forward(&maps, style, w) {
            Ok(r) => r,
            Err(e) => return Check::new(name, f64::NAN, GRAD_TOLERANCE).with_detail(e.to_string()),
        };
        let g = Tensor::uniform(out.shape(), -1.0, 1.0, rng);
        let an = toy_backward(&cache, w, &g);
        let ck = w.to_checkpoint();
        // Attention parameters are probed against <dL/dctx, ctx>, which has
        // the same gradient but stays above rounding noise when the rest of
        // the network scales the caption path down. dL/dctx itself is probed
        // through the context input.
        let att_loss = match (style, &an.ctx) {
            (StyleInput::Tokens(t), Some(dctx)) => {
                let (o, _) = attention_forward(t, &w.attention).expect("forward ran");
                worst.add("ctx", fd_compare(&o.ctx, dctx, &picks(o.ctx.len(), coords, rng), |c| {
                    toy_forward(&maps, StyleInput::Context(c), w).map(|r| r.0.dot(&g)).unwrap_or(f64::NAN)
                }));
                Some((t, dctx))
            }
            _ => None,
        };
        for (pname, gt) in toy_grad_tensors(&an) {
            let base = ck.get(&pname).expect("named tensor").clone();
            let c = picks(base.len(), coords, rng);
            worst.add(&pname, fd_compare(&base, &gt, &c, |t| {
                let mut ck2 = ck.clone();
                ck2.insert(pname.clone(), t.clone());
                let w2 = ToyWeights::from_checkpoint(&ck2).expect("same shapes");
                match att_loss {
                    Some((tok, dctx)) if pname.starts_with("attention.") => attention_forward(tok, &w2.attention)
                        .map(|r| r.0.ctx.dot(dctx))
                        .unwrap_or(f64::NAN),
                    _ => toy_forward(&maps, style, &w2).map(|r| r.0.dot(&g)).unwrap_or(f64::NAN),
                }
            }));
        }
    }
    worst.check(2)
}

fn toy_grad_tensors(g: &crate::condkernel::toy::ToyGrads) -> Vec<(String, Tensor)> {
    let mut v = vec![
        ("e_cls".to_string(), g.e_cls.clone()),
        ("const_input".to_string(), g.const_input.clone()),
        ("proj.weight".to_string(), g.proj.weight.clone()),
        ("proj.bias".to_string(), g.proj.bias.clone()),
    ];
    for (prefix, b) in [("block1", &g.block1), ("block2", &g.block2)] {
        for (n, t) in b.tensors() {
            v.push((format!("{prefix}.{n}"), t.clone()));
        }
    }
    if let Some(a) = &g.e_attr {
        v.push(("e_attr".into(), a.clone()));
    }
    if let Some(a) = &g.attention {
        for (n, t) in a.tensors() {
            v.push((format!("attention.{n}"), t.clone()));
        }
    }
    v
}

/// The definition written out with one scalar accumulation per term.
fn naive_attention(tok: &Tensor, w: &AttentionWeights) -> (Vec<f64>, Vec<f64>) {
    let (rows, heads, n, d) = (w.rows(), w.heads(), tok.dim(0), tok.dim(1));
    let h = HEAD_SIZE;
    let idx3 = |t: &Tensor, a: usize, b: usize, c: usize| t.data()[(a * t.dim(1) + b) * t.dim(2) + c];
    let mut weights = Vec::new();
    let mut ctx = Vec::new();
    for q in 0..rows {
        let mut cat = Vec::new();
        for hd in 0..heads {
            let mut k = vec![vec![0.0; h]; n];
            let mut v = vec![vec![0.0; h]; n];
            for j in 0..n {
                for e in 0..h {
                    for x in 0..d {
                        k[j][e] += tok.data()[j * d + x] * idx3(&w.w_k, hd, x, e);
                        v[j][e] += tok.data()[j * d + x] * idx3(&w.w_v, hd, x, e);
                    }
                }
            }
            let mut s = vec![0.0; n];
            for j in 0..n {
                for e in 0..h {
                    s[j] += idx3(&w.queries, q, hd, e) * k[j][e];
                }
                s[j] /= (h as f64).sqrt();
            }
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|x| (x - m).exp()).sum();
            let a: Vec<f64> = s.iter().map(|x| (x - m).exp() / z).collect();
            for e in 0..h {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += a[j] * v[j][e];
                }
                cat.push(acc);
            }
            weights.extend(a);
        }
        for o in 0..EMBED_DIM {
            let mut acc = w.b_o.data()[o];
            for (i, c) in cat.iter().enumerate() {
                acc += c * w.w_o.data()[i * EMBED_DIM + o];
            }
            ctx.push(acc);
        }
    }
    (ctx, weights)
}

fn attention(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6174_746e);
    let mut out = Vec::new();
    let (mut err, mut row_err) = (0.0f64, 0.0f64);
    for heads in [6, 12] {
        let mut w = AttentionWeights::init(6, heads, 12, &mut rng);
        for (_, t) in w.tensors_mut() {
            *t = Tensor::uniform(t.shape(), -0.5, 0.5, &mut rng);
        }
        let tok = TokenEmbeddings::new(Tensor::uniform(&[7, 12], -1.0, 1.0, &mut rng), LayerTag::Last).unwrap();
        let (o, _) = attention_forward(&tok, &w).unwrap();
        let (ctx, weights) = naive_attention(tok.tensor(), &w);
        for (a, b) in o.ctx.data().iter().zip(&ctx).chain(o.weights.data().iter().zip(&weights)) {
            err = err.max((a - b).abs());
        }
        for row in o.weights.data().chunks(7) {
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
            if row.iter().any(|v| *v < 0.0) {
                row_err = f64::INFINITY;
            }
        }
    }
    out.push(Check::new("oracle (c=5, n=7, H=6,12)", err, EXACT_TOLERANCE));
    out.push(Check::new("softmax rows", row_err, EXACT_TOLERANCE));

    let scene = synthetic_scene(&mut rng, 64, 5, 6);
    let tok = pseudo_encode("a red car next to a tree", 16);
    let w = AttentionWeights::init(6, 6, 16, &mut rng);
    let mut ops = Vec::new();
    let mut ctxs = Vec::new();
    for res in [64, 256] {
        let maps = rasterize_at(&scene, res, res);
        let (o, _) = attention_forward(&tok, &w).unwrap();
        let applied = apply_contextualized(&maps, &o.ctx).unwrap();
        debug_assert_eq!(applied.shape(), &[res, res, EMBED_DIM]);
        ops.push(o.ops);
        ctxs.push(o.ctx);
    }
    let diff = if ops[0] == ops[1] { ctxs[0].max_abs_diff(&ctxs[1]) } else { f64::INFINITY };
    out.push(
        Check::new("op count independent of resolution", diff, 0.0)
            .with_detail(format!("ops at 64^2: {}, at 256^2: {}", ops[0], ops[1])),
    );
    out
}

fn blend_suite(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x626c_6e64);
    let mut out = Vec::new();
    let img = |rng: &mut ChaCha8Rng, c| Tensor::uniform(&[c, 4, 4], -1.0, 1.0, rng);
    let (bg, fg, g) = (img(&mut rng, 3), img(&mut rng, 3), img(&mut rng, 3));
    let (_, _, c) = blend(&bg, &fg, &Tensor::filled(&[1, 4, 4], 40.0)).unwrap();
    out.push(Check::new("routing: alpha'=+40 leaves no background gradient", blend_backward(&c, &g).x_bg.max_abs(), EXACT_TOLERANCE));
    let (_, _, c) = blend(&bg, &fg, &Tensor::filled(&[1, 4, 4], -40.0)).unwrap();
    out.push(Check::new("routing: alpha'=-40 leaves no foreground gradient", blend_backward(&c, &g).x_fg.max_abs(), EXACT_TOLERANCE));

    let l = Tensor::uniform(&[1, 4, 4], -3.0, 3.0, &mut rng);
    let (a, _, _) = blend(&bg, &fg, &l).unwrap();
    let (b, _) = blend_multi(&bg, std::slice::from_ref(&fg), std::slice::from_ref(&l)).unwrap();
    out.push(Check::new("blend_multi N=1 equals blend", a.max_abs_diff(&b), 1e-15));

    let fgs: Vec<_> = (0..3).map(|_| img(&mut rng, 3)).collect();
    let ls: Vec<_> = (0..3).map(|_| Tensor::uniform(&[1, 4, 4], -4.0, 4.0, &mut rng)).collect();
    let (m, cache) = blend_multi(&bg, &fgs, &ls).unwrap();
    let (mut err, mut sum_err) = (0.0f64, 0.0f64);
    for p in 0..16 {
        let e: Vec<f64> = ls.iter().map(|l| l.data()[p].exp()).collect();
        let z: f64 = e.iter().sum();
        let mut alpha = 0.0;
        for i in 0..3 {
            alpha += sigmoid(ls[i].data()[p]) * e[i] / z;
        }
        for ch in 0..3 {
            let k = ch * 16 + p;
            let mut f = 0.0;
            for i in 0..3 {
                f += fgs[i].data()[k] * e[i] / z;
            }
            err = err.max((m.data()[k] - (bg.data()[k] * (1.0 - alpha) + f * alpha)).abs());
        }
        sum_err = sum_err.max((cache.weights_at(p).iter().sum::<f64>() - 1.0).abs());
    }
    out.push(Check::new("blend_multi N=3 oracle", err, EXACT_TOLERANCE));
    out.push(Check::new("object weights sum to 1", sum_err, EXACT_TOLERANCE));
    out
}

/// Vocabulary of `n` classes alternating background and foreground.
pub fn synthetic_vocab(n: usize) -> ClassVocab {
    let names: Vec<(String, Role)> = (1..=n)
        .map(|i| (format!("class{i}"), if i % 2 == 0 { Role::Foreground } else { Role::Background }))
        .collect();
    ClassVocab::from_names(&names).expect("unique names")
}

/// Random rectangles and triangles with float vertices.
pub fn synthetic_scene(rng: &mut ChaCha8Rng, size: u32, classes: u16, count: usize) -> SceneGraph {
    let s = f64::from(size);
    let mut v = Vec::new();
    for i in 0..count {
        let id = i as u32 + 1;
        let class = rng.random_range(1..=classes);
        let (cx, cy) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let (rx, ry) = (rng.random_range(1.0..s / 2.0), rng.random_range(1.0..s / 2.0));
        let ring = if rng.random_bool(0.5) {
            vec![
                Point::new(cx - rx, cy - ry),
                Point::new(cx + rx, cy - ry),
                Point::new(cx + rx, cy + ry),
                Point::new(cx - rx, cy + ry),
            ]
        } else {
            vec![Point::new(cx - rx, cy + ry), Point::new(cx + rx, cy + ry), Point::new(cx, cy - ry)]
        };
        v.push(Instance::new(id, class, InstanceMask::new(vec![ring])));
    }
    build_hierarchy(v, size, size).expect("valid scene")
}

/// Even-odd test at a point by casting a ray toward +x.
fn covers(rings: &[Vec<Point>], px: f64, py: f64) -> bool {
    let mut inside = false;
    for ring in rings {
        for k in 0..ring.len() {
            let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
            if (a.y > py) != (b.y > py) {
                let x = a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y);
                if x > px {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn raster(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7273_7472);
    let vocab = synthetic_vocab(6);
    let (mut mismatched, mut partition_errors) = (0usize, 0usize);
    for _ in 0..100 {
        let n = rng.random_range(1..12);
        let scene = synthetic_scene(&mut rng, 64, 6, n);
        let maps = rasterize(&scene);
        let cover: Vec<(usize, u32, u16, Vec<bool>)> = scene
            .instances
            .values()
            .map(|inst| {
                let bits: Vec<bool> = (0..64 * 64)
                    .map(|p| covers(&inst.mask.rings, (p % 64) as f64 + 0.5, (p / 64) as f64 + 0.5))
                    .collect();
                (bits.iter().filter(|b| **b).count(), inst.id, inst.class_id, bits)
            })
            .collect();
        for p in 0..64 * 64 {
            let best = cover
                .iter()
                .filter(|c| c.3[p])
                .min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            let (id, class) = best.map_or((0, 0), |c| (c.1, c.2));
            if maps.instance_map[p] != id || maps.class_map[p] != class {
                mismatched += 1;
            }
        }
        let roles = resolve_roles(&scene, &vocab);
        let (bg, fg) = split_bg_fg(&maps, &roles);
        for p in 0..64 * 64 {
            let (b, f) = (bg.instance_map[p], fg.instance_map[p]);
            let ok = if maps.instance_map[p] == 0 {
                b == 0 && f == 0 && bg.class_map[p] == 0 && fg.class_map[p] == 0
            } else {
                (b == 0) != (f == 0)
                    && b.max(f) == maps.instance_map[p]
                    && bg.class_map[p].max(fg.class_map[p]) == maps.class_map[p]
            };
            if !ok {
                partition_errors += 1;
            }
        }
    }
    vec![
        Check::new("100 scenes vs smallest-covering oracle", mismatched as f64, 0.0)
            .with_detail(format!("{mismatched} mismatched pixels")),
        Check::new("bg/fg split partitions labeled pixels", partition_errors as f64, 0.0),
    ]
}
