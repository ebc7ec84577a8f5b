//! Sentence-semantic attention: one learned query per class and head over
//! token keys and values. No image-resolution argument exists anywhere on
//! this path.

use rand::Rng;

use super::embed::EMBED_DIM;
use super::tokens::TokenEmbeddings;
use super::KernelError;
use crate::tensor::{ShapeError, Tensor};

pub const HEAD_SIZE: usize = 64;
pub const ALLOWED_HEADS: [usize; 2] = [6, 12];

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// `[c+1, H, h]`
    pub queries: Tensor,
    /// `[H, d_lm, h]`
    pub w_k: Tensor,
    /// `[H, d_lm, h]`
    pub w_v: Tensor,
    /// `[H*h, 64]`
    pub w_o: Tensor,
    /// `[64]`
    pub b_o: Tensor,
}

impl AttentionWeights {
    /// Uniform(-0.02, 0.02) for queries and projections, zero output bias.
    pub fn init<R: Rng + ?Sized>(rows: usize, heads: usize, d_lm: usize, rng: &mut R) -> Self {
        let u = |s: &[usize], rng: &mut R| Tensor::uniform(s, -0.02, 0.02, rng);
        Self {
            queries: u(&[rows, heads, HEAD_SIZE], rng),
            w_k: u(&[heads, d_lm, HEAD_SIZE], rng),
            w_v: u(&[heads, d_lm, HEAD_SIZE], rng),
            w_o: u(&[heads * HEAD_SIZE, EMBED_DIM], rng),
            b_o: Tensor::zeros(&[EMBED_DIM]),
        }
    }

    /// Number of query rows: classes plus "no class".
    pub fn rows(&self) -> usize {
        self.queries.dim(0)
    }

    pub fn heads(&self) -> usize {
        self.queries.dim(1)
    }

    pub fn d_lm(&self) -> usize {
        self.w_k.dim(1)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let q = self.queries.shape();
        if q.len() != 3 || q[2] != HEAD_SIZE {
            return Err(KernelError::Invalid(format!(
                "queries must be [c+1, H, {HEAD_SIZE}], got {q:?}"
            )));
        }
        let heads = q[1];
        if !ALLOWED_HEADS.contains(&heads) {
            return Err(KernelError::Invalid(format!("{heads} heads; expected 6 or 12")));
        }
        let kd = self.w_k.shape();
        if kd.len() != 3 || kd[0] != heads || kd[2] != HEAD_SIZE {
            return Err(ShapeError::Mismatch {
                expected: vec![heads, 0, HEAD_SIZE],
                found: kd.to_vec(),
            }
            .into());
        }
        self.w_v.expect_shape(kd)?;
        self.w_o.expect_shape(&[heads * HEAD_SIZE, EMBED_DIM])?;
        self.b_o.expect_shape(&[EMBED_DIM])?;
        Ok(())
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 5] {
        [
            ("queries", &self.queries),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_o", &self.w_o),
            ("b_o", &self.b_o),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 5] {
        [
            ("queries", &mut self.queries),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_o", &mut self.w_o),
            ("b_o", &mut self.b_o),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Contextualized class embeddings, `[c+1, 64]`.
    pub ctx: Tensor,
    /// Attention maps, `[c+1, H, n]`; each `[q, head, :]` row sums to 1.
    pub weights: Tensor,
    /// Multiply-adds and exponentials performed.
    pub ops: u64,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    tok: Tensor,
    k: Tensor,
    v: Tensor,
    a: Tensor,
    o: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub queries: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
    pub tokens: Tensor,
}

impl AttentionGrads {
    pub fn tensors(&self) -> [(&'static str, &Tensor); 5] {
        [
            ("queries", &self.queries),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_o", &self.w_o),
            ("b_o", &self.b_o),
        ]
    }
}

/// `[H, n, h]` projection of the `[n, d]` tokens by `[H, d, h]` weights.
fn project(tok: &Tensor, w: &Tensor, ops: &mut u64) -> Tensor {
    let (n, d) = (tok.dim(0), tok.dim(1));
    let heads = w.dim(0);
    let h = HEAD_SIZE;
    let mut out = vec![0.0; heads * n * h];
    for hd in 0..heads {
        for j in 0..n {
            let dst = &mut out[(hd * n + j) * h..(hd * n + j + 1) * h];
            for dd in 0..d {
                let t = tok.data()[j * d + dd];
                let wr = &w.data()[(hd * d + dd) * h..(hd * d + dd + 1) * h];
                for (o, wv) in dst.iter_mut().zip(wr) {
                    *o += t * wv;
                }
            }
        }
    }
    *ops += (heads * n * d * h) as u64;
    Tensor::new(vec![heads, n, h], out).expect("shape")
}

pub fn attention_forward(
    tok: &TokenEmbeddings,
    w: &AttentionWeights,
) -> Result<(AttentionOutput, AttentionCache), KernelError> {
    w.validate()?;
    let t = tok.tensor();
    let (n, d) = (t.dim(0), t.dim(1));
    if n == 0 {
        return Err(KernelError::Invalid("empty token sequence".into()));
    }
    if d != w.d_lm() {
        return Err(ShapeError::Mismatch {
            expected: vec![n, w.d_lm()],
            found: t.shape().to_vec(),
        }
        .into());
    }
    if !t.is_finite() {
        return Err(KernelError::NonFinite("token embeddings"));
    }
    for (name, x) in w.tensors() {
        if !x.is_finite() {
            return Err(KernelError::NonFinite(name));
        }
    }
    let (rows, heads, h) = (w.rows(), w.heads(), HEAD_SIZE);
    let scale = 1.0 / (h as f64).sqrt();
    let mut ops = 0u64;
    let k = project(t, &w.w_k, &mut ops);
    let v = project(t, &w.w_v, &mut ops);
    let mut a = vec![0.0; rows * heads * n];
    let mut o = vec![0.0; rows * heads * h];
    for q in 0..rows {
        for hd in 0..heads {
            let qv = &w.queries.data()[(q * heads + hd) * h..(q * heads + hd + 1) * h];
            let row = &mut a[(q * heads + hd) * n..(q * heads + hd + 1) * n];
            for (j, s) in row.iter_mut().enumerate() {
                let kr = &k.data()[(hd * n + j) * h..(hd * n + j + 1) * h];
                *s = qv.iter().zip(kr).map(|(x, y)| x * y).sum::<f64>() * scale;
            }
            ops += (n * h) as u64;
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in row.iter_mut() {
                *s = (*s - mx).exp();
                z += *s;
            }
            for s in row.iter_mut() {
                *s /= z;
            }
            ops += n as u64;
            let dst = &mut o[(q * heads + hd) * h..(q * heads + hd + 1) * h];
            for (j, aj) in row.iter().enumerate() {
                let vr = &v.data()[(hd * n + j) * h..(hd * n + j + 1) * h];
                for (x, y) in dst.iter_mut().zip(vr) {
                    *x += aj * y;
                }
            }
            ops += (n * h) as u64;
        }
    }
    let hh = heads * h;
    let mut ctx = vec![0.0; rows * EMBED_DIM];
    for q in 0..rows {
        let dst = &mut ctx[q * EMBED_DIM..(q + 1) * EMBED_DIM];
        dst.copy_from_slice(w.b_o.data());
        for i in 0..hh {
            let oi = o[q * hh + i];
            for (x, y) in dst.iter_mut().zip(w.w_o.row(i)) {
                *x += oi * y;
            }
        }
    }
    ops += (rows * hh * EMBED_DIM) as u64;
    let a = Tensor::new(vec![rows, heads, n], a)?;
    let o = Tensor::new(vec![rows, hh], o)?;
    Ok((
        AttentionOutput {
            ctx: Tensor::new(vec![rows, EMBED_DIM], ctx)?,
            weights: a.clone(),
            ops,
        },
        AttentionCache {
            tok: t.clone(),
            k,
            v,
            a,
            o,
        },
    ))
}

pub fn attention_backward(cache: &AttentionCache, w: &AttentionWeights, dctx: &Tensor) -> AttentionGrads {
    let (rows, heads, h) = (w.rows(), w.heads(), HEAD_SIZE);
    let (n, d) = (cache.tok.dim(0), cache.tok.dim(1));
    let hh = heads * h;
    let scale = 1.0 / (h as f64).sqrt();

    let mut db_o = Tensor::zeros(&[EMBED_DIM]);
    let mut dw_o = Tensor::zeros(&[hh, EMBED_DIM]);
    let mut d_o = Tensor::zeros(&[rows, hh]);
    for q in 0..rows {
        let g = dctx.row(q);
        for (b, x) in db_o.data_mut().iter_mut().zip(g) {
            *b += x;
        }
        for i in 0..hh {
            let oi = cache.o.data()[q * hh + i];
            let wr = w.w_o.row(i);
            let mut acc = 0.0;
            for (o, (gv, wv)) in dw_o.row_mut(i).iter_mut().zip(g.iter().zip(wr)) {
                *o += oi * gv;
                acc += wv * gv;
            }
            d_o.data_mut()[q * hh + i] = acc;
        }
    }

    let mut dq = Tensor::zeros(w.queries.shape());
    let mut dk = Tensor::zeros(cache.k.shape());
    let mut dv = Tensor::zeros(cache.v.shape());
    for q in 0..rows {
        for hd in 0..heads {
            let base = q * heads + hd;
            let go = &d_o.data()[base * h..(base + 1) * h];
            let arow = &cache.a.data()[base * n..(base + 1) * n];
            let mut da = vec![0.0; n];
            for j in 0..n {
                let vr = &cache.v.data()[(hd * n + j) * h..(hd * n + j + 1) * h];
                da[j] = go.iter().zip(vr).map(|(x, y)| x * y).sum();
                for (dvv, g) in dv.data_mut()[(hd * n + j) * h..(hd * n + j + 1) * h].iter_mut().zip(go) {
                    *dvv += arow[j] * g;
                }
            }
            let dot: f64 = arow.iter().zip(&da).map(|(x, y)| x * y).sum();
            let qv = &w.queries.data()[base * h..(base + 1) * h];
            for j in 0..n {
                let ds = arow[j] * (da[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kr = &cache.k.data()[(hd * n + j) * h..(hd * n + j + 1) * h];
                for (x, y) in dq.data_mut()[base * h..(base + 1) * h].iter_mut().zip(kr) {
                    *x += ds * y;
                }
                for (x, y) in dk.data_mut()[(hd * n + j) * h..(hd * n + j + 1) * h].iter_mut().zip(qv) {
                    *x += ds * y;
                }
            }
        }
    }

    let mut dw_k = Tensor::zeros(w.w_k.shape());
    let mut dw_v = Tensor::zeros(w.w_v.shape());
    let mut dtok = Tensor::zeros(&[n, d]);
    for hd in 0..heads {
        for j in 0..n {
            let gk = &dk.data()[(hd * n + j) * h..(hd * n + j + 1) * h];
            let gv = &dv.data()[(hd * n + j) * h..(hd * n + j + 1) * h];
            for dd in 0..d {
                let t = cache.tok.data()[j * d + dd];
                let off = (hd * d + dd) * h;
                let wk = &w.w_k.data()[off..off + h];
                let wv = &w.w_v.data()[off..off + h];
                let mut acc = 0.0;
                for e in 0..h {
                    acc += gk[e] * wk[e] + gv[e] * wv[e];
                }
                dtok.data_mut()[j * d + dd] += acc;
                for (x, y) in dw_k.data_mut()[off..off + h].iter_mut().zip(gk) {
                    *x += t * y;
                }
                for (x, y) in dw_v.data_mut()[off..off + h].iter_mut().zip(gv) {
                    *x += t * y;
                }
            }
        }
    }
    AttentionGrads {
        queries: dq,
        w_k: dw_k,
        w_v: dw_v,
        w_o: dw_o,
        b_o: db_o,
        tokens: dtok,
    }
}
