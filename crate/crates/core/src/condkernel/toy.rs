//! Minimal render path: learned constant → S-block → ReLU → S-block → 1x1 RGB.
//!
//! The constant is a `C x 4 x 4` grid upsampled by nearest neighbour, so no
//! parameter depends on the output resolution. (A spatially uniform constant
//! would be erased by the parameter-free normalization.)
//!
//! The conditioning map is always 128 channels: 64 of class embedding and 64
//! of style (attribute bag, contextualized class embedding, or zeros).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{attention_backward, attention_forward, AttentionCache, AttentionGrads, AttentionWeights};
use super::checkpoint::Checkpoint;
use super::conv::{conv2d, conv2d_backward, Conv2d, Conv2dGrads};
use super::embed::{
    apply_contextualized, apply_contextualized_backward, attribute_embed, attribute_embed_backward,
    class_embed, class_embed_backward, EMBED_DIM,
};
use super::norm::{
    s_block_backward, s_block_forward, SBlockCache, SBlockWeightGrads, SBlockWeights,
    DEFAULT_MID_CHANNELS,
};
use super::tokens::{TokenEmbeddings, DEFAULT_D_LM};
use super::KernelError;
use crate::raster::{AttributePlane, LabelMaps};
use crate::tensor::Tensor;

pub const COND_CHANNELS: usize = 2 * EMBED_DIM;
pub const CONST_SIZE: usize = 4;

/// Source cell of output row/column `i` out of `n`.
fn cell(i: usize, n: usize) -> usize {
    i * CONST_SIZE / n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    /// Vocabulary size `c`; tables have `c + 1` rows.
    pub classes: usize,
    pub attributes: usize,
    pub channels: usize,
    pub mid: usize,
    pub heads: usize,
    pub d_lm: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            classes: crate::vocab::REFERENCE_CLASS_COUNT,
            attributes: crate::vocab::REFERENCE_ATTRIBUTE_COUNT,
            channels: 8,
            mid: DEFAULT_MID_CHANNELS,
            heads: 6,
            d_lm: DEFAULT_D_LM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWeights {
    pub config: ToyConfig,
    /// `[c+1, 64]`
    pub e_cls: Tensor,
    /// `[N_attr, 64]`
    pub e_attr: Tensor,
    /// `[C, 4, 4]`, nearest-upsampled to the image size.
    pub const_input: Tensor,
    pub block1: SBlockWeights,
    pub block2: SBlockWeights,
    /// 1x1, `C → 3`.
    pub proj: Conv2d,
    pub attention: AttentionWeights,
}

impl ToyWeights {
    pub fn init(config: ToyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = config.classes + 1;
        let e_cls = Tensor::uniform(&[rows, EMBED_DIM], -0.02, 0.02, &mut rng);
        let e_attr = Tensor::uniform(&[config.attributes, EMBED_DIM], -0.02, 0.02, &mut rng);
        let const_input = Tensor::normal(&[config.channels, CONST_SIZE, CONST_SIZE], 1.0, &mut rng);
        let block1 = SBlockWeights::init(COND_CHANNELS, config.mid, config.channels, &mut rng);
        let block2 = SBlockWeights::init(COND_CHANNELS, config.mid, config.channels, &mut rng);
        let proj = Conv2d::normal(config.channels, 3, 1, 0.02, &mut rng);
        let attention = AttentionWeights::init(rows, config.heads, config.d_lm, &mut rng);
        Self {
            config,
            e_cls,
            e_attr,
            const_input,
            block1,
            block2,
            proj,
            attention,
        }
    }

    pub fn rows(&self) -> usize {
        self.e_cls.dim(0)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        c.insert("e_cls", self.e_cls.clone());
        c.insert("e_attr", self.e_attr.clone());
        c.insert("const_input", self.const_input.clone());
        for (prefix, b) in [("block1", &self.block1), ("block2", &self.block2)] {
            for (name, t) in b.tensors() {
                c.insert(format!("{prefix}.{name}"), t.clone());
            }
        }
        c.insert("proj.weight", self.proj.weight.clone());
        c.insert("proj.bias", self.proj.bias.clone());
        for (name, t) in self.attention.tensors() {
            c.insert(format!("attention.{name}"), t.clone());
        }
        c
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, KernelError> {
        let e_cls = ck.get("e_cls")?.clone();
        let e_attr = ck.get("e_attr")?.clone();
        let const_input = ck.get("const_input")?.clone();
        let mid = ck.get("block1.conv1.weight")?.dim(0);
        let channels = const_input.shape().first().copied().unwrap_or(0);
        let queries = ck.get("attention.queries")?;
        let config = ToyConfig {
            classes: e_cls.dim(0).saturating_sub(1),
            attributes: e_attr.dim(0),
            channels,
            mid,
            heads: queries.shape().get(1).copied().unwrap_or(0),
            d_lm: ck.get("attention.w_k")?.shape().get(1).copied().unwrap_or(0),
        };
        let mut w = Self {
            config,
            e_cls,
            e_attr,
            const_input,
            block1: SBlockWeights::zeros(COND_CHANNELS, mid, channels),
            block2: SBlockWeights::zeros(COND_CHANNELS, mid, channels),
            proj: Conv2d::zeros(channels, 3, 1),
            attention: AttentionWeights::init(config.classes + 1, config.heads, config.d_lm, &mut ChaCha8Rng::seed_from_u64(0)),
        };
        for (prefix, b) in [("block1", &mut w.block1), ("block2", &mut w.block2)] {
            for (name, t) in b.tensors_mut() {
                *t = ck.get(&format!("{prefix}.{name}"))?.clone();
            }
        }
        w.proj.weight = ck.get("proj.weight")?.clone();
        w.proj.bias = ck.get("proj.bias")?.clone();
        for (name, t) in w.attention.tensors_mut() {
            *t = ck.get(&format!("attention.{name}"))?.clone();
        }
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let c = &self.config;
        self.e_cls.expect_shape(&[c.classes + 1, EMBED_DIM])?;
        self.e_attr.expect_shape(&[c.attributes, EMBED_DIM])?;
        self.const_input.expect_shape(&[c.channels, CONST_SIZE, CONST_SIZE])?;
        for b in [&self.block1, &self.block2] {
            b.validate()?;
            if b.cond_channels() != COND_CHANNELS || b.channels() != c.channels {
                return Err(KernelError::Invalid("S-block widths disagree with the config".into()));
            }
        }
        self.proj.validate()?;
        if self.proj.kernel() != 1 || self.proj.in_channels() != c.channels || self.proj.out_channels() != 3 {
            return Err(KernelError::Invalid("projection must be 1x1, C → 3".into()));
        }
        self.attention.validate()?;
        if self.attention.rows() != c.classes + 1 {
            return Err(KernelError::Invalid("attention query rows disagree with the class table".into()));
        }
        Ok(())
    }

    /// Whether every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.to_checkpoint().tensors.values().all(Tensor::is_finite)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum StyleInput<'a> {
    None,
    Attributes(&'a AttributePlane),
    Tokens(&'a TokenEmbeddings),
    /// A precomputed contextualized class table `[c+1, 64]`.
    Context(&'a Tensor),
}

#[derive(Debug, Clone)]
enum StyleCache {
    None,
    Attributes(AttributePlane),
    Tokens(AttentionCache),
    Context,
}

#[derive(Debug, Clone)]
pub struct ToyCache {
    maps: LabelMaps,
    style: StyleCache,
    rows: usize,
    c1: SBlockCache,
    y1: Tensor,
    c2: SBlockCache,
    y2: Tensor,
    /// Contextualized table used, if any.
    pub ctx: Option<Tensor>,
    /// Attention maps, if tokens were given.
    pub attention_weights: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct ToyGrads {
    pub e_cls: Tensor,
    pub e_attr: Option<Tensor>,
    pub const_input: Tensor,
    pub block1: SBlockWeightGrads,
    pub block2: SBlockWeightGrads,
    pub proj: Conv2dGrads,
    pub attention: Option<AttentionGrads>,
    pub ctx: Option<Tensor>,
}

pub fn toy_forward(
    maps: &LabelMaps,
    style: StyleInput<'_>,
    w: &ToyWeights,
) -> Result<(Tensor, ToyCache), KernelError> {
    let (h, wd, c) = (maps.height, maps.width, w.config.channels);
    let ce = class_embed(maps, &w.e_cls)?;
    let (se, style_cache, ctx, att) = match style {
        StyleInput::None => (Tensor::zeros(&[h, wd, EMBED_DIM]), StyleCache::None, None, None),
        StyleInput::Attributes(plane) => {
            if (plane.width, plane.height) != (wd, h) {
                return Err(KernelError::Invalid("attribute plane size differs from the label map".into()));
            }
            (attribute_embed(plane, &w.e_attr)?, StyleCache::Attributes(plane.clone()), None, None)
        }
        StyleInput::Tokens(tok) => {
            let (out, cache) = attention_forward(tok, &w.attention)?;
            let se = apply_contextualized(maps, &out.ctx)?;
            (se, StyleCache::Tokens(cache), Some(out.ctx), Some(out.weights))
        }
        StyleInput::Context(ctx) => {
            ctx.expect_shape(&[w.rows(), EMBED_DIM])?;
            (apply_contextualized(maps, ctx)?, StyleCache::Context, Some(ctx.clone()), None)
        }
    };
    let cond = Tensor::concat_last(&ce, &se)?;
    let x0 = Tensor::from_fn(&[1, c, h, wd], |i| {
        let (ch, y, x) = (i / (h * wd), (i / wd) % h, i % wd);
        w.const_input.data()[(ch * CONST_SIZE + cell(y, h)) * CONST_SIZE + cell(x, wd)]
    });
    let (y1, c1) = s_block_forward(&x0, &cond, &w.block1)?;
    let a1 = Tensor::from_fn(y1.shape(), |i| y1.data()[i].max(0.0));
    let (y2, c2) = s_block_forward(&a1, &cond, &w.block2)?;
    let y2 = y2.reshape(&[c, h, wd])?;
    let rgb = conv2d(&y2, &w.proj)?;
    Ok((
        rgb,
        ToyCache {
            maps: maps.clone(),
            style: style_cache,
            rows: w.rows(),
            c1,
            y1,
            c2,
            y2,
            ctx,
            attention_weights: att,
        },
    ))
}

pub fn toy_backward(cache: &ToyCache, w: &ToyWeights, drgb: &Tensor) -> ToyGrads {
    let (h, wd, c) = (cache.maps.height, cache.maps.width, w.config.channels);
    let (dy2, proj) = conv2d_backward(&cache.y2, &w.proj, drgb);
    let dy2 = dy2.reshape(&[1, c, h, wd]).expect("shape");
    let g2 = s_block_backward(&cache.c2, &w.block2, &dy2);
    let mut dy1 = g2.x;
    for (d, y) in dy1.data_mut().iter_mut().zip(cache.y1.data()) {
        if *y <= 0.0 {
            *d = 0.0;
        }
    }
    let g1 = s_block_backward(&cache.c1, &w.block1, &dy1);
    let hw = h * wd;
    let mut const_input = Tensor::zeros(&[c, CONST_SIZE, CONST_SIZE]);
    for (i, g) in g1.x.data().iter().enumerate() {
        let (ch, y, x) = (i / hw, (i / wd) % h, i % wd);
        const_input.data_mut()[(ch * CONST_SIZE + cell(y, h)) * CONST_SIZE + cell(x, wd)] += g;
    }
    let mut dcond = g1.cond;
    dcond.add_assign(&g2.cond);
    let (dclass, dstyle) = dcond.split_last(EMBED_DIM);
    let e_cls = class_embed_backward(&cache.maps, cache.rows, &dclass);
    let (mut e_attr, mut attention, mut ctx) = (None, None, None);
    match &cache.style {
        StyleCache::None => {}
        StyleCache::Attributes(plane) => {
            e_attr = Some(attribute_embed_backward(plane, w.e_attr.dim(0), &dstyle));
        }
        StyleCache::Tokens(ac) => {
            let dctx = apply_contextualized_backward(&cache.maps, cache.rows, &dstyle);
            attention = Some(attention_backward(ac, &w.attention, &dctx));
            ctx = Some(dctx);
        }
        StyleCache::Context => {
            ctx = Some(apply_contextualized_backward(&cache.maps, cache.rows, &dstyle));
        }
    }
    ToyGrads {
        e_cls,
        e_attr,
        const_input,
        block1: g1.weights,
        block2: g2.weights,
        proj,
        attention,
        ctx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyConfig {
        ToyConfig {
            classes: 4,
            attributes: 3,
            channels: 3,
            mid: 4,
            heads: 6,
            d_lm: 8,
        }
    }

    fn stripes(w: usize, h: usize) -> LabelMaps {
        let mut m = LabelMaps::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                m.class_map[y * w + x] = ((x * 4 / w) as u16 + (y * 2 / h) as u16) % 5;
            }
        }
        m
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let maps = stripes(8, 6);
        let (a, _) = toy_forward(&maps, StyleInput::None, &ToyWeights::init(small(), 3)).unwrap();
        let (b, _) = toy_forward(&maps, StyleInput::None, &ToyWeights::init(small(), 3)).unwrap();
        assert_eq!(a.shape(), &[3, 6, 8]);
        assert!(a.is_finite());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn same_weights_at_two_resolutions() {
        let w = ToyWeights::init(small(), 4);
        let tok = super::super::tokens::pseudo_encode("a tree", 8);
        for res in [16, 32] {
            let (out, cache) = toy_forward(&stripes(res, res), StyleInput::Tokens(&tok), &w).unwrap();
            assert_eq!(out.shape(), &[3, res, res]);
            assert_eq!(cache.ctx.unwrap().shape(), &[5, EMBED_DIM]);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let w = ToyWeights::init(small(), 5);
        let back = ToyWeights::from_checkpoint(&Checkpoint::from_bytes(&w.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn zero_upstream_gradient() {
        let w = ToyWeights::init(small(), 6);
        let maps = stripes(6, 6);
        let (out, cache) = toy_forward(&maps, StyleInput::None, &w).unwrap();
        let g = toy_backward(&cache, &w, &Tensor::zeros(out.shape()));
        assert_eq!(g.e_cls.max_abs(), 0.0);
        assert_eq!(g.const_input.max_abs(), 0.0);
    }
}
