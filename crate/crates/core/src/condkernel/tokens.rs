//! Frozen-encoder token embeddings: file formats and a hash pseudo-encoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::KernelError;
use crate::tensor::Tensor;

pub const TOKEN_MAGIC: &[u8; 4] = b"TOKE";
pub const DEFAULT_D_LM: usize = 768;
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Which encoder layer produced the embeddings. Informational only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTag {
    Last,
    SecondToLast,
    Unspecified,
}

impl LayerTag {
    pub fn to_byte(self) -> u8 {
        match self {
            LayerTag::Last => 0,
            LayerTag::SecondToLast => 1,
            LayerTag::Unspecified => 255,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, KernelError> {
        match b {
            0 => Ok(LayerTag::Last),
            1 => Ok(LayerTag::SecondToLast),
            255 => Ok(LayerTag::Unspecified),
            _ => Err(KernelError::Format(format!("unknown layer tag {b}"))),
        }
    }
}

/// `n x d_lm` token matrix, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    data: Tensor,
    pub layer: LayerTag,
}

#[derive(Serialize, Deserialize)]
struct TokenJson {
    layer: LayerTag,
    tokens: Vec<Vec<f64>>,
}

impl TokenEmbeddings {
    pub fn new(data: Tensor, layer: LayerTag) -> Result<Self, KernelError> {
        if data.shape().len() != 2 || data.dim(0) == 0 || data.dim(1) == 0 {
            return Err(KernelError::Invalid(format!(
                "token matrix must be non-empty n x d_lm, got {:?}",
                data.shape()
            )));
        }
        if !data.is_finite() {
            return Err(KernelError::NonFinite("token embeddings"));
        }
        Ok(Self { data, layer })
    }

    /// Skips validation; for exercising downstream error paths.
    pub fn from_tensor_unchecked(data: Tensor, layer: LayerTag) -> Self {
        Self { data, layer }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.dim(0)
    }

    pub fn d_lm(&self) -> usize {
        self.data.dim(1)
    }

    fn check_delimited(self) -> Result<Self, KernelError> {
        if self.n() < 2 {
            return Err(KernelError::Format(
                "encoded sentence needs at least the two delimiter tokens".into(),
            ));
        }
        Ok(self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.data.len() * 8);
        out.extend_from_slice(TOKEN_MAGIC);
        out.extend_from_slice(&(self.n() as u32).to_le_bytes());
        out.extend_from_slice(&(self.d_lm() as u32).to_le_bytes());
        out.push(self.layer.to_byte());
        for v in self.data.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KernelError> {
        if bytes.len() < 13 || &bytes[..4] != TOKEN_MAGIC {
            return Err(KernelError::Format("missing TOKE header".into()));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let layer = LayerTag::from_byte(bytes[12])?;
        let body = &bytes[13..];
        if Some(body.len()) != n.checked_mul(d).and_then(|x| x.checked_mul(8)) {
            return Err(KernelError::Format(format!(
                "expected {n} x {d} floats, found {} bytes",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(Tensor::new(vec![n, d], data)?, layer)?.check_delimited()
    }

    pub fn to_json(&self) -> String {
        let doc = TokenJson {
            layer: self.layer,
            tokens: (0..self.n()).map(|i| self.data.row(i).to_vec()).collect(),
        };
        serde_json::to_string(&doc).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, KernelError> {
        let doc: TokenJson =
            serde_json::from_str(text).map_err(|e| KernelError::Format(e.to_string()))?;
        let n = doc.tokens.len();
        let d = doc.tokens.first().map_or(0, Vec::len);
        if doc.tokens.iter().any(|r| r.len() != d) {
            return Err(KernelError::Format("ragged token rows".into()));
        }
        let data = doc.tokens.into_iter().flatten().collect();
        Self::new(Tensor::new(vec![n, d], data)?, doc.layer)?.check_delimited()
    }

    /// Binary if the TOKE magic is present, JSON otherwise.
    pub fn load(bytes: &[u8]) -> Result<Self, KernelError> {
        if bytes.starts_with(TOKEN_MAGIC) {
            Self::from_bytes(bytes)
        } else {
            let text = std::str::from_utf8(bytes).map_err(|e| KernelError::Format(e.to_string()))?;
            Self::from_json(text)
        }
    }
}

/// Row-wise concatenation of several captions, order preserved.
pub fn concat_captions(captions: &[TokenEmbeddings]) -> Result<TokenEmbeddings, KernelError> {
    let first = captions
        .first()
        .ok_or_else(|| KernelError::Invalid("no captions to concatenate".into()))?;
    let d = first.d_lm();
    let mut data = Vec::new();
    let mut n = 0;
    for c in captions {
        if c.d_lm() != d {
            return Err(KernelError::Invalid(format!(
                "caption width {} differs from {d}",
                c.d_lm()
            )));
        }
        if c.layer != first.layer {
            return Err(KernelError::Invalid("captions come from different encoder layers".into()));
        }
        data.extend_from_slice(c.data.data());
        n += c.n();
    }
    TokenEmbeddings::new(Tensor::new(vec![n, d], data)?, first.layer)
}

/// Lowercased word and punctuation tokens wrapped in the delimiters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = vec![CLS.to_string()];
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out.push(SEP.to_string());
    out
}

/// Unit-norm vector determined by the token string alone.
pub fn token_vector(token: &str, d_lm: usize) -> Vec<f64> {
    let seed: [u8; 32] = Sha256::digest(token.as_bytes()).into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut v: Vec<f64> = (0..d_lm).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Deterministic stand-in for a frozen language model.
pub fn pseudo_encode(text: &str, d_lm: usize) -> TokenEmbeddings {
    let toks = tokenize(text);
    let data: Vec<f64> = toks.iter().flat_map(|t| token_vector(t, d_lm)).collect();
    TokenEmbeddings::new(Tensor::new(vec![toks.len(), d_lm], data).expect("shape"), LayerTag::Unspecified)
        .expect("finite")
}
