//! Scene to RGB preview through the toy generator.

use thiserror::Error;

use crate::condkernel::{toy_forward, KernelError, StyleInput, TokenEmbeddings, ToyCache, ToyWeights};
use crate::raster::{attribute_plane, encode_rgb_png, output_size, rasterize_at, LabelMaps, RasterError};
use crate::scene::SceneGraph;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum PreviewError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy)]
pub enum PreviewStyle<'a> {
    /// Class embeddings only.
    Plain,
    /// The instances' own attribute sets.
    Attributes,
    /// A caption, through attention.
    Tokens(&'a TokenEmbeddings),
    /// A contextualized class table `[c+1, 64]`, e.g. an interpolation frame.
    Context(&'a Tensor),
}

/// Rasterize at `res` (longer side) and run the generator.
pub fn preview_rgb(
    scene: &SceneGraph,
    weights: &ToyWeights,
    style: PreviewStyle<'_>,
    res: Option<u32>,
) -> Result<(LabelMaps, Tensor, ToyCache), PreviewError> {
    let (w, h) = output_size(scene, res);
    let maps = rasterize_at(scene, w, h);
    let (rgb, cache) = match style {
        PreviewStyle::Plain => toy_forward(&maps, StyleInput::None, weights)?,
        PreviewStyle::Attributes => {
            let plane = attribute_plane(scene, &maps);
            toy_forward(&maps, StyleInput::Attributes(&plane), weights)?
        }
        PreviewStyle::Tokens(tok) => toy_forward(&maps, StyleInput::Tokens(tok), weights)?,
        PreviewStyle::Context(ctx) => toy_forward(&maps, StyleInput::Context(ctx), weights)?,
    };
    Ok((maps, rgb, cache))
}

/// 8-bit PNG of a `[3, H, W]` image, stretched to its own min/max.
pub fn preview_png(rgb: &Tensor) -> Result<Vec<u8>, PreviewError> {
    let &[3, h, w] = rgb.shape() else {
        return Err(RasterError::BadDimensions(0, 0).into());
    };
    let lo = rgb.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rgb.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(encode_rgb_png(rgb.data(), w, h, lo, hi)?)
}
