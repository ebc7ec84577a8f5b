//! Pixel-wise embedding lookups.

use super::KernelError;
use crate::raster::{AttributePlane, LabelMaps};
use crate::tensor::{ShapeError, Tensor};

pub const EMBED_DIM: usize = 64;

fn table_dims(table: &Tensor) -> Result<(usize, usize), KernelError> {
    match table.shape() {
        [rows, d] => Ok((*rows, *d)),
        s => Err(ShapeError::Invalid(format!("embedding table must be 2-D, got {s:?}")).into()),
    }
}

/// `out[p] = table[class_map[p]]`, shaped `[H, W, D]`.
pub fn class_embed(maps: &LabelMaps, table: &Tensor) -> Result<Tensor, KernelError> {
    let (rows, d) = table_dims(table)?;
    let mut out = Vec::with_capacity(maps.class_map.len() * d);
    for &c in &maps.class_map {
        let c = c as usize;
        if c >= rows {
            return Err(KernelError::ClassOutOfRange { id: c as u32, rows });
        }
        out.extend_from_slice(table.row(c));
    }
    Ok(Tensor::new(vec![maps.height, maps.width, d], out)?)
}

/// Scatter-add of `dout` (`[H, W, D]`) back into a table of `rows` rows.
pub fn class_embed_backward(maps: &LabelMaps, rows: usize, dout: &Tensor) -> Tensor {
    let d = dout.dim(2);
    let mut g = Tensor::zeros(&[rows, d]);
    for (p, &c) in maps.class_map.iter().enumerate() {
        let src = &dout.data()[p * d..(p + 1) * d];
        for (a, b) in g.row_mut(c as usize).iter_mut().zip(src) {
            *a += b;
        }
    }
    g
}

/// Contextualized class embeddings broadcast by class id. Same gather as
/// [`class_embed`]; the table comes from attention instead of a parameter.
pub fn apply_contextualized(maps: &LabelMaps, ctx: &Tensor) -> Result<Tensor, KernelError> {
    class_embed(maps, ctx)
}

pub fn apply_contextualized_backward(maps: &LabelMaps, rows: usize, dout: &Tensor) -> Tensor {
    class_embed_backward(maps, rows, dout)
}

/// Bag of embeddings: `out[p] = Σ_{a ∈ attrs(p)} table[a]`.
pub fn attribute_embed(plane: &AttributePlane, table: &Tensor) -> Result<Tensor, KernelError> {
    let (rows, d) = table_dims(table)?;
    let n = plane.width * plane.height;
    let mut out = vec![0.0; n * d];
    for p in 0..n {
        let dst = &mut out[p * d..(p + 1) * d];
        for &a in plane.at_index(p) {
            let a = a as usize;
            if a >= rows {
                return Err(KernelError::AttributeOutOfRange { id: a as u32, rows });
            }
            for (o, v) in dst.iter_mut().zip(table.row(a)) {
                *o += v;
            }
        }
    }
    Ok(Tensor::new(vec![plane.height, plane.width, d], out)?)
}

pub fn attribute_embed_backward(plane: &AttributePlane, rows: usize, dout: &Tensor) -> Tensor {
    let d = dout.dim(2);
    let mut g = Tensor::zeros(&[rows, d]);
    for p in 0..plane.width * plane.height {
        let src = &dout.data()[p * d..(p + 1) * d];
        for &a in plane.at_index(p) {
            for (o, v) in g.row_mut(a as usize).iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    g
}
