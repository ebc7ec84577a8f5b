//! COCO-style uncompressed run-length encoding.
//!
//! Pixels are visited in column-major order (`index = x * height + y`) and
//! `counts` alternates runs of 0s and 1s, starting with a (possibly empty)
//! run of 0s. The counts must sum to `height * width`.

use serde::{Deserialize, Serialize};

use super::RecordError;
use crate::mask::Bitmap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

pub fn decode_rle(rle: &Rle) -> Result<Bitmap, RecordError> {
    let [h, w] = rle.size;
    let total = h * w;
    let sum: u64 = rle.counts.iter().sum();
    if sum != total as u64 {
        return Err(RecordError::RleLength {
            expected: total,
            found: sum as usize,
        });
    }
    let mut out = Bitmap::new(w, h);
    let mut pos = 0usize;
    for (i, run) in rle.counts.iter().enumerate() {
        let run = *run as usize;
        if i % 2 == 1 {
            for k in pos..pos + run {
                out.set(k / h, k % h, true);
            }
        }
        pos += run;
    }
    Ok(out)
}

pub fn encode_rle(mask: &Bitmap) -> Rle {
    let (w, h) = (mask.width(), mask.height());
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [h, w],
        counts,
    }
}
