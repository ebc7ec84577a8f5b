//! Label-map encoders: indexed/16-bit PNG, RGB PNG and the `SPMK` raw dump.
//!
//! Raw dump layout (little-endian): magic `SPMK`, `u16` width, `u16` height,
//! then `width * height` `u16` class ids in row-major order.

use std::io::Cursor;

use super::{LabelMaps, RasterError};

pub const RAW_MAGIC: &[u8; 4] = b"SPMK";

/// 256-entry RGB palette; index 0 ("no class") is black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette(pub Vec<[u8; 3]>);

impl Default for Palette {
    fn default() -> Self {
        let mut colors = vec![[0u8; 3]; 256];
        for (i, c) in colors.iter_mut().enumerate().skip(1) {
            let h = (i as u32).wrapping_mul(2_654_435_761);
            *c = [
                64 + (h >> 24) as u8 % 192,
                64 + (h >> 16) as u8 % 192,
                64 + (h >> 8) as u8 % 192,
            ];
        }
        Palette(colors)
    }
}

fn png_err(e: impl std::fmt::Display) -> RasterError {
    RasterError::Png(e.to_string())
}

fn dims(width: usize, height: usize) -> Result<(u32, u32), RasterError> {
    match (u32::try_from(width), u32::try_from(height)) {
        (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok((w, h)),
        _ => Err(RasterError::BadDimensions(width, height)),
    }
}

/// Encode a label plane. Values up to 255 produce an 8-bit indexed PNG whose
/// palette index is the label; larger values produce 16-bit grayscale.
pub fn encode_label_png(
    values: &[u32],
    width: usize,
    height: usize,
    palette: &Palette,
) -> Result<Vec<u8>, RasterError> {
    let (w, h) = dims(width, height)?;
    if values.len() != width * height {
        return Err(RasterError::BadDimensions(width, height));
    }
    let max = values.iter().copied().max().unwrap_or(0);
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        if max <= 255 {
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_palette(palette.0.iter().flatten().copied().collect::<Vec<u8>>());
            let data: Vec<u8> = values.iter().map(|v| *v as u8).collect();
            let mut writer = enc.write_header().map_err(png_err)?;
            writer.write_image_data(&data).map_err(png_err)?;
        } else {
            if max > u32::from(u16::MAX) {
                return Err(RasterError::LabelOverflow(max));
            }
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let data: Vec<u8> = values
                .iter()
                .flat_map(|v| (*v as u16).to_be_bytes())
                .collect();
            let mut writer = enc.write_header().map_err(png_err)?;
            writer.write_image_data(&data).map_err(png_err)?;
        }
    }
    Ok(out)
}

/// Decode a PNG written by [`encode_label_png`] back into label values.
pub fn decode_label_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u32>), RasterError> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RasterError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let values = match (info.color_type, info.bit_depth) {
        (png::ColorType::Indexed | png::ColorType::Grayscale, png::BitDepth::Eight) => {
            buf[..w * h].iter().map(|v| u32::from(*v)).collect()
        }
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => buf[..w * h * 2]
            .chunks_exact(2)
            .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect(),
        (c, d) => return Err(RasterError::Png(format!("unsupported layout {c:?}/{d:?}"))),
    };
    Ok((w, h, values))
}

/// Encode a `3 x H x W` channel-first image to 8-bit RGB, mapping `lo..=hi`
/// linearly onto `0..=255`.
pub fn encode_rgb_png(
    chw: &[f64],
    width: usize,
    height: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<u8>, RasterError> {
    let (w, h) = dims(width, height)?;
    let plane = width * height;
    if chw.len() != 3 * plane {
        return Err(RasterError::BadDimensions(width, height));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut data = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            let v = chw[c * plane + p];
            let t = if hi > lo { (v - lo) / span } else { 0.5 };
            data.push((t.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&data).map_err(png_err)?;
    }
    Ok(out)
}

/// `SPMK` raw dump of the class plane.
pub fn encode_raw(maps: &LabelMaps) -> Result<Vec<u8>, RasterError> {
    let w = u16::try_from(maps.width).map_err(|_| RasterError::BadDimensions(maps.width, maps.height))?;
    let h =
        u16::try_from(maps.height).map_err(|_| RasterError::BadDimensions(maps.width, maps.height))?;
    let mut out = Vec::with_capacity(8 + 2 * maps.class_map.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for c in &maps.class_map {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_raw`]: `(width, height, class ids)`.
pub fn decode_raw(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>), RasterError> {
    if bytes.len() < 8 || &bytes[..4] != RAW_MAGIC {
        return Err(RasterError::Raw("missing SPMK header".into()));
    }
    let w = usize::from(u16::from_le_bytes([bytes[4], bytes[5]]));
    let h = usize::from(u16::from_le_bytes([bytes[6], bytes[7]]));
    let body = &bytes[8..];
    if body.len() != 2 * w * h {
        return Err(RasterError::Raw(format!(
            "expected {} bytes of class ids, found {}",
            2 * w * h,
            body.len()
        )));
    }
    let ids = body
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok((w, h, ids))
}

impl LabelMaps {
    pub fn class_values(&self) -> Vec<u32> {
        self.class_map.iter().map(|c| u32::from(*c)).collect()
    }

    pub fn class_png(&self, palette: &Palette) -> Result<Vec<u8>, RasterError> {
        encode_label_png(&self.class_values(), self.width, self.height, palette)
    }

    pub fn instance_png(&self, palette: &Palette) -> Result<Vec<u8>, RasterError> {
        encode_label_png(&self.instance_map, self.width, self.height, palette)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps() -> LabelMaps {
        let mut m = LabelMaps::empty(7, 5);
        for (i, c) in m.class_map.iter_mut().enumerate() {
            *c = (i % 4) as u16 * 3;
        }
        m
    }

    #[test]
    fn indexed_png_round_trip() {
        let m = maps();
        let png = m.class_png(&Palette::default()).unwrap();
        let (w, h, v) = decode_label_png(&png).unwrap();
        assert_eq!((w, h), (7, 5));
        assert_eq!(v, m.class_values());
    }

    #[test]
    fn sixteen_bit_when_labels_exceed_255() {
        let mut m = maps();
        m.class_map[3] = 281;
        let png = m.class_png(&Palette::default()).unwrap();
        let (_, _, v) = decode_label_png(&png).unwrap();
        assert_eq!(v, m.class_values());
    }

    #[test]
    fn empty_map_is_uniform_zero_and_stable() {
        let m = LabelMaps::empty(4, 4);
        let a = m.class_png(&Palette::default()).unwrap();
        let b = m.class_png(&Palette::default()).unwrap();
        assert_eq!(a, b);
        assert!(decode_label_png(&a).unwrap().2.iter().all(|v| *v == 0));
    }

    #[test]
    fn raw_dump_layout() {
        let m = maps();
        let raw = encode_raw(&m).unwrap();
        assert_eq!(&raw[..4], b"SPMK");
        assert_eq!(&raw[4..8], &[7, 0, 5, 0]);
        assert_eq!(raw.len(), 8 + 2 * 35);
        let (w, h, ids) = decode_raw(&raw).unwrap();
        assert_eq!((w, h), (7, 5));
        assert_eq!(ids, m.class_map);
        assert!(decode_raw(&raw[..raw.len() - 1]).is_err());
    }

    #[test]
    fn rgb_png_encodes() {
        let data: Vec<f64> = (0..3 * 4).map(|i| i as f64).collect();
        let png = encode_rgb_png(&data, 2, 2, 0.0, 11.0).unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }
}
