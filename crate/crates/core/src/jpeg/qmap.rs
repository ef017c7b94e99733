//! Per-pixel quantizer-step planes: the table tiled across the image,
//! aligned to the 8x8 coding grid.

use super::qtable::QuantTable;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::tensor::{Scalar, Tensor};

/// H x W x K quantizer-step planes, K = 2 (luma + chroma) for color,
/// K = 1 for grayscale. Values are raw step sizes; [`QuantMap::to_tensor`]
/// provides the /255-normalized view the network consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantMap {
    width: usize,
    height: usize,
    planes: Vec<Vec<f32>>,
    tables: Vec<QuantTable>,
}

impl QuantMap {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn plane_count(&self) -> usize {
        self.planes.len()
    }
    pub fn plane(&self, k: usize) -> &[f32] {
        &self.planes[k]
    }
    pub fn source_tables(&self) -> &[QuantTable] {
        &self.tables
    }

    pub fn value_at(&self, k: usize, x: usize, y: usize) -> f32 {
        self.planes[k][y * self.width + x]
    }

    /// (1, K, H, W) tensor, entries divided by 255 into (0, 1].
    pub fn to_tensor<E: Scalar>(&self) -> Tensor<E> {
        let mut data = Vec::with_capacity(self.planes.len() * self.width * self.height);
        for plane in &self.planes {
            data.extend(plane.iter().map(|&v| E::from_f64(v as f64 / 255.0)));
        }
        Tensor::new(&[1, self.planes.len(), self.height, self.width], data)
            .expect("extent math is consistent")
    }
}

/// Tiles the table(s) over a `width` x `height` grid. Pass a chroma
/// table for color images and `None` for grayscale.
pub fn build_qmap(
    width: usize,
    height: usize,
    luma: &QuantTable,
    chroma: Option<&QuantTable>,
) -> Result<QuantMap> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("build_qmap", "zero extent"));
    }
    let mut tables = vec![luma.clone()];
    if let Some(c) = chroma {
        tables.push(c.clone());
    }
    let planes = tables
        .iter()
        .map(|t| {
            let mut plane = vec![0f32; width * height];
            for y in 0..height {
                for x in 0..width {
                    plane[y * width + x] = t.step_at(x, y) as f32;
                }
            }
            plane
        })
        .collect();
    Ok(QuantMap { width, height, planes, tables })
}

/// Original extents recorded by [`pad_to_multiple`] so the padding can
/// be undone exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OriginalSize {
    pub width: usize,
    pub height: usize,
}

/// Replicates the last row/column until both extents are multiples of
/// `multiple`.
pub fn pad_to_multiple(img: &ImageBuffer, multiple: usize) -> (ImageBuffer, OriginalSize) {
    let orig = OriginalSize { width: img.width(), height: img.height() };
    let new_w = img.width().div_ceil(multiple) * multiple;
    let new_h = img.height().div_ceil(multiple) * multiple;
    if new_w == img.width() && new_h == img.height() {
        return (img.clone(), orig);
    }
    let c = img.channels();
    let mut data = vec![0u8; new_w * new_h * c];
    for y in 0..new_h {
        let sy = y.min(img.height() - 1);
        for x in 0..new_w {
            let sx = x.min(img.width() - 1);
            let src = img.pixel(sx, sy);
            data[(y * new_w + x) * c..(y * new_w + x + 1) * c].copy_from_slice(src);
        }
    }
    let padded = ImageBuffer::new(new_w, new_h, img.color(), data)
        .expect("padded extents are consistent");
    (padded, orig)
}

/// Pads to the 8x8 coding grid.
pub fn pad_to_block_multiple(img: &ImageBuffer) -> (ImageBuffer, OriginalSize) {
    pad_to_multiple(img, 8)
}

/// Restores the pre-padding extents.
pub fn unpad(img: &ImageBuffer, orig: OriginalSize) -> Result<ImageBuffer> {
    if orig.width > img.width() || orig.height > img.height() {
        return Err(Error::invalid("unpad", "original size exceeds padded image"));
    }
    img.crop(0, 0, orig.width, orig.height)
}

/// Network input: degraded image concatenated with its normalized
/// quantization map along channels, (1, C+K, H, W).
pub fn stack_image_and_qmap<E: Scalar>(img: &ImageBuffer, qmap: &QuantMap) -> Result<Tensor<E>> {
    if img.width() != qmap.width() || img.height() != qmap.height() {
        return Err(Error::shape(
            "stack_image_and_qmap",
            format!(
                "image {}x{} vs map {}x{}",
                img.width(),
                img.height(),
                qmap.width(),
                qmap.height()
            ),
        ));
    }
    let expected_planes = if img.is_gray() { 1 } else { 2 };
    if qmap.plane_count() != expected_planes {
        return Err(Error::shape(
            "stack_image_and_qmap",
            format!("{} map planes for a {}-channel image", qmap.plane_count(), img.channels()),
        ));
    }
    let img_t: Tensor<E> = img.to_tensor();
    let map_t: Tensor<E> = qmap.to_tensor();
    let (h, w) = (img.height(), img.width());
    let mut data = Vec::with_capacity(img_t.len() + map_t.len());
    data.extend_from_slice(img_t.data());
    data.extend_from_slice(map_t.data());
    Tensor::new(&[1, img.channels() + qmap.plane_count(), h, w], data)
}
