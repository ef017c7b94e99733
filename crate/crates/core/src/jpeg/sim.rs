//! Deterministic JPEG degradation: blockwise DCT -> quantize ->
//! dequantize -> inverse DCT, with optional 4:2:0 chroma subsampling.
//! Quantization is the only lossy step a decoder cannot undo, so this
//! reproduces the pixel-domain damage without any entropy coding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dct::{fdct8x8, idct8x8, quantize_dequantize};
use super::qmap::{pad_to_multiple, unpad};
use super::qtable::{scaled_ijg_tables, QuantTable};
use crate::error::Result;
use crate::image::{rgb_to_ycbcr_f64, ycbcr_to_rgb_f64, ColorSpace, ImageBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsampling {
    /// Chroma at full resolution.
    #[serde(rename = "444")]
    S444,
    /// Chroma box-averaged 2x2 and replicated back up.
    #[serde(rename = "420")]
    S420,
}

/// Runs every 8x8 block of one plane through the lossy transform chain.
/// Plane extents must be multiples of 8.
fn degrade_plane(plane: &mut [f64], width: usize, height: usize, table: &QuantTable) {
    debug_assert!(width % 8 == 0 && height % 8 == 0);
    let blocks_x = width / 8;
    let blocks_y = height / 8;
    let coords: Vec<(usize, usize)> = (0..blocks_y)
        .flat_map(|by| (0..blocks_x).map(move |bx| (bx, by)))
        .collect();
    let results: Vec<[f64; 64]> = coords
        .par_iter()
        .map(|&(bx, by)| {
            let mut block = [0.0f64; 64];
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = plane[(by * 8 + y) * width + bx * 8 + x];
                }
            }
            idct8x8(&quantize_dequantize(&fdct8x8(&block), table))
        })
        .collect();
    for ((bx, by), block) in coords.into_iter().zip(results) {
        for y in 0..8 {
            for x in 0..8 {
                plane[(by * 8 + y) * width + bx * 8 + x] = block[y * 8 + x];
            }
        }
    }
}

fn box_down_2x2(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let (w2, h2) = (width / 2, height / 2);
    let mut out = vec![0.0f64; w2 * h2];
    for y in 0..h2 {
        for x in 0..w2 {
            let s = plane[(2 * y) * width + 2 * x]
                + plane[(2 * y) * width + 2 * x + 1]
                + plane[(2 * y + 1) * width + 2 * x]
                + plane[(2 * y + 1) * width + 2 * x + 1];
            out[y * w2 + x] = s / 4.0;
        }
    }
    out
}

fn replicate_up_2x2(plane: &[f64], w2: usize, h2: usize) -> Vec<f64> {
    let (width, height) = (w2 * 2, h2 * 2);
    let mut out = vec![0.0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = plane[(y / 2) * w2 + x / 2];
        }
    }
    out
}

/// Simulated JPEG round trip at quality `qf`. Returns the degraded
/// image together with the luma and chroma tables that were applied
/// (the chroma table is returned even for grayscale inputs, where it
/// is simply unused).
pub fn compress_simulate(
    img: &ImageBuffer,
    qf: u8,
    subsampling: Subsampling,
) -> Result<(ImageBuffer, QuantTable, QuantTable)> {
    let (luma_table, chroma_table) = scaled_ijg_tables(qf)?;

    // 4:2:0 needs the half-resolution chroma planes to still be block
    // multiples, so pad the full-resolution image to 16.
    let multiple = match (img.is_gray(), subsampling) {
        (true, _) | (false, Subsampling::S444) => 8,
        (false, Subsampling::S420) => 16,
    };
    let (padded, orig) = pad_to_multiple(img, multiple);
    let (w, h) = (padded.width(), padded.height());

    let degraded = if padded.is_gray() {
        let mut plane = padded.plane_f64(0);
        degrade_plane(&mut plane, w, h, &luma_table);
        ImageBuffer::from_planes_f64(w, h, ColorSpace::Gray, &[plane])?
    } else {
        // float YCbCr planes, no intermediate rounding
        let mut y = vec![0.0f64; w * h];
        let mut cb = vec![0.0f64; w * h];
        let mut cr = vec![0.0f64; w * h];
        for (i, px) in padded.data().chunks_exact(3).enumerate() {
            let (yv, cbv, crv) = rgb_to_ycbcr_f64(px[0] as f64, px[1] as f64, px[2] as f64);
            y[i] = yv;
            cb[i] = cbv;
            cr[i] = crv;
        }

        degrade_plane(&mut y, w, h, &luma_table);
        match subsampling {
            Subsampling::S444 => {
                degrade_plane(&mut cb, w, h, &chroma_table);
                degrade_plane(&mut cr, w, h, &chroma_table);
            }
            Subsampling::S420 => {
                let (w2, h2) = (w / 2, h / 2);
                for plane in [&mut cb, &mut cr] {
                    let mut small = box_down_2x2(plane, w, h);
                    degrade_plane(&mut small, w2, h2, &chroma_table);
                    *plane = replicate_up_2x2(&small, w2, h2);
                }
            }
        }

        let mut rgb = vec![0.0f64; 3 * w * h];
        for i in 0..w * h {
            let (r, g, b) = ycbcr_to_rgb_f64(y[i], cb[i], cr[i]);
            rgb[3 * i] = r;
            rgb[3 * i + 1] = g;
            rgb[3 * i + 2] = b;
        }
        let planes: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..w * h).map(|i| rgb[3 * i + c]).collect())
            .collect();
        ImageBuffer::from_planes_f64(w, h, ColorSpace::Rgb, &planes)?
    };

    let restored_size = unpad(&degraded, orig)?;
    Ok((restored_size, luma_table, chroma_table))
}
