//! 8-bit image buffers, colorspace conversion, and lossless I/O.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    Gray,
    Rgb,
    YCbCr,
}

/// Interleaved row-major 8-bit image, 1 or 3 channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    color: ColorSpace,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, color: ColorSpace, data: Vec<u8>) -> Result<Self> {
        let channels = if color == ColorSpace::Gray { 1 } else { 3 };
        if width == 0 || height == 0 {
            return Err(Error::Image("zero extent".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::Image(format!(
                "{}x{}x{} wants {} bytes, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(ImageBuffer { width, height, color, data })
    }

    pub fn filled(width: usize, height: usize, color: ColorSpace, value: u8) -> Self {
        let channels = if color == ColorSpace::Gray { 1 } else { 3 };
        ImageBuffer {
            width,
            height,
            color,
            data: vec![value; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn color(&self) -> ColorSpace {
        self.color
    }
    pub fn channels(&self) -> usize {
        if self.color == ColorSpace::Gray {
            1
        } else {
            3
        }
    }
    pub fn data(&self) -> &[u8] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let c = self.channels();
        &self.data[(y * self.width + x) * c..(y * self.width + x + 1) * c]
    }

    pub fn is_gray(&self) -> bool {
        self.color == ColorSpace::Gray
    }

    /// Extracts channel `c` as f64 values in [0,255].
    pub fn plane_f64(&self, c: usize) -> Vec<f64> {
        let ch = self.channels();
        self.data[c..]
            .iter()
            .step_by(ch)
            .map(|&v| v as f64)
            .collect()
    }

    /// Rebuilds an interleaved 8-bit image from f64 planes in [0,255].
    /// Values are rounded half away from zero and clamped.
    pub fn from_planes_f64(
        width: usize,
        height: usize,
        color: ColorSpace,
        planes: &[Vec<f64>],
    ) -> Result<Self> {
        let channels = if color == ColorSpace::Gray { 1 } else { 3 };
        if planes.len() != channels {
            return Err(Error::Image(format!(
                "expected {} planes, got {}",
                channels,
                planes.len()
            )));
        }
        let mut data = vec![0u8; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(Error::Image("plane extent mismatch".into()));
            }
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        ImageBuffer::new(width, height, color, data)
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<ImageBuffer> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::Image(format!(
                "crop {}x{}+{}+{} exceeds {}x{}",
                w, h, x, y, self.width, self.height
            )));
        }
        let c = self.channels();
        let mut data = Vec::with_capacity(w * h * c);
        for row in y..y + h {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        ImageBuffer::new(w, h, self.color, data)
    }

    /// (N=1, C, H, W) tensor with values scaled into [0,1].
    pub fn to_tensor<E: Scalar>(&self) -> Tensor<E> {
        let c = self.channels();
        let mut data = Vec::with_capacity(self.data.len());
        for ch in 0..c {
            data.extend(
                self.data[ch..]
                    .iter()
                    .step_by(c)
                    .map(|&v| E::from_f64(v as f64 / 255.0)),
            );
        }
        Tensor::new(&[1, c, self.height, self.width], data).expect("extent math is consistent")
    }

    /// Inverse of [`Self::to_tensor`]: takes a (1, C, H, W) tensor in
    /// [0,1], rounds and clamps back to 8 bits.
    pub fn from_tensor<E: Scalar>(t: &Tensor<E>, color: ColorSpace) -> Result<Self> {
        let [n, c, h, w] = t.dims4();
        if n != 1 {
            return Err(Error::Image("expected a single-sample tensor".into()));
        }
        let expected = if color == ColorSpace::Gray { 1 } else { 3 };
        if c != expected {
            return Err(Error::Image(format!(
                "tensor has {} channels, colorspace wants {}",
                c, expected
            )));
        }
        let mut data = vec![0u8; c * h * w];
        for ch in 0..c {
            for i in 0..h * w {
                let v = t.data()[ch * h * w + i].to_f64() * 255.0;
                data[i * c + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        ImageBuffer::new(w, h, color, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img =
            image::open(path).map_err(|e| Error::Image(format!("{}: {}", path.display(), e)))?;
        Ok(match img {
            DynamicImage::ImageLuma8(g) => ImageBuffer {
                width: g.width() as usize,
                height: g.height() as usize,
                color: ColorSpace::Gray,
                data: g.into_raw(),
            },
            other => {
                let rgb = other.to_rgb8();
                ImageBuffer {
                    width: rgb.width() as usize,
                    height: rgb.height() as usize,
                    color: ColorSpace::Rgb,
                    data: rgb.into_raw(),
                }
            }
        })
    }

    /// Writes PNG or PPM/PGM depending on the file extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("png") => ImageFormat::Png,
            Some("ppm") | Some("pgm") | Some("pnm") => ImageFormat::Pnm,
            other => {
                return Err(Error::Image(format!(
                    "unsupported output extension {:?} (use png/ppm/pgm)",
                    other
                )))
            }
        };
        let color = if self.is_gray() {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            color,
            format,
        )
        .map_err(|e| Error::Image(format!("{}: {}", path.display(), e)))
    }

    /// Bilinear resize with half-pixel centers.
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> Result<ImageBuffer> {
        let planes: Vec<Vec<f64>> = (0..self.channels()).map(|c| self.plane_f64(c)).collect();
        let resized: Vec<Vec<f64>> = planes
            .iter()
            .map(|p| resize_plane_bilinear(p, self.width, self.height, new_w, new_h))
            .collect();
        ImageBuffer::from_planes_f64(new_w, new_h, self.color, &resized)
    }
}

/// Bilinear interpolation of one plane, half-pixel center convention,
/// edges clamped.
pub fn resize_plane_bilinear(
    src: &[f64],
    w: usize,
    h: usize,
    new_w: usize,
    new_h: usize,
) -> Vec<f64> {
    let mut out = vec![0.0f64; new_w * new_h];
    let sx = w as f64 / new_w as f64;
    let sy = h as f64 / new_h as f64;
    for oy in 0..new_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..new_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            let top = src[y0 * w + x0] * (1.0 - wx) + src[y0 * w + x1] * wx;
            let bot = src[y1 * w + x0] * (1.0 - wx) + src[y1 * w + x1] * wx;
            out[oy * new_w + ox] = top * (1.0 - wy) + bot * wy;
        }
    }
    out
}

const YCBCR_FWD: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
];

#[inline]
pub fn rgb_to_ycbcr_f64(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = YCBCR_FWD[0][0] * r + YCBCR_FWD[0][1] * g + YCBCR_FWD[0][2] * b;
    let cb = 128.0 + YCBCR_FWD[1][0] * r + YCBCR_FWD[1][1] * g + YCBCR_FWD[1][2] * b;
    let cr = 128.0 + YCBCR_FWD[2][0] * r + YCBCR_FWD[2][1] * g + YCBCR_FWD[2][2] * b;
    (y, cb, cr)
}

#[inline]
pub fn ycbcr_to_rgb_f64(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let cb = cb - 128.0;
    let cr = cr - 128.0;
    let r = y + 1.402 * cr;
    let g = y - 0.344136 * cb - 0.714136 * cr;
    let b = y + 1.772 * cb;
    (r, g, b)
}

/// Full-range BT.601 conversion in the integer domain, clamped.
pub fn rgb_to_ycbcr(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.color != ColorSpace::Rgb {
        return Err(Error::invalid("rgb_to_ycbcr", "input is not RGB"));
    }
    let mut out = img.clone();
    out.color = ColorSpace::YCbCr;
    for px in out.data.chunks_exact_mut(3) {
        let (y, cb, cr) = rgb_to_ycbcr_f64(px[0] as f64, px[1] as f64, px[2] as f64);
        px[0] = y.round().clamp(0.0, 255.0) as u8;
        px[1] = cb.round().clamp(0.0, 255.0) as u8;
        px[2] = cr.round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

pub fn ycbcr_to_rgb(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.color != ColorSpace::YCbCr {
        return Err(Error::invalid("ycbcr_to_rgb", "input is not YCbCr"));
    }
    let mut out = img.clone();
    out.color = ColorSpace::Rgb;
    for px in out.data.chunks_exact_mut(3) {
        let (r, g, b) = ycbcr_to_rgb_f64(px[0] as f64, px[1] as f64, px[2] as f64);
        px[0] = r.round().clamp(0.0, 255.0) as u8;
        px[1] = g.round().clamp(0.0, 255.0) as u8;
        px[2] = b.round().clamp(0.0, 255.0) as u8;
    }
    Ok(out)
}

/// Luminance plane of any buffer, f64 in [0,255].
pub fn luminance_f64(img: &ImageBuffer) -> Vec<f64> {
    match img.color {
        ColorSpace::Gray | ColorSpace::YCbCr => img.plane_f64(0),
        ColorSpace::Rgb => img
            .data
            .chunks_exact(3)
            .map(|px| rgb_to_ycbcr_f64(px[0] as f64, px[1] as f64, px[2] as f64).0)
            .collect(),
    }
}
