//! Procedural test images: smooth gradients, value-noise texture, and
//! hard-edged shapes. Entirely seed-driven, so corpora regenerate
//! bit-identically anywhere.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::image::{ColorSpace, ImageBuffer};

/// Lattice value noise, bilinearly interpolated.
fn value_noise(width: usize, height: usize, cell: usize, amp: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-amp..amp)).collect();
    let mut out = vec![0.0f64; width * height];
    for y in 0..height {
        let gy = y / cell;
        let fy = (y % cell) as f64 / cell as f64;
        for x in 0..width {
            let gx = x / cell;
            let fx = (x % cell) as f64 / cell as f64;
            let v00 = grid[gy * gw + gx];
            let v01 = grid[gy * gw + gx + 1];
            let v10 = grid[(gy + 1) * gw + gx];
            let v11 = grid[(gy + 1) * gw + gx + 1];
            let top = v00 * (1.0 - fx) + v01 * fx;
            let bot = v10 * (1.0 - fx) + v11 * fx;
            out[y * width + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// One deterministic synthetic image. Different seeds give unrelated
/// content; the same seed is bit-stable.
pub fn synth_image(width: usize, height: usize, color: bool, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let channels = if color { 3 } else { 1 };

    // per-channel base gradient
    let mut planes: Vec<Vec<f64>> = (0..channels)
        .map(|_| {
            let base: f64 = rng.random_range(60.0..200.0);
            let gx: f64 = rng.random_range(-80.0..80.0);
            let gy: f64 = rng.random_range(-80.0..80.0);
            let mut p = vec![0.0f64; width * height];
            for y in 0..height {
                for x in 0..width {
                    p[y * width + x] =
                        base + gx * (x as f64 / width as f64) + gy * (y as f64 / height as f64);
                }
            }
            p
        })
        .collect();

    // shared multi-octave texture keeps channels correlated like real photos
    for (cell, amp) in [(32usize, 40.0f64), (8, 18.0), (3, 6.0)] {
        if cell < width.min(height) {
            let noise = value_noise(width, height, cell, amp, &mut rng);
            for plane in planes.iter_mut() {
                for (dst, src) in plane.iter_mut().zip(&noise) {
                    *dst += src;
                }
            }
        }
    }

    // hard-edged shapes
    let shapes = rng.random_range(2..6);
    for _ in 0..shapes {
        let fill: Vec<f64> = (0..channels).map(|_| rng.random_range(10.0..245.0)).collect();
        if rng.random::<bool>() {
            let rw = rng.random_range(width / 8..width / 2).max(2);
            let rh = rng.random_range(height / 8..height / 2).max(2);
            let rx = rng.random_range(0..width - rw + 1);
            let ry = rng.random_range(0..height - rh + 1);
            for (c, plane) in planes.iter_mut().enumerate() {
                for y in ry..ry + rh {
                    for x in rx..rx + rw {
                        plane[y * width + x] = fill[c];
                    }
                }
            }
        } else {
            let r = rng.random_range(width.min(height) / 10..width.min(height) / 3).max(2);
            let cx = rng.random_range(0..width) as isize;
            let cy = rng.random_range(0..height) as isize;
            for (c, plane) in planes.iter_mut().enumerate() {
                for y in 0..height as isize {
                    for x in 0..width as isize {
                        if (x - cx) * (x - cx) + (y - cy) * (y - cy) < (r * r) as isize {
                            plane[y as usize * width + x as usize] = fill[c];
                        }
                    }
                }
            }
        }
    }

    // mild sensor noise
    for plane in planes.iter_mut() {
        for v in plane.iter_mut() {
            *v += rng.random_range(-2.0..2.0);
        }
    }

    let colorspace = if color { ColorSpace::Rgb } else { ColorSpace::Gray };
    ImageBuffer::from_planes_f64(width, height, colorspace, &planes)
        .expect("plane extents are consistent")
}

/// Writes `count` synthetic PNGs into `dir` and returns their paths.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    count: usize,
    width: usize,
    height: usize,
    color: bool,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let img = synth_image(width, height, color, seed.wrapping_add(i as u64));
        let path = dir.join(format!("synth_{:03}.png", i));
        img.save(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_image(64, 48, true, 11);
        let b = synth_image(64, 48, true, 11);
        let c = synth_image(64, 48, true, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn has_nontrivial_content() {
        let img = synth_image(96, 96, false, 3);
        let min = img.data().iter().min().unwrap();
        let max = img.data().iter().max().unwrap();
        assert!(max - min > 60, "flat image: {}..{}", min, max);
    }
}
