//! Full-reference quality metrics: PSNR, SSIM, PSNR-B, and the
//! before/after improvement measure IPSNR.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{luminance_f64, ImageBuffer};

/// Metric bundle for one image pair. PSNR values can be `inf` for
/// exact matches; tabular output substitutes [`PSNR_SENTINEL_DB`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QualityReport {
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_b: f64,
    pub ipsnr: Option<f64>,
}

pub const PSNR_SENTINEL_DB: f64 = 99.99;

/// Finite dB value for tables: infinities collapse to the sentinel.
pub fn display_db(v: f64) -> f64 {
    if v.is_infinite() {
        PSNR_SENTINEL_DB
    } else {
        v
    }
}

impl QualityReport {
    pub fn compute(reference: &ImageBuffer, test: &ImageBuffer) -> Result<Self> {
        Ok(QualityReport {
            psnr: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
            psnr_b: psnr_b(reference, test)?,
            ipsnr: None,
        })
    }

    pub fn compute_with_degraded(
        reference: &ImageBuffer,
        degraded: &ImageBuffer,
        restored: &ImageBuffer,
    ) -> Result<Self> {
        let mut report = Self::compute(reference, restored)?;
        report.ipsnr = Some(ipsnr(reference, degraded, restored)?);
        Ok(report)
    }

    pub fn csv_header() -> &'static str {
        "path,qf,psnr,ssim,psnr_b,ipsnr,exact_match"
    }

    pub fn csv_row(&self, path: &str, qf: Option<u8>) -> String {
        format!(
            "{},{},{:.4},{:.6},{:.4},{},{}",
            path,
            qf.map(|q| q.to_string()).unwrap_or_default(),
            display_db(self.psnr),
            self.ssim,
            display_db(self.psnr_b),
            self.ipsnr
                .map(|v| format!("{:.4}", display_db(v)))
                .unwrap_or_default(),
            self.psnr.is_infinite()
        )
    }
}

fn check_same_shape(op: &'static str, a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::shape(
            op,
            format!(
                "{}x{}x{} vs {}x{}x{}",
                a.width(),
                a.height(),
                a.channels(),
                b.width(),
                b.height(),
                b.channels()
            ),
        ));
    }
    Ok(())
}

fn mse(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let acc: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    acc / a.data().len() as f64
}

/// 10 log10(255^2 / MSE) over all channels; identical images give +inf.
pub fn psnr(reference: &ImageBuffer, test: &ImageBuffer) -> Result<f64> {
    check_same_shape("psnr", reference, test)?;
    let m = mse(reference, test);
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / m).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_L: f64 = 255.0;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0f64; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dx = x as f64 - c;
            let dy = y as f64 - c;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

fn ssim_plane(a: &[f64], b: &[f64], width: usize, height: usize) -> f64 {
    let window = gaussian_window();
    let c1 = (SSIM_K1 * SSIM_L) * (SSIM_K1 * SSIM_L);
    let c2 = (SSIM_K2 * SSIM_L) * (SSIM_K2 * SSIM_L);
    let mut total = 0.0f64;
    let mut count = 0usize;
    for wy in 0..=height - SSIM_WINDOW {
        for wx in 0..=width - SSIM_WINDOW {
            let (mut mu_a, mut mu_b) = (0.0f64, 0.0f64);
            let (mut aa, mut bb, mut ab) = (0.0f64, 0.0f64, 0.0f64);
            for y in 0..SSIM_WINDOW {
                for x in 0..SSIM_WINDOW {
                    let w = window[y * SSIM_WINDOW + x];
                    let va = a[(wy + y) * width + wx + x];
                    let vb = b[(wy + y) * width + wx + x];
                    mu_a += w * va;
                    mu_b += w * vb;
                    aa += w * va * va;
                    bb += w * vb * vb;
                    ab += w * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            count += 1;
        }
    }
    total / count as f64
}

/// Mean local SSIM with the standard 11x11 Gaussian window, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, L = 255. Color images: per channel, averaged.
pub fn ssim(reference: &ImageBuffer, test: &ImageBuffer) -> Result<f64> {
    check_same_shape("ssim", reference, test)?;
    if reference.width() < SSIM_WINDOW || reference.height() < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("image smaller than the {0}x{0} window", SSIM_WINDOW),
        ));
    }
    let mut acc = 0.0;
    for c in 0..reference.channels() {
        acc += ssim_plane(
            &reference.plane_f64(c),
            &test.plane_f64(c),
            reference.width(),
            reference.height(),
        );
    }
    Ok(acc / reference.channels() as f64)
}

const BLOCK: usize = 8;

/// Blocking-effect factor of one luminance plane: mean squared
/// difference across 8-aligned block boundaries minus the same across
/// non-boundary neighbors, log-block weighted, floored at zero.
fn blocking_effect_factor(luma: &[f64], width: usize, height: usize) -> f64 {
    let mut boundary_sum = 0.0f64;
    let mut boundary_n = 0usize;
    let mut interior_sum = 0.0f64;
    let mut interior_n = 0usize;

    // horizontal neighbor pairs (x, x+1)
    for y in 0..height {
        for x in 0..width - 1 {
            let d = luma[y * width + x] - luma[y * width + x + 1];
            if (x + 1) % BLOCK == 0 {
                boundary_sum += d * d;
                boundary_n += 1;
            } else {
                interior_sum += d * d;
                interior_n += 1;
            }
        }
    }
    // vertical neighbor pairs (y, y+1)
    for y in 0..height - 1 {
        for x in 0..width {
            let d = luma[y * width + x] - luma[(y + 1) * width + x];
            if (y + 1) % BLOCK == 0 {
                boundary_sum += d * d;
                boundary_n += 1;
            } else {
                interior_sum += d * d;
                interior_n += 1;
            }
        }
    }
    if boundary_n == 0 || interior_n == 0 {
        return 0.0;
    }
    let d_b = boundary_sum / boundary_n as f64;
    let d_bc = interior_sum / interior_n as f64;
    if d_b <= d_bc {
        return 0.0;
    }
    let eta = (BLOCK as f64).log2() / (width.min(height) as f64).log2();
    eta * (d_b - d_bc)
}

/// 10 log10(255^2 / (MSE + BEF)). MSE runs over the same channels as
/// [`psnr`], the BEF term is measured on the luminance of the test
/// image only, so psnr_b <= psnr always holds and the metric is
/// deliberately asymmetric in its arguments.
pub fn psnr_b(reference: &ImageBuffer, test: &ImageBuffer) -> Result<f64> {
    check_same_shape("psnr_b", reference, test)?;
    if reference.width() < 2 * BLOCK || reference.height() < 2 * BLOCK {
        return Err(Error::invalid("psnr_b", "extents must be at least 16"));
    }
    let m = mse(reference, test);
    let luma = luminance_f64(test);
    let bef = blocking_effect_factor(&luma, test.width(), test.height());
    let denom = m + bef;
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / denom).log10())
}

/// psnr(ref, restored) - psnr(ref, degraded). Equal inputs give exactly
/// zero even when both PSNRs are infinite.
pub fn ipsnr(reference: &ImageBuffer, degraded: &ImageBuffer, restored: &ImageBuffer) -> Result<f64> {
    let after = psnr(reference, restored)?;
    let before = psnr(reference, degraded)?;
    if after.is_infinite() && before.is_infinite() {
        return Ok(0.0);
    }
    Ok(after - before)
}
