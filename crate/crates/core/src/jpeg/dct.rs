//! 8x8 type-II DCT pair and the quantize/dequantize step, all in f64.

use super::qtable::QuantTable;

/// cos((2x+1) u pi / 16) lookup, indexed [x][u].
fn cos_table() -> [[f64; 8]; 8] {
    let mut t = [[0.0f64; 8]; 8];
    for (x, row) in t.iter_mut().enumerate() {
        for (u, v) in row.iter_mut().enumerate() {
            *v = ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    t
}

fn norm(u: usize) -> f64 {
    if u == 0 {
        std::f64::consts::FRAC_1_SQRT_2
    } else {
        1.0
    }
}

/// Forward DCT of one 8x8 block of pixel values in [0,255]; the block
/// is level-shifted by -128 first. Scaling is the standard
/// 1/4 C(u) C(v) so a constant block of 255 has DC = 8 * 127 = 1016.
pub fn fdct8x8(block: &[f64; 64]) -> [f64; 64] {
    let cos = cos_table();
    let mut out = [0.0f64; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                for x in 0..8 {
                    acc += (block[y * 8 + x] - 128.0) * cos[x][v] * cos[y][u];
                }
            }
            out[u * 8 + v] = 0.25 * norm(u) * norm(v) * acc;
        }
    }
    out
}

/// Inverse DCT back to pixel values (level shift re-applied). Exact
/// inverse of [`fdct8x8`] up to f64 round-off.
pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let cos = cos_table();
    let mut out = [0.0f64; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                for v in 0..8 {
                    acc += norm(u) * norm(v) * coeffs[u * 8 + v] * cos[x][v] * cos[y][u];
                }
            }
            out[y * 8 + x] = 0.25 * acc + 128.0;
        }
    }
    out
}

/// c' = round(c / q) * q per coefficient, rounding half away from zero.
pub fn quantize_dequantize(coeffs: &[f64; 64], table: &QuantTable) -> [f64; 64] {
    let flat = table.flat();
    let mut out = [0.0f64; 64];
    for (i, (&c, &q)) in coeffs.iter().zip(flat.iter()).enumerate() {
        let q = q as f64;
        out[i] = (c / q).round() * q;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::qtable::{ijg_base_tables, Precision, QuantTable};

    #[test]
    fn constant_128_block_has_zero_coefficients() {
        let block = [128.0f64; 64];
        let coeffs = fdct8x8(&block);
        for c in coeffs {
            assert!(c.abs() < 1e-10, "coefficient {}", c);
        }
    }

    #[test]
    fn constant_255_block_dc() {
        let block = [255.0f64; 64];
        let coeffs = fdct8x8(&block);
        assert!((coeffs[0] - 1016.0).abs() < 1e-9, "DC {}", coeffs[0]);
        for &c in &coeffs[1..] {
            assert!(c.abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_identity() {
        // deterministic pseudo-random block
        let mut block = [0.0f64; 64];
        let mut state = 0x12345678u64;
        for v in block.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = (state >> 40) as f64 % 256.0;
        }
        let back = idct8x8(&fdct8x8(&block));
        for (a, b) in block.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn quantize_unit_table_rounds() {
        let ones = QuantTable::from_flat(&[1u16; 64], Precision::EightBit, 0).unwrap();
        let mut coeffs = [0.0f64; 64];
        coeffs[0] = 2.5;
        coeffs[1] = -2.5;
        coeffs[2] = 0.4;
        let q = quantize_dequantize(&coeffs, &ones);
        assert_eq!(q[0], 3.0); // half away from zero
        assert_eq!(q[1], -3.0);
        assert_eq!(q[2], 0.0);
    }

    #[test]
    fn quantize_hand_case() {
        let mut flat = [1u16; 64];
        flat[0] = 16;
        let t = QuantTable::from_flat(&flat, Precision::EightBit, 0).unwrap();
        let mut coeffs = [0.0f64; 64];
        coeffs[0] = 37.0;
        let q = quantize_dequantize(&coeffs, &t);
        assert_eq!(q[0], 32.0); // round(2.3125) = 2 -> 32
    }

    #[test]
    fn quantization_error_bounded_by_half_step() {
        let (luma, _) = ijg_base_tables();
        let mut coeffs = [0.0f64; 64];
        let mut state = 7u64;
        for v in coeffs.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            *v = ((state >> 40) as f64 % 2000.0) - 1000.0;
        }
        let q = quantize_dequantize(&coeffs, &luma);
        for ((&orig, &quant), &step) in coeffs.iter().zip(q.iter()).zip(luma.flat().iter()) {
            assert!((orig - quant).abs() <= step as f64 / 2.0 + 1e-9);
        }
    }
}
