//! Quantization tables: the standard base tables, quality-factor
//! scaling, and zigzag/natural reordering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entry width a table was declared with in the bitstream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    EightBit,
    SixteenBit,
}

/// One 8x8 matrix of quantizer step sizes, natural row-major order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantTable {
    pub entries: [[u16; 8]; 8],
    pub precision: Precision,
    pub table_id: u8,
}

impl QuantTable {
    pub fn from_flat(flat: &[u16; 64], precision: Precision, table_id: u8) -> Result<Self> {
        if table_id > 3 {
            return Err(Error::invalid("quant_table", format!("table id {} > 3", table_id)));
        }
        let mut entries = [[0u16; 8]; 8];
        for (i, &v) in flat.iter().enumerate() {
            if v == 0 {
                return Err(Error::invalid("quant_table", "zero step size"));
            }
            if precision == Precision::EightBit && v > 255 {
                return Err(Error::invalid(
                    "quant_table",
                    format!("entry {} exceeds 8-bit precision", v),
                ));
            }
            entries[i / 8][i % 8] = v;
        }
        Ok(QuantTable { entries, precision, table_id })
    }

    pub fn flat(&self) -> [u16; 64] {
        let mut out = [0u16; 64];
        for r in 0..8 {
            for c in 0..8 {
                out[r * 8 + c] = self.entries[r][c];
            }
        }
        out
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.entries[row][col]
    }

    /// Step size covering pixel (x, y) under 8x8 block tiling.
    pub fn step_at(&self, x: usize, y: usize) -> u16 {
        self.entries[y % 8][x % 8]
    }
}

/// Zigzag scan order: `ZIGZAG[k]` is the natural (row*8+col) index of
/// the k-th transmitted coefficient.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, //
    17, 24, 32, 25, 18, 11, 4, 5, //
    12, 19, 26, 33, 40, 48, 41, 34, //
    27, 20, 13, 6, 7, 14, 21, 28, //
    35, 42, 49, 56, 57, 50, 43, 36, //
    29, 22, 15, 23, 30, 37, 44, 51, //
    58, 59, 52, 45, 38, 31, 39, 46, //
    53, 60, 61, 54, 47, 55, 62, 63,
];

/// Zigzag-transmitted values -> natural row-major order.
pub fn dezigzag(scan: &[u16; 64]) -> [u16; 64] {
    let mut natural = [0u16; 64];
    for (k, &v) in scan.iter().enumerate() {
        natural[ZIGZAG[k]] = v;
    }
    natural
}

/// Natural row-major order -> zigzag transmission order.
pub fn zigzag(natural: &[u16; 64]) -> [u16; 64] {
    let mut scan = [0u16; 64];
    for (k, slot) in scan.iter_mut().enumerate() {
        *slot = natural[ZIGZAG[k]];
    }
    scan
}

// ITU-T T.81 Annex K sample tables, as shipped by the common reference
// encoder. Natural row-major order.
const BASE_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

const BASE_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// The standard (luminance, chrominance) base tables.
pub fn ijg_base_tables() -> (QuantTable, QuantTable) {
    let luma = QuantTable::from_flat(&BASE_LUMA, Precision::EightBit, 0)
        .expect("base luma constants are valid");
    let chroma = QuantTable::from_flat(&BASE_CHROMA, Precision::EightBit, 1)
        .expect("base chroma constants are valid");
    (luma, chroma)
}

/// Scales a base table by quality factor exactly like the reference
/// encoder: S = 5000/QF below 50 else 200 - 2*QF, then
/// T = clamp(floor((B*S + 50)/100), 1, 255).
pub fn scale_qtable(base: &QuantTable, qf: u8) -> Result<QuantTable> {
    if qf < 1 || qf > 100 {
        return Err(Error::QfOutOfRange { qf: qf as i64 });
    }
    let s: u32 = if qf < 50 {
        5000 / qf as u32
    } else {
        200 - 2 * qf as u32
    };
    let mut entries = [[0u16; 8]; 8];
    for r in 0..8 {
        for c in 0..8 {
            let scaled = (base.entries[r][c] as u32 * s + 50) / 100;
            entries[r][c] = scaled.clamp(1, 255) as u16;
        }
    }
    Ok(QuantTable {
        entries,
        precision: Precision::EightBit,
        table_id: base.table_id,
    })
}

/// Both standard tables scaled to `qf`.
pub fn scaled_ijg_tables(qf: u8) -> Result<(QuantTable, QuantTable)> {
    let (luma, chroma) = ijg_base_tables();
    Ok((scale_qtable(&luma, qf)?, scale_qtable(&chroma, qf)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_table_corner_entries() {
        let (luma, chroma) = ijg_base_tables();
        assert_eq!(luma.get(0, 0), 16);
        assert_eq!(luma.get(7, 7), 99);
        for r in 4..8 {
            for c in 4..8 {
                assert_eq!(chroma.get(r, c), 99);
            }
        }
    }

    #[test]
    fn qf50_is_identity() {
        let (luma, _) = ijg_base_tables();
        let scaled = scale_qtable(&luma, 50).unwrap();
        assert_eq!(scaled.entries, luma.entries);
    }

    #[test]
    fn qf100_is_all_ones() {
        let (luma, chroma) = ijg_base_tables();
        for t in [luma, chroma] {
            let scaled = scale_qtable(&t, 100).unwrap();
            assert!(scaled.flat().iter().all(|&v| v == 1));
        }
    }

    #[test]
    fn qf10_luma_dc_is_80() {
        let (luma, _) = ijg_base_tables();
        let scaled = scale_qtable(&luma, 10).unwrap();
        assert_eq!(scaled.get(0, 0), 80); // floor((16*500 + 50)/100)
    }

    #[test]
    fn qf_out_of_range() {
        let (luma, _) = ijg_base_tables();
        assert!(scale_qtable(&luma, 0).is_err());
        assert!(scale_qtable(&luma, 101).is_err());
    }

    #[test]
    fn antitone_in_qf_and_bounded() {
        let (luma, chroma) = ijg_base_tables();
        for base in [&luma, &chroma] {
            let mut prev = scale_qtable(base, 1).unwrap();
            assert!(prev.flat().iter().all(|&v| (1..=255).contains(&v)));
            for qf in 2..=100 {
                let cur = scale_qtable(base, qf).unwrap();
                for (p, c) in prev.flat().iter().zip(cur.flat().iter()) {
                    assert!(p >= c, "qf {} raised an entry: {} -> {}", qf, p, c);
                }
                assert!(cur.flat().iter().all(|&v| (1..=255).contains(&v)));
                prev = cur;
            }
        }
    }

    #[test]
    fn zigzag_round_trip_is_identity() {
        let mut natural = [0u16; 64];
        for (i, v) in natural.iter_mut().enumerate() {
            *v = i as u16 + 1;
        }
        assert_eq!(dezigzag(&zigzag(&natural)), natural);
        // the scan really is a permutation
        let mut seen = [false; 64];
        for &ix in ZIGZAG.iter() {
            assert!(!seen[ix]);
            seen[ix] = true;
        }
    }

    #[test]
    fn step_at_tiles_by_blocks() {
        let (luma, _) = ijg_base_tables();
        assert_eq!(luma.step_at(8, 8), luma.get(0, 0));
        assert_eq!(luma.step_at(9, 9), luma.get(1, 1));
    }
}
