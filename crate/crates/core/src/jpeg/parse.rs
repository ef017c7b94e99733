//! Marker-level JPEG parsing: quantization tables and frame geometry
//! straight from the bitstream, no entropy decoding.

use std::collections::BTreeMap;

use serde::Serialize;

use super::qtable::{dezigzag, zigzag, Precision, QuantTable};
use crate::error::{Error, Result};

const MARKER_SOI: u8 = 0xD8;
const MARKER_EOI: u8 = 0xD9;
const MARKER_SOS: u8 = 0xDA;
const MARKER_DQT: u8 = 0xDB;
const MARKER_SOF0: u8 = 0xC0;
const MARKER_SOF1: u8 = 0xC1;
const MARKER_SOF2: u8 = 0xC2;
const MARKER_TEM: u8 = 0x01;

#[derive(Clone, Debug, Serialize)]
pub struct ComponentInfo {
    pub id: u8,
    pub h_sampling: u8,
    pub v_sampling: u8,
    pub table_id: u8,
}

#[derive(Clone, Debug, Serialize)]
pub struct JpegMetadata {
    pub width: usize,
    pub height: usize,
    pub progressive: bool,
    pub tables: BTreeMap<u8, QuantTable>,
    pub components: Vec<ComponentInfo>,
}

impl JpegMetadata {
    pub fn table_for_component(&self, index: usize) -> Option<&QuantTable> {
        self.components
            .get(index)
            .and_then(|c| self.tables.get(&c.table_id))
    }
}

fn truncated() -> Error {
    Error::JpegParse("truncated segment".into())
}

fn read_u16_be(data: &[u8], pos: usize) -> Result<u16> {
    if pos + 2 > data.len() {
        return Err(truncated());
    }
    Ok(u16::from_be_bytes([data[pos], data[pos + 1]]))
}

/// Walks the marker stream up to the first scan and collects every
/// quantization table (de-zigzagged) plus the frame header.
pub fn parse_jpeg_metadata(data: &[u8]) -> Result<JpegMetadata> {
    if data.len() < 2 || data[0] != 0xFF || data[1] != MARKER_SOI {
        return Err(Error::JpegParse("missing SOI marker".into()));
    }
    let mut pos = 2usize;
    let mut tables: BTreeMap<u8, QuantTable> = BTreeMap::new();
    let mut frame: Option<(usize, usize, bool, Vec<ComponentInfo>)> = None;

    while pos < data.len() {
        if data[pos] != 0xFF {
            return Err(Error::JpegParse(format!(
                "expected marker at offset {}, found 0x{:02X}",
                pos, data[pos]
            )));
        }
        // fill bytes: any number of 0xFF before the marker code
        while pos + 1 < data.len() && data[pos + 1] == 0xFF {
            pos += 1;
        }
        if pos + 1 >= data.len() {
            return Err(truncated());
        }
        let marker = data[pos + 1];
        pos += 2;

        match marker {
            MARKER_EOI => break,
            MARKER_SOS => break, // entropy-coded data follows; out of scope
            MARKER_SOI => return Err(Error::JpegParse("unexpected second SOI".into())),
            MARKER_TEM | 0xD0..=0xD7 => continue, // standalone, no payload
            _ => {}
        }

        let declared = read_u16_be(data, pos)? as usize;
        if declared < 2 {
            return Err(Error::JpegParse("segment length below 2".into()));
        }
        if pos + declared > data.len() {
            return Err(truncated());
        }
        let payload = &data[pos + 2..pos + declared];
        pos += declared;

        match marker {
            MARKER_DQT => parse_dqt_payload(payload, &mut tables)?,
            MARKER_SOF0 | MARKER_SOF1 | MARKER_SOF2 => {
                if frame.is_some() {
                    return Err(Error::JpegParse("multiple frame headers".into()));
                }
                frame = Some(parse_sof_payload(payload, marker == MARKER_SOF2)?);
            }
            0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(Error::JpegParse(format!(
                    "unsupported frame type 0xFF{:02X}",
                    marker
                )));
            }
            _ => {} // APPn, COM, DHT, DRI...: skip
        }
    }

    let (width, height, progressive, components) =
        frame.ok_or_else(|| Error::JpegParse("no frame header before scan".into()))?;
    for comp in &components {
        if !tables.contains_key(&comp.table_id) {
            return Err(Error::JpegParse(format!(
                "component {} references missing quantization table {}",
                comp.id, comp.table_id
            )));
        }
    }
    Ok(JpegMetadata { width, height, progressive, tables, components })
}

fn parse_dqt_payload(payload: &[u8], tables: &mut BTreeMap<u8, QuantTable>) -> Result<()> {
    let mut pos = 0usize;
    while pos < payload.len() {
        let pq = payload[pos] >> 4;
        let tq = payload[pos] & 0x0F;
        pos += 1;
        let precision = match pq {
            0 => Precision::EightBit,
            1 => Precision::SixteenBit,
            other => {
                return Err(Error::JpegParse(format!("unknown DQT precision {}", other)));
            }
        };
        if tq > 3 {
            return Err(Error::JpegParse(format!("quantization table id {} > 3", tq)));
        }
        let mut scan = [0u16; 64];
        match precision {
            Precision::EightBit => {
                if pos + 64 > payload.len() {
                    return Err(truncated());
                }
                for (k, slot) in scan.iter_mut().enumerate() {
                    *slot = payload[pos + k] as u16;
                }
                pos += 64;
            }
            Precision::SixteenBit => {
                if pos + 128 > payload.len() {
                    return Err(truncated());
                }
                for (k, slot) in scan.iter_mut().enumerate() {
                    *slot = u16::from_be_bytes([payload[pos + 2 * k], payload[pos + 2 * k + 1]]);
                }
                pos += 128;
            }
        }
        let natural = dezigzag(&scan);
        tables.insert(tq, QuantTable::from_flat(&natural, precision, tq)?);
    }
    Ok(())
}

fn parse_sof_payload(
    payload: &[u8],
    progressive: bool,
) -> Result<(usize, usize, bool, Vec<ComponentInfo>)> {
    if payload.len() < 6 {
        return Err(truncated());
    }
    let height = u16::from_be_bytes([payload[1], payload[2]]) as usize;
    let width = u16::from_be_bytes([payload[3], payload[4]]) as usize;
    if width == 0 || height == 0 {
        return Err(Error::JpegParse("zero frame extent".into()));
    }
    let ncomp = payload[5] as usize;
    if payload.len() != 6 + 3 * ncomp {
        return Err(truncated());
    }
    let mut components = Vec::with_capacity(ncomp);
    for c in 0..ncomp {
        let base = 6 + 3 * c;
        components.push(ComponentInfo {
            id: payload[base],
            h_sampling: payload[base + 1] >> 4,
            v_sampling: payload[base + 1] & 0x0F,
            table_id: payload[base + 2],
        });
    }
    Ok((width, height, progressive, components))
}

/// Builds an FFDB segment (marker + length + zigzag-serialized tables).
/// Test and fixture helper; the parser is its round-trip partner.
pub fn serialize_dqt_segment(tables: &[QuantTable]) -> Vec<u8> {
    let mut payload = Vec::new();
    for t in tables {
        let pq: u8 = match t.precision {
            Precision::EightBit => 0,
            Precision::SixteenBit => 1,
        };
        payload.push((pq << 4) | t.table_id);
        let scan = zigzag(&t.flat());
        for v in scan {
            match t.precision {
                Precision::EightBit => payload.push(v as u8),
                Precision::SixteenBit => payload.extend_from_slice(&v.to_be_bytes()),
            }
        }
    }
    let mut seg = vec![0xFF, MARKER_DQT];
    seg.extend_from_slice(&((payload.len() as u16 + 2).to_be_bytes()));
    seg.extend_from_slice(&payload);
    seg
}

/// Builds an FFC0 baseline frame header segment.
pub fn serialize_sof0_segment(width: u16, height: u16, components: &[ComponentInfo]) -> Vec<u8> {
    let mut payload = vec![8u8];
    payload.extend_from_slice(&height.to_be_bytes());
    payload.extend_from_slice(&width.to_be_bytes());
    payload.push(components.len() as u8);
    for c in components {
        payload.push(c.id);
        payload.push((c.h_sampling << 4) | c.v_sampling);
        payload.push(c.table_id);
    }
    let mut seg = vec![0xFF, MARKER_SOF0];
    seg.extend_from_slice(&((payload.len() as u16 + 2).to_be_bytes()));
    seg.extend_from_slice(&payload);
    seg
}

/// Minimal parseable stream: SOI + DQT + SOF0 + EOI.
pub fn serialize_test_jpeg(
    width: u16,
    height: u16,
    tables: &[QuantTable],
    components: &[ComponentInfo],
) -> Vec<u8> {
    let mut out = vec![0xFF, MARKER_SOI];
    out.extend(serialize_dqt_segment(tables));
    out.extend(serialize_sof0_segment(width, height, components));
    out.extend_from_slice(&[0xFF, MARKER_EOI]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpeg::qtable::ijg_base_tables;

    fn gray_component(table_id: u8) -> Vec<ComponentInfo> {
        vec![ComponentInfo { id: 1, h_sampling: 1, v_sampling: 1, table_id }]
    }

    #[test]
    fn constant_table_parses_without_zigzag_effect() {
        // FF DB 00 43 00 then 64 x 0x10: a constant table is invariant
        // under de-zigzagging.
        let mut stream = vec![0xFF, 0xD8, 0xFF, 0xDB, 0x00, 0x43, 0x00];
        stream.extend(std::iter::repeat_n(0x10u8, 64));
        stream.extend(serialize_sof0_segment(4, 4, &gray_component(0)));
        stream.extend_from_slice(&[0xFF, 0xD9]);

        let meta = parse_jpeg_metadata(&stream).unwrap();
        let t = &meta.tables[&0];
        assert!(t.flat().iter().all(|&v| v == 16));
        assert_eq!(t.table_id, 0);
        assert_eq!(t.precision, Precision::EightBit);
    }

    #[test]
    fn truncated_dqt_reports_truncated_segment() {
        let stream = vec![0xFF, 0xD8, 0xFF, 0xDB, 0x00, 0x43];
        let err = parse_jpeg_metadata(&stream).unwrap_err();
        assert!(err.to_string().contains("truncated segment"), "{}", err);
    }

    #[test]
    fn missing_soi() {
        let err = parse_jpeg_metadata(&[0x00, 0x01, 0x02]).unwrap_err();
        assert!(err.to_string().contains("missing SOI"), "{}", err);
    }

    #[test]
    fn rejects_unknown_precision_and_bad_id() {
        let mut stream = vec![0xFF, 0xD8, 0xFF, 0xDB, 0x00, 0x43, 0x20];
        stream.extend(std::iter::repeat_n(0x10u8, 64));
        let err = parse_jpeg_metadata(&stream).unwrap_err();
        assert!(err.to_string().contains("unknown DQT precision"), "{}", err);

        let mut stream = vec![0xFF, 0xD8, 0xFF, 0xDB, 0x00, 0x43, 0x04];
        stream.extend(std::iter::repeat_n(0x10u8, 64));
        let err = parse_jpeg_metadata(&stream).unwrap_err();
        assert!(err.to_string().contains("> 3"), "{}", err);
    }

    #[test]
    fn round_trip_base_tables() {
        let (luma, chroma) = ijg_base_tables();
        let comps = vec![
            ComponentInfo { id: 1, h_sampling: 2, v_sampling: 2, table_id: 0 },
            ComponentInfo { id: 2, h_sampling: 1, v_sampling: 1, table_id: 1 },
            ComponentInfo { id: 3, h_sampling: 1, v_sampling: 1, table_id: 1 },
        ];
        let stream = serialize_test_jpeg(640, 480, &[luma.clone(), chroma.clone()], &comps);
        let meta = parse_jpeg_metadata(&stream).unwrap();
        assert_eq!(meta.width, 640);
        assert_eq!(meta.height, 480);
        assert_eq!(meta.tables[&0], luma);
        assert_eq!(meta.tables[&1], chroma);
        assert_eq!(meta.components.len(), 3);
        assert_eq!(meta.components[0].h_sampling, 2);
        assert!(!meta.progressive);
    }

    #[test]
    fn sixteen_bit_table_round_trip() {
        let mut flat = [0u16; 64];
        for (i, v) in flat.iter_mut().enumerate() {
            *v = 250 + 10 * i as u16; // exceeds 8-bit range
        }
        let t = QuantTable::from_flat(&flat, Precision::SixteenBit, 2).unwrap();
        let stream = serialize_test_jpeg(8, 8, &[t.clone()], &gray_component(2));
        let meta = parse_jpeg_metadata(&stream).unwrap();
        assert_eq!(meta.tables[&2], t);
    }

    #[test]
    fn component_referencing_missing_table_is_error() {
        let (luma, _) = ijg_base_tables();
        let stream = serialize_test_jpeg(8, 8, &[luma], &gray_component(1));
        let err = parse_jpeg_metadata(&stream).unwrap_err();
        assert!(err.to_string().contains("missing quantization table"), "{}", err);
    }
}
