//! On-disk container of named f32 tensors.
//!
//! Layout: header (magic `QGCN`, format version u32 LE, 32-byte config
//! digest), then records until EOF. Record: u32 LE name length, UTF-8
//! name, 4 extents as u32 LE (leading extents padded with 1), then the
//! row-major payload as f32 LE. Round-trips bit-exactly.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"QGCN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config_digest: [u8; 32],
}

pub fn write_named_tensors<W: Write>(
    mut w: W,
    digest: &[u8; 32],
    tensors: &[(String, Tensor<f32>)],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(digest);
    for (name, t) in tensors {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(name_bytes);
        for extent in t.dims4() {
            out.extend_from_slice(&(extent as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&out)
        .map_err(|e| Error::Checkpoint(format!("write failed: {}", e)))?;
    Ok(out)
}

pub fn read_named_tensors<R: Read>(mut r: R) -> Result<(CheckpointHeader, Vec<(String, Tensor<f32>)>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("read failed: {}", e)))?;
    if bytes.len() < 40 {
        return Err(Error::Checkpoint("file shorter than header".into()));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", version)));
    }
    let mut config_digest = [0u8; 32];
    config_digest.copy_from_slice(&bytes[8..40]);

    let mut tensors = Vec::new();
    let mut pos = 40usize;
    while pos < bytes.len() {
        let name_len = read_u32(&bytes, &mut pos)? as usize;
        if pos + name_len > bytes.len() {
            return Err(Error::Checkpoint("truncated record name".into()));
        }
        let name = std::str::from_utf8(&bytes[pos..pos + name_len])
            .map_err(|_| Error::Checkpoint("record name not UTF-8".into()))?
            .to_string();
        pos += name_len;
        let mut extents = [0usize; 4];
        for e in &mut extents {
            *e = read_u32(&bytes, &mut pos)? as usize;
        }
        let len: usize = extents.iter().product();
        if pos + 4 * len > bytes.len() {
            return Err(Error::Checkpoint(format!("truncated payload for {:?}", name)));
        }
        let mut data = Vec::with_capacity(len);
        for i in 0..len {
            let off = pos + 4 * i;
            data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        }
        pos += 4 * len;
        tensors.push((name, Tensor::new(&extents, data)?));
    }
    Ok((CheckpointHeader { version, config_digest }, tensors))
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    if *pos + 4 > bytes.len() {
        return Err(Error::Checkpoint("truncated field".into()));
    }
    let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
    *pos += 4;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let tensors = vec![
            ("a.w".to_string(), Tensor::new(&[2, 1, 2, 2], vec![1.0f32, -0.5, 3.25e-8, f32::MIN_POSITIVE, 0.0, -0.0, 1e30, 7.0]).unwrap()),
            ("a.b".to_string(), Tensor::new(&[3], vec![0.1f32, 0.2, 0.3]).unwrap()),
        ];
        let digest = [7u8; 32];
        let mut buf = Vec::new();
        write_named_tensors(&mut buf, &digest, &tensors).unwrap();
        assert_eq!(&buf[0..4], b"QGCN");

        let (hdr, loaded) = read_named_tensors(&buf[..]).unwrap();
        assert_eq!(hdr.config_digest, digest);
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "a.w");
        assert!(loaded[0].1.bit_eq(&tensors[0].1));
        // rank-1 tensor comes back with its dims4 padding
        assert_eq!(loaded[1].1.shape(), &[1, 1, 1, 3]);
        assert_eq!(loaded[1].1.data(), tensors[1].1.data());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = b"NOPE\x01\x00\x00\x00".to_vec();
        assert!(read_named_tensors(&bytes[..]).is_err());

        let tensors = vec![("x".to_string(), Tensor::new(&[2], vec![1.0f32, 2.0]).unwrap())];
        let mut buf = Vec::new();
        write_named_tensors(&mut buf, &[0u8; 32], &tensors).unwrap();
        assert!(read_named_tensors(&buf[..buf.len() - 3]).is_err());
    }
}
