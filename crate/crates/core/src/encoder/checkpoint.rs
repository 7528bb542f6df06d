//! DENSP1 parameter checkpoints.
//!
//! `"DENSP1"`, then `V` and `d` as little-endian u32, then embedding, w1, b1,
//! w2, b2 and head as little-endian f64 in that order.

use std::path::Path;

use super::EncoderParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"DENSP1";

pub fn encode(params: &EncoderParams) -> Vec<u8> {
    let mut buf = Vec::with_capacity(MAGIC.len() + 8 + 8 * params.num_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(params.vocab_size as u32).to_le_bytes());
    buf.extend_from_slice(&(params.dim as u32).to_le_bytes());
    for t in params.tensors() {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &EncoderParams) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "DENSP1".into(),
        });
    }
    let header = MAGIC.len() + 8;
    if bytes.len() < header {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header,
            actual: bytes.len(),
        });
    }
    let v = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let mut params = EncoderParams::zeros(v, d);
    let expected = header + 8 * params.num_params();
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    let mut values = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in params.tensors_mut() {
        for slot in t.iter_mut() {
            *slot = values.next().expect("length checked");
        }
    }
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let params = EncoderParams::init(7, 5, 3).unwrap();
        save_checkpoint(&p, &params).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), params);
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let mut bytes = encode(&EncoderParams::init(7, 5, 3).unwrap());
        bytes.pop();
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Truncated { .. })));
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::BadMagic { .. })));
    }
}
