//! Feature matrix files: `"XDAF" | u32 version | u32 T | u32 D | T·D f32`,
//! little-endian, row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Tensor;

pub const FEATURE_MAGIC: [u8; 4] = *b"XDAF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_features(features: &Tensor) -> Result<Vec<u8>> {
    let t = u32::try_from(features.rows()).map_err(|_| Error::contract("too many frames"))?;
    let d = u32::try_from(features.cols()).map_err(|_| Error::contract("feature dim too large"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * features.len());
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for &v in features.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

fn header(bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != FEATURE_MAGIC {
            return Err(bad_magic(bytes));
        }
        return Err(Error::Truncated {
            what: "feature file",
            detail: format!("{} bytes is shorter than the header", bytes.len()),
        });
    }
    if bytes[..4] != FEATURE_MAGIC {
        return Err(bad_magic(bytes));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(Error::BadVersion {
            what: "feature file",
            expected: FEATURE_VERSION,
            found: version,
        });
    }
    Ok((word(8) as usize, word(12) as usize))
}

fn bad_magic(bytes: &[u8]) -> Error {
    let mut found = [0u8; 4];
    found.copy_from_slice(&bytes[..4]);
    Error::BadMagic {
        what: "feature file",
        expected: FEATURE_MAGIC,
        found,
    }
}

pub fn decode_features(bytes: &[u8]) -> Result<Tensor> {
    let (t, d) = header(bytes)?;
    if t == 0 || d == 0 {
        return Err(Error::Malformed {
            what: "feature file",
            detail: format!("empty matrix {t}×{d}"),
        });
    }
    let payload = &bytes[HEADER_LEN..];
    let need = t * d * 4;
    if payload.len() != need {
        return Err(Error::Truncated {
            what: "feature file",
            detail: format!("header declares {t}×{d} ({need} bytes), payload has {}", payload.len()),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Tensor::from_vec(&[t, d], data)
}

pub fn write_features(path: &Path, features: &Tensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_features(features)?).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

/// Reads only the `(frames, dim)` header.
pub fn read_feature_shape(path: &Path) -> Result<(usize, usize)> {
    use std::io::Read;
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    f.by_ref()
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    header(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor {
        Tensor::from_vec(&[3, 2], vec![0.5, -1.25, 3.0, 0.0, f64::from(0.1f32), -7.5]).unwrap()
    }

    #[test]
    fn round_trip_bit_equal() {
        let x = sample();
        let y = decode_features(&encode_features(&x).unwrap()).unwrap();
        assert_eq!(x.dims(), y.dims());
        for (a, b) in x.data().iter().zip(y.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_errors() {
        let good = encode_features(&sample()).unwrap();
        let mut bad = good.clone();
        bad[1] = b'Z';
        assert!(matches!(decode_features(&bad), Err(Error::BadMagic { .. })));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_features(&bad), Err(Error::BadVersion { found: 9, .. })));
        let mut bad = good.clone();
        bad[8] = 4; // declares 4 frames, payload holds 3
        assert!(matches!(decode_features(&bad), Err(Error::Truncated { .. })));
        assert!(matches!(decode_features(&good[..good.len() - 4]), Err(Error::Truncated { .. })));
        assert!(matches!(decode_features(&good[..10]), Err(Error::Truncated { .. })));
    }
}
