//! Binary checkpoint format.
//!
//! ```text
//! "XDCK" | u32 version | u8 stage | u64 step | u32 tensor count
//! per tensor: u16 name length | name bytes | u8 rank | rank × u32 dims | f32 data
//! 16-byte config fingerprint
//! ```
//!
//! All integers and floats are little-endian. Values are stored as `f32`, so
//! a save/load round trip is bit-exact for parameters that already live on
//! the `f32` grid (which the optimizer maintains).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Fingerprint, Stage};
use crate::numkit::{ParamMap, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"XDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Tensor-name prefix for optimizer moments stored alongside parameters.
pub const OPTIM_PREFIX: &str = "optim/";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub step: u64,
    pub tensors: ParamMap,
    pub fingerprint: Fingerprint,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.stage.tag());
        out.extend_from_slice(&self.step.to_le_bytes());
        let count = u32::try_from(self.tensors.len()).map_err(|_| Error::contract("too many tensors"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::contract(format!("tensor name too long: {name}")))?;
            let rank = u8::try_from(t.rank()).map_err(|_| Error::contract("tensor rank too large"))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(rank);
            for &d in t.dims() {
                let d = u32::try_from(d).map_err(|_| Error::contract("tensor dimension too large"))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&self.fingerprint.0);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.array::<4>()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                what: "checkpoint",
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::BadVersion {
                what: "checkpoint",
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let tag = r.array::<1>()?[0];
        let stage = Stage::from_tag(tag).ok_or_else(|| Error::Malformed {
            what: "checkpoint",
            detail: format!("unknown stage tag {tag}"),
        })?;
        let step = u64::from_le_bytes(r.array::<8>()?);
        let count = r.u32()?;
        let mut tensors = ParamMap::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.array::<2>()?) as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Malformed {
                what: "checkpoint",
                detail: "tensor name is not UTF-8".into(),
            })?;
            let rank = r.array::<1>()?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Malformed {
                what: "checkpoint",
                detail: format!("tensor {name} is too large"),
            })?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            let t = Tensor::from_vec(&dims, data).map_err(|e| Error::Malformed {
                what: "checkpoint",
                detail: format!("tensor {name}: {e}"),
            })?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::Malformed {
                    what: "checkpoint",
                    detail: format!("duplicate tensor {name}"),
                });
            }
        }
        let fingerprint = Fingerprint(r.array::<16>()?);
        if r.pos != bytes.len() {
            return Err(Error::Malformed {
                what: "checkpoint",
                detail: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Checkpoint {
            stage,
            step,
            tensors,
            fingerprint,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                what: "checkpoint",
                detail: format!(
                    "needed {n} bytes at offset {}, only {} remain",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            }),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array::<4>()?))
    }
}

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// half-written checkpoint under the final name.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ck.to_bytes()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint, optionally requiring a specific config fingerprint.
pub fn load_checkpoint(path: &Path, expected: Option<Fingerprint>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = Checkpoint::from_bytes(&bytes)?;
    if let Some(fp) = expected {
        if fp != ck.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: fp.to_hex(),
                found: ck.fingerprint.to_hex(),
            });
        }
    }
    Ok(ck)
}
