//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   8 bytes  "FFMLPCK\x01"
//! seed    u64      seed the model was initialized/trained from
//! n       u64      number of layer widths
//! widths  n x u64
//! d       u64      parameter count (must equal the architecture's)
//! params  d x f64  flattened parameters (layer-major, weights then biases)
//! ```
//!
//! Floats are stored by bit pattern, so a round trip is bit-exact.

use std::path::Path;

use crate::error::{Error, Result};

use super::params::{Architecture, MlpParams};

const MAGIC: &[u8; 8] = b"FFMLPCK\x01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let widths = self.params.architecture().widths();
        let d = self.params.param_count();
        let mut out = Vec::with_capacity(8 * (4 + widths.len() + d));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(widths.len() as u64).to_le_bytes());
        for &w in widths {
            out.extend_from_slice(&(w as u64).to_le_bytes());
        }
        out.extend_from_slice(&(d as u64).to_le_bytes());
        for v in self.params.values() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut words = Reader { bytes, pos: 0 };
        if words.take(8)? != MAGIC {
            return Err("not a model checkpoint (bad magic)".into());
        }
        let seed = words.u64()?;
        let n = words.len()?;
        let widths = (0..n)
            .map(|_| words.len())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let arch = Architecture::new(widths).map_err(|e| e.to_string())?;
        let d = words.len()?;
        if d != arch.param_count() {
            return Err(format!(
                "parameter count {d} does not match architecture ({})",
                arch.param_count()
            ));
        }
        let values = (0..d)
            .map(|_| words.u64().map(f64::from_bits))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if words.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - words.pos));
        }
        let params = MlpParams::unflatten(&values, &arch).map_err(|e| e.to_string())?;
        Ok(Self { params, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "truncated checkpoint".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> std::result::Result<usize, String> {
        let v = self.u64()?;
        // Reject sizes that cannot possibly fit in the remaining bytes.
        if v > self.bytes.len() as u64 {
            return Err(format!("implausible length {v}"));
        }
        Ok(v as usize)
    }
}
