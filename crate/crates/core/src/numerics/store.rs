//! Named-tensor store and its binary checkpoint container.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "SSMD"
//! version u32
//! record* until EOF:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   rank     u32
//!   dims     rank x u64
//!   payload  prod(dims) x f64
//! ```
//!
//! Records are written in ascending name order, so identical stores produce
//! identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{CoreError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSMD";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Keyed collection of named tensors: model parameters, feature dumps,
/// masks, the memory bank.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub version: u32,
    entries: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            version: CHECKPOINT_VERSION,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.entries.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_params(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }

    /// Names whose payload differs (or that exist on only one side).
    pub fn diff(&self, other: &ParamStore) -> Vec<String> {
        let mut out = Vec::new();
        for (name, t) in &self.entries {
            match other.entries.get(name) {
                Some(o) if o.shape() == t.shape() && o.data() == t.data() => {}
                _ => out.push(name.clone()),
            }
        }
        for name in other.entries.keys() {
            if !self.entries.contains_key(name) {
                out.push(name.clone());
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| CoreError::Checkpoint("file too short for magic".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CoreError::Checkpoint(format!(
                "bad magic {:?}, expected \"SSMD\"",
                magic
            )));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(CoreError::Checkpoint(format!(
                "unsupported container version {}",
                version
            )));
        }
        let mut store = ParamStore {
            version,
            entries: BTreeMap::new(),
        };
        loop {
            let mut len_buf = [0u8; 4];
            match r.read_exact(&mut len_buf) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let name_len = u32::from_le_bytes(len_buf) as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|e| CoreError::Checkpoint(format!("bad tensor name: {}", e)))?;
            let rank = read_u32(r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            let mut b = [0u8; 8];
            for _ in 0..numel {
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            store.entries.insert(name, Tensor::new(shape, data)?);
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
