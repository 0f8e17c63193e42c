//! Binary checkpoint: a fixed header followed by named `f32` arrays.
//!
//! ```text
//! magic "OPRECKPT" | format u32 | arch hash [u8; 32] | version u64
//! | optimizer steps u64 | count u32
//! | count x (name_len u32 | name | rows u32 | cols u32 | rows*cols f32)
//! ```
//! All integers and floats are little-endian.

use super::{ParameterStore, Tensor};
use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"OPRECKPT";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch_hash: [u8; 32],
    pub version: u64,
    pub optimizer_steps: u64,
    pub arrays: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_store(arch_hash: [u8; 32], store: &ParameterStore<f32>) -> Self {
        Checkpoint {
            arch_hash,
            version: store.version(),
            optimizer_steps: 0,
            arrays: store.iter().map(|(k, v)| (k.clone(), (**v).clone())).collect(),
        }
    }

    /// Arrays whose names do not start with `prefix` are skipped.
    pub fn to_store(&self, prefix: &str) -> Result<ParameterStore<f32>> {
        let mut store = ParameterStore::new();
        for (name, t) in &self.arrays {
            if let Some(stripped) = name.strip_prefix(prefix) {
                store.insert(stripped, t.clone())?;
            }
        }
        store.set_version(self.version);
        Ok(store)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&CHECKPOINT_FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&self.arch_hash)?;
        out.write_all(&self.version.to_le_bytes())?;
        out.write_all(&self.optimizer_steps.to_le_bytes())?;
        out.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, t) in &self.arrays {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(t.rows() as u32).to_le_bytes())?;
            out.write_all(&(t.cols() as u32).to_le_bytes())?;
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let format = read_u32(&mut input)?;
        if format != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint format {format}")));
        }
        let mut arch_hash = [0u8; 32];
        input.read_exact(&mut arch_hash)?;
        let version = read_u64(&mut input)?;
        let optimizer_steps = read_u64(&mut input)?;
        let count = read_u32(&mut input)? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(&mut input)? as usize;
            let mut name = vec![0u8; len];
            input.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("array name is not UTF-8".into()))?;
            let rows = read_u32(&mut input)? as usize;
            let cols = read_u32(&mut input)? as usize;
            let mut raw = vec![0u8; rows * cols * 4];
            input.read_exact(&mut raw)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            arrays.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        Ok(Checkpoint { arch_hash, version, optimizer_steps, arrays })
    }

    /// Writes through a temporary file and renames, so readers never see a
    /// partial checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        {
            let f = std::fs::File::create(&tmp)?;
            self.write_to(std::io::BufWriter::new(f))?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|_| Error::Missing(path.to_path_buf()))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
