use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::TrainError;
use crate::autodiff::{ParamStore, Tensor};
use crate::model::{ModNet, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MODN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// First eight bytes (little-endian) of the SHA-256 of a dimension table.
pub fn config_digest(dimension_table: &str) -> u64 {
    let h = Sha256::digest(dimension_table.as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("32-byte digest"))
}

/// Hex SHA-256 of a serialized checkpoint, for comparing runs.
pub fn checkpoint_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_checkpoint<W: Write>(model: &ModNet, mut out: W) -> Result<(), TrainError> {
    let store = model.store();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&config_digest(&model.dimension_table()).to_le_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| TrainError::Malformed(format!("name too long: {}", p.name)))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(p.value.rank() as u8);
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn save_checkpoint(model: &ModNet, path: &Path) -> Result<(), TrainError> {
    let f = fs::File::create(path)?;
    write_checkpoint(model, std::io::BufWriter::new(f))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).ok_or(TrainError::Truncated)?;
        let s = self.data.get(self.pos..end).ok_or(TrainError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TrainError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TrainError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a checkpoint and checks it against `config`'s parameter layout.
/// Nothing is returned unless the whole file is valid.
pub fn read_checkpoint<R: Read>(mut input: R, config: &ModelConfig) -> Result<ModNet, TrainError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { data: &bytes, pos: 0 };
    if c.take(4).map_err(|_| TrainError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(TrainError::BadMagic);
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let digest = c.u64()?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|_| TrainError::Malformed("tensor name is not UTF-8".into()))?;
        let rank = c.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = c.take(n.checked_mul(8).ok_or(TrainError::Truncated)?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(dims, data).map_err(|e| TrainError::Malformed(e.to_string()))?;
        tensors.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(TrainError::Malformed("trailing bytes after last tensor".into()));
    }

    let template = ModNet::new(config.clone(), 0)?;
    let expected = template.dimension_table();
    let found = tensors
        .iter()
        .map(|(n, t)| {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            format!("{} {}", n, dims.join("x"))
        })
        .collect::<Vec<_>>()
        .join("\n");
    if found != expected || digest != config_digest(&expected) {
        return Err(TrainError::DimensionMismatch { found, expected });
    }
    let mut store = ParamStore::new();
    for ((name, t), p) in tensors.into_iter().zip(template.store().iter()) {
        store.add(name, t, p.trainable);
    }
    Ok(ModNet::from_store(config.clone(), store)?)
}

pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<ModNet, TrainError> {
    read_checkpoint(fs::File::open(path)?, config)
}
