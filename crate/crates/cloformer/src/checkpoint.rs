//! Checkpoint persistence: an ordered parameter manifest plus a raw
//! little-endian weight blob, with the build configuration embedded as
//! text. Round trips are bit-exact.
//!
//! Layout (all integers little-endian):
//!   magic "CLCK" | u16 version | u32 spec-text len | spec text
//!   | u32 entry count
//!   | per entry: u16 name len | name | u8 dtype | 4 x u64 dims | u64 offset
//!   | u64 blob len | blob

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{emit_config, parse_config};
use crate::error::{Error, Result};
use crate::model::{build_model, Model, VariantSpec};
use crate::tensor::{Dtype, Elem};
#[cfg(test)]
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CLCK";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub dtype: Dtype,
    pub dims: [usize; 4],
    pub offset: u64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated while reading {what}"
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Serialize a model into the checkpoint byte format.
pub fn checkpoint_bytes<E: Elem>(m: &Model<E>) -> Vec<u8> {
    let spec_text = emit_config(&m.spec);
    let mut entries: Vec<(String, [usize; 4], u64)> = Vec::new();
    let mut blob = Vec::new();
    m.visit(&mut |name, t| {
        entries.push((name.to_string(), t.dims(), blob.len() as u64));
        for &v in t.data() {
            v.to_le(&mut blob);
        }
    });
    let mut out = Vec::with_capacity(blob.len() + 4096);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec_text.len() as u32).to_le_bytes());
    out.extend_from_slice(spec_text.as_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, dims, offset) in &entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(E::DTYPE as u8);
        for d in dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
    }
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(&blob);
    out
}

/// Parse checkpoint bytes back into a model, validating the manifest
/// against the shapes the embedded spec dictates.
pub fn model_from_checkpoint_bytes<E: Elem>(bytes: &[u8]) -> Result<Model<E>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let spec_len = r.u32("spec length")? as usize;
    let spec_text = std::str::from_utf8(r.take(spec_len, "spec text")?)
        .map_err(|_| Error::Format("spec text is not valid UTF-8".into()))?
        .to_string();
    let spec = parse_config(&spec_text, &VariantSpec::xxs())?;
    let n_entries = r.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(n_entries);
    let mut prev_end = 0u64;
    for i in 0..n_entries {
        let name_len = r.u16("entry name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "entry name")?)
            .map_err(|_| Error::Format(format!("entry {i} name is not valid UTF-8")))?
            .to_string();
        let dtype = match r.take(1, "dtype")?[0] {
            1 => Dtype::F32,
            2 => Dtype::F64,
            d => return Err(Error::Format(format!("'{name}': unknown dtype tag {d}"))),
        };
        if dtype != E::DTYPE {
            return Err(Error::Format(format!(
                "'{name}': checkpoint dtype {dtype:?} does not match requested element type"
            )));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            *d = r.u64("dims")? as usize;
        }
        let offset = r.u64("offset")?;
        if offset != prev_end {
            return Err(Error::Format(format!(
                "'{name}': offset {offset} is not contiguous (expected {prev_end})"
            )));
        }
        prev_end = offset + (dims.iter().product::<usize>() * std::mem::size_of::<E>()) as u64;
        entries.push(ManifestEntry {
            name,
            dtype,
            dims,
            offset,
        });
    }
    let blob_len = r.u64("blob length")? as usize;
    if blob_len as u64 != prev_end {
        return Err(Error::Format(format!(
            "blob length {blob_len} disagrees with manifest extent {prev_end}"
        )));
    }
    let blob = r.take(blob_len, "weight blob")?;

    let mut model = build_model::<E>(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
    let elem = std::mem::size_of::<E>();
    let mut idx = 0;
    let mut failure: Option<Error> = None;
    model.visit_mut(&mut |name, t| {
        if failure.is_some() {
            return;
        }
        let Some(e) = entries.get(idx) else {
            failure = Some(Error::Format(format!(
                "manifest ends before parameter '{name}'"
            )));
            return;
        };
        if e.name != name {
            failure = Some(Error::Format(format!(
                "manifest entry '{}' where spec expects '{name}'",
                e.name
            )));
            return;
        }
        if e.dims != t.dims() {
            failure = Some(Error::Format(format!(
                "'{name}': manifest dims {:?} do not match spec dims {:?}",
                e.dims,
                t.dims()
            )));
            return;
        }
        let start = e.offset as usize;
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v = E::read_le(&blob[start + i * elem..start + (i + 1) * elem]);
        }
        idx += 1;
    });
    if let Some(err) = failure {
        return Err(err);
    }
    if idx != entries.len() {
        return Err(Error::Format(format!(
            "manifest has {} extra entries beyond the spec's parameters",
            entries.len() - idx
        )));
    }
    Ok(model)
}

pub fn save_checkpoint<E: Elem>(m: &Model<E>, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(m))?;
    Ok(())
}

pub fn load_checkpoint<E: Elem>(path: &Path) -> Result<Model<E>> {
    let bytes = std::fs::read(path)?;
    model_from_checkpoint_bytes(&bytes)
}
