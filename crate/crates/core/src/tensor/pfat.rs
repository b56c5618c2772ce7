//! Named-tensor container file, used by checkpoints and golden tests.
//!
//! Layout (all integers little-endian): magic `PFAT`, version u32, tensor
//! count u32; per tensor: name length u32 + UTF-8 name, rank u32, one u32
//! per dim, a dtype tag byte (0 = f32, 1 = f64), then raw little-endian
//! element data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::{numel_of, Tensor};

pub const MAGIC: [u8; 4] = *b"PFAT";
pub const VERSION: u32 = 1;

/// Element storage for one container entry.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One serialized tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl NamedTensor {
    pub fn from_tensor<T: Scalar>(name: &str, t: &Tensor<T>) -> Self {
        let data = match T::DTYPE {
            Dtype::F32 => TensorData::F32(t.data().iter().map(|v| v.as_f64() as f32).collect()),
            Dtype::F64 => TensorData::F64(t.data().iter().map(|v| v.as_f64()).collect()),
        };
        NamedTensor {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data,
        }
    }

    /// Reconstructs a tensor at the precision the entry was stored with;
    /// a dtype mismatch is an error so checkpoints cannot silently change
    /// precision mid-run.
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        if self.data.dtype() != T::DTYPE {
            return Err(Error::Checkpoint(format!(
                "tensor '{}' stored as {} but requested as {}",
                self.name,
                self.data.dtype(),
                T::DTYPE
            )));
        }
        let vals: Vec<T> = match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::from_f64(x)).collect(),
        };
        Tensor::from_vec(vals, &self.shape)
    }

    /// Single stored value regardless of precision, for metadata entries.
    pub fn scalar_value(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Checkpoint(format!(
                "tensor '{}' is not a scalar (has {} elements)",
                self.name,
                self.data.len()
            )));
        }
        Ok(match &self.data {
            TensorData::F32(v) => v[0] as f64,
            TensorData::F64(v) => v[0],
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serializes entries in the order given; byte output is a pure function
/// of the input, which is what checkpoint determinism tests rely on.
pub fn to_bytes(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    let count = u32::try_from(tensors.len())
        .map_err(|_| Error::invalid("too many tensors for container"))?;
    put_u32(&mut out, count);
    for t in tensors {
        let name_bytes = t.name.as_bytes();
        let name_len = u32::try_from(name_bytes.len())
            .map_err(|_| Error::invalid(format!("tensor name too long: {}", t.name)))?;
        put_u32(&mut out, name_len);
        out.extend_from_slice(name_bytes);
        let rank = u32::try_from(t.shape.len())
            .map_err(|_| Error::invalid("tensor rank too large for container"))?;
        put_u32(&mut out, rank);
        for &d in &t.shape {
            let dim = u32::try_from(d)
                .map_err(|_| Error::invalid(format!("dim {d} too large for container")))?;
            put_u32(&mut out, dim);
        }
        if numel_of(&t.shape) != t.data.len() {
            return Err(Error::invalid(format!(
                "tensor '{}': shape {:?} does not match {} elements",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        out.push(t.data.dtype().tag());
        match &t.data {
            TensorData::F32(v) => {
                for &x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::F64(v) => {
                for &x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "container truncated while reading {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a PFAT container".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported container version {version} (expected {VERSION})"
        )));
    }
    let count = cur.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(count as usize);
    for i in 0..count {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint(format!("tensor {i}: name is not UTF-8")))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32("dim")? as usize);
        }
        let numel = numel_of(&shape);
        let tag = cur.take(1, "dtype tag")?[0];
        let dtype = Dtype::from_tag(tag).ok_or_else(|| {
            Error::Checkpoint(format!("tensor '{name}': unknown dtype tag {tag}"))
        })?;
        let raw = cur.take(numel * dtype.size_bytes(), "element data")?;
        let data = match dtype {
            Dtype::F32 => TensorData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            Dtype::F64 => TensorData::F64(
                raw.chunks_exact(8)
                    .map(|c| {
                        f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
                    })
                    .collect(),
            ),
        };
        tensors.push(NamedTensor { name, shape, data });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - cur.pos
        )));
    }
    Ok(tensors)
}

pub fn save(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let bytes = to_bytes(tensors)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<NamedTensor>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
