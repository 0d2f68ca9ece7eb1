//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "IU4R" | version u32 | model kind u32 | digest len u32 | digest bytes
//! | array count u32
//! | per array: name len u32 | name bytes | rank u32 | dims u64 x rank | f32 values, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use super::jsonl::{create, open};
use crate::error::{Error, Result};
use crate::features::FeatureVocab;
use crate::models::{param_layout, ModelKind, Network, NetworkConfig};
use crate::numeric::{DenseMatrix, ModelParams};

pub const MAGIC: &[u8; 4] = b"IU4R";
pub const FORMAT_VERSION: u32 = 1;
const MAX_NAME: usize = 1 << 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub kind: ModelKind,
    pub config_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_checkpoint(
    w: &mut impl Write,
    kind: ModelKind,
    digest: &str,
    params: &ModelParams,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, kind.code())?;
    put_u32(w, digest.len() as u32)?;
    w.write_all(digest.as_bytes())?;
    put_u32(w, params.len() as u32)?;
    for a in params.arrays() {
        put_u32(w, a.name.len() as u32)?;
        w.write_all(a.name.as_bytes())?;
        put_u32(w, 2)?;
        w.write_all(&(a.value.rows() as u64).to_le_bytes())?;
        w.write_all(&(a.value.cols() as u64).to_le_bytes())?;
        for &x in a.value.data() {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        if n > MAX_NAME {
            return Err(Error::Checkpoint(format!(
                "{what} length {n} is implausible"
            )));
        }
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<StoredArray>)> {
    let mut c = Cursor { buf: bytes };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not an IU4R checkpoint".into()));
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let kind = ModelKind::from_code(c.u32("model kind")?)?;
    let config_digest = c.string("digest")?;
    let n = c.u32("array count")? as usize;
    let mut arrays = Vec::new();
    for _ in 0..n {
        let name = c.string("array name")?;
        let rank = c.u32("rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Checkpoint(format!("array {name} has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u64("dims")? as usize);
        }
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&l| l.checked_mul(4).is_some_and(|b| b <= c.buf.len()))
            .ok_or_else(|| {
                Error::Checkpoint(format!("array {name} dims {dims:?} exceed the file"))
            })?;
        let raw = c.take(len * 4, "values")?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        arrays.push(StoredArray { name, dims, values });
    }
    if !c.buf.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", c.buf.len())));
    }
    Ok((
        CheckpointHeader {
            version,
            kind,
            config_digest,
        },
        arrays,
    ))
}

pub fn save(path: &Path, net: &Network, digest: &str) -> Result<()> {
    let mut w = create(path)?;
    write_checkpoint(&mut w, net.kind, digest, &net.params)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Rebuilds a network from stored arrays. A digest different from
/// `expected_digest` is logged, not rejected.
pub fn load(
    path: &Path,
    cfg: &NetworkConfig,
    vocab: &FeatureVocab,
    expected_digest: &str,
) -> Result<Network> {
    let mut bytes = Vec::new();
    open(path, "train")?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let (header, arrays) = read_checkpoint(&bytes)?;
    if header.config_digest != expected_digest {
        warn!(
            "{} was written under config {} but the current config is {}",
            path.display(),
            header.config_digest,
            expected_digest
        );
    }
    let layout = param_layout(header.kind, cfg, vocab);
    let mut params = ModelParams::new();
    for a in arrays {
        let (_, pk, _, _) = layout
            .iter()
            .find(|l| l.0 == a.name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected array {}", a.name)))?;
        let (rows, cols) = match a.dims[..] {
            [n] => (1, n),
            [r, c] => (r, c),
            _ => {
                return Err(Error::Checkpoint(format!(
                    "array {} has rank {}",
                    a.name,
                    a.dims.len()
                )))
            }
        };
        let m = DenseMatrix::from_vec(rows, cols, a.values.iter().map(|&x| x as f64).collect())?;
        params.add(a.name, *pk, m)?;
    }
    Network::from_params(header.kind, cfg, vocab, params)
}
