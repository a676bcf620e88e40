//! Binary checkpoint container.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "HGGNNCKP" | version u32
//! dim u64 | layers u64 | max_len u64 | loss u8 | use_hgnn u8 | current u8 | general u8 | vector_gate u8
//! config: len u32 + UTF-8 text of the resolved run configuration
//! count u32, then per tensor: name len u32 + UTF-8 | rows u64 | cols u64 | rows*cols f64
//! checksum u64 (FNV-1a over every preceding byte)
//! ```

use std::fs;
use std::path::Path;

use hggnn_core::encoder::Paths;
use hggnn_core::model::{param_names, LossMode, ModelConfig, ModelParams, ParamSet};
use hggnn_core::Tensor;

use crate::error::{AppError, Result};

pub const MAGIC: &[u8; 8] = b"HGGNNCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Resolved configuration text of the run that produced the weights.
    pub config_text: String,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    let c = &ck.params.config;
    for v in [c.dim, c.layers, c.max_len] {
        b.extend_from_slice(&(v as u64).to_le_bytes());
    }
    b.push(match c.loss {
        LossMode::Literal => 0,
        LossMode::Categorical => 1,
    });
    for flag in [c.use_hgnn, c.paths.current, c.paths.general, c.vector_gate] {
        b.push(u8::from(flag));
    }
    put_str(&mut b, &ck.config_text);
    let names = ck.params.tensors.names();
    let tensors = ck.params.tensors.iter();
    b.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in names.iter().zip(tensors) {
        put_str(&mut b, name);
        b.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        b.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for x in t.data() {
            b.extend_from_slice(&x.to_bits().to_le_bytes());
        }
    }
    let sum = fnv1a(&b);
    b.extend_from_slice(&sum.to_le_bytes());
    b
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    b.extend_from_slice(&(s.len() as u32).to_le_bytes());
    b.extend_from_slice(s.as_bytes());
}

fn corrupt(why: &str) -> AppError {
    AppError::data(format!("corrupt checkpoint: {why}"))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("size out of range"))
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(corrupt("bad flag byte")),
        }
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(AppError::data("not a checkpoint file (bad magic)"));
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(AppError::data(format!(
            "unsupported checkpoint version {version} (this build reads version {VERSION})"
        )));
    }
    if bytes.len() < 8 + r.pos {
        return Err(corrupt("truncated"));
    }
    let body = &bytes[..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if fnv1a(body) != stored {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }
    r.buf = body;

    let (dim, layers, max_len) = (r.usize()?, r.usize()?, r.usize()?);
    let loss = match r.u8()? {
        0 => LossMode::Literal,
        1 => LossMode::Categorical,
        _ => return Err(corrupt("unknown loss mode")),
    };
    let config = ModelConfig {
        dim,
        layers,
        max_len,
        loss,
        use_hgnn: r.flag()?,
        paths: Paths {
            current: r.flag()?,
            general: r.flag()?,
        },
        vector_gate: r.flag()?,
    };
    let config_text = r.string()?;
    let count = r.u32()? as usize;
    let names = param_names(layers);
    if count != names.len() {
        return Err(corrupt(&format!("{count} tensors, expected {}", names.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for want in &names {
        let name = r.string()?;
        if &name != want {
            return Err(corrupt(&format!("tensor {name:?} where {want:?} was expected")));
        }
        let (rows, cols) = (r.usize()?, r.usize()?);
        let n = rows.checked_mul(cols).ok_or_else(|| corrupt("tensor too large"))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap()))).collect();
        tensors.push(Tensor::new(rows, cols, data).map_err(|e| corrupt(&e.to_string()))?);
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    let params = ModelParams {
        config,
        tensors: ParamSet::from_ordered(layers, tensors).map_err(|e| corrupt(&e.to_string()))?,
    };
    let (users, items) = (params.num_users(), params.num_items());
    params
        .check_shapes(users, items)
        .map_err(|e| corrupt(&e.to_string()))?;
    Ok(Checkpoint { params, config_text })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, encode(ck)).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes)
}

/// Errors unless the checkpoint matches a graph with these sizes.
pub fn check_sizes(params: &ModelParams, num_users: usize, num_items: usize) -> Result<()> {
    if params.num_items() != num_items || params.num_users() != num_users {
        return Err(AppError::data(format!(
            "shape mismatch: checkpoint has {} items and {} users, the data has {} items and {} users",
            params.num_items(),
            params.num_users(),
            num_items,
            num_users
        )));
    }
    Ok(())
}
