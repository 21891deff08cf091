//! Parameter checkpoint file: magic "QDL1", then one record per named
//! tensor — u32 name length, UTF-8 name, u32 rank, u32 dims, raw
//! little-endian f64 values. The seed travels as a leading "meta.seed"
//! record so a checkpoint reproduces its `ModelParams` bit-for-bit.

use std::io::{Read, Write};
use std::path::Path;

use autodiff::Tensor;

use crate::error::{QnnError, Result};
use crate::model::ModelParams;

const MAGIC: &[u8; 4] = b"QDL1";
const SEED_NAME: &str = "meta.seed";

pub fn save_qdl1(path: &Path, params: &ModelParams) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    write_record(&mut out, SEED_NAME, &[1], &[f64::from_bits(params.seed)]);
    for (name, tensor) in params.names.iter().zip(&params.tensors) {
        write_record(&mut out, name, tensor.shape(), tensor.data());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_qdl1(path: &Path) -> Result<ModelParams> {
    let err = |msg: &str| QnnError::Checkpoint { path: path.display().to_string(), msg: msg.into() };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(err("missing QDL1 magic"));
    }
    let mut pos = 4usize;
    let mut seed = 0u64;
    let mut names = Vec::new();
    let mut tensors = Vec::new();
    while pos < bytes.len() {
        let (name, shape, data, next) = read_record(&bytes, pos)
            .ok_or_else(|| err("truncated or corrupt record"))?;
        pos = next;
        if name == SEED_NAME {
            if data.len() != 1 {
                return Err(err("malformed meta.seed record"));
            }
            seed = data[0].to_bits();
        } else {
            names.push(name);
            tensors.push(Tensor::new(shape, data).map_err(|_| err("shape/data mismatch"))?);
        }
    }
    Ok(ModelParams { names, tensors, seed })
}

fn write_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_record(bytes: &[u8], mut pos: usize) -> Option<(String, Vec<usize>, Vec<f64>, usize)> {
    let u32_at = |p: usize| -> Option<u32> {
        bytes.get(p..p + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    };
    let name_len = u32_at(pos)? as usize;
    pos += 4;
    let name = String::from_utf8(bytes.get(pos..pos + name_len)?.to_vec()).ok()?;
    pos += name_len;
    let rank = u32_at(pos)? as usize;
    pos += 4;
    if rank > 8 {
        return None;
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u32_at(pos)? as usize);
        pos += 4;
    }
    let numel: usize = shape.iter().product();
    let raw = bytes.get(pos..pos + numel * 8)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    pos += numel * 8;
    Some((name, shape, data, pos))
}
