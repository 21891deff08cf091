//! Distilled-dataset file: magic "QDD1", version byte, N / channels /
//! height / width / class count (u32 LE), raw little-endian f64 image
//! data, labels as class-index bytes, η̃ (f64 LE), θ₀ seed (u64 LE), and
//! a length-prefixed config echo string. Bit-exact round trip.

use std::io::Read;
use std::path::Path;

use autodiff::Tensor;

use crate::error::{DistillError, Result};
use crate::synthetic::SyntheticDataset;

const MAGIC: &[u8; 4] = b"QDD1";
const VERSION: u8 = 1;

pub fn write_qdd1(
    path: &Path,
    synth: &SyntheticDataset,
    theta0_seed: u64,
    config_echo: &str,
) -> Result<()> {
    let shape = synth.images.shape();
    if shape.len() != 4 {
        return Err(DistillError::BadFile {
            path: path.display().to_string(),
            msg: format!("QDD1 stores [N,c,h,w] images, got shape {shape:?}"),
        });
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for dim in [shape[0], shape[1], shape[2], shape[3], synth.n_classes()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in synth.images.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in synth.class_ids() {
        out.push(c as u8);
    }
    out.extend_from_slice(&synth.eta.to_le_bytes());
    out.extend_from_slice(&theta0_seed.to_le_bytes());
    out.extend_from_slice(&(config_echo.len() as u32).to_le_bytes());
    out.extend_from_slice(config_echo.as_bytes());
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_qdd1(path: &Path) -> Result<(SyntheticDataset, u64, String)> {
    let err = |msg: &str| DistillError::BadFile {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(err("bad QDD1 header"));
    }
    if bytes[4] != VERSION {
        return Err(err("unsupported QDD1 version"));
    }
    let mut pos = 5usize;
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = u32::from_le_bytes(
            bytes.get(pos..pos + 4).ok_or_else(|| err("truncated header"))?.try_into().unwrap(),
        ) as usize;
        pos += 4;
    }
    let [n, c, h, w, k] = dims;
    if k == 0 || n == 0 || n % k != 0 {
        return Err(err("bad sample/class counts"));
    }
    let numel = n * c * h * w;
    let raw = bytes.get(pos..pos + numel * 8).ok_or_else(|| err("truncated image data"))?;
    let data: Vec<f64> =
        raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    pos += numel * 8;
    let class_bytes = bytes.get(pos..pos + n).ok_or_else(|| err("truncated labels"))?.to_vec();
    pos += n;
    let mut labels = vec![0.0; n * k];
    for (i, &cb) in class_bytes.iter().enumerate() {
        if (cb as usize) >= k {
            return Err(err("label byte out of range"));
        }
        labels[i * k + cb as usize] = 1.0;
    }
    let eta = f64::from_le_bytes(
        bytes.get(pos..pos + 8).ok_or_else(|| err("truncated eta"))?.try_into().unwrap(),
    );
    pos += 8;
    let seed = u64::from_le_bytes(
        bytes.get(pos..pos + 8).ok_or_else(|| err("truncated seed"))?.try_into().unwrap(),
    );
    pos += 8;
    let echo_len = u32::from_le_bytes(
        bytes.get(pos..pos + 4).ok_or_else(|| err("truncated config echo"))?.try_into().unwrap(),
    ) as usize;
    pos += 4;
    let echo = String::from_utf8(
        bytes.get(pos..pos + echo_len).ok_or_else(|| err("truncated config echo"))?.to_vec(),
    )
    .map_err(|_| err("config echo is not UTF-8"))?;
    pos += echo_len;
    if pos != bytes.len() {
        return Err(err("trailing bytes after QDD1 payload"));
    }
    let synth = SyntheticDataset {
        images: Tensor::new(vec![n, c, h, w], data)
            .map_err(|e| DistillError::Model(e.to_string()))?,
        labels: Tensor::new(vec![n, k], labels)
            .map_err(|e| DistillError::Model(e.to_string()))?,
        eta,
    };
    Ok((synth, seed, echo))
}
