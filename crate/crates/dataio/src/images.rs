//! Binary PGM/PPM export of synthetic images, plus readers for
//! round-trip tests.

use std::io::Read;
use std::path::{Path, PathBuf};

use autodiff::Tensor;

use crate::dataset::Normalization;
use crate::error::{DataError, Result};

/// De-normalize, clamp to [0,1], quantize to 8 bits, and write one PGM
/// (1 channel) or PPM (3 channels) per sample as
/// `class{c}_idx{i}.(pgm|ppm)`, plus a `sheet` contact image of all N.
/// Returns the written paths, sheet last.
pub fn export_images(
    images: &Tensor,
    class_ids: &[usize],
    norm: &Normalization,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let shape = images.shape();
    if shape.len() != 4 || (shape[1] != 1 && shape[1] != 3) {
        return Err(DataError::Invalid(format!(
            "export expects [N,1|3,h,w] images, got {shape:?}"
        )));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if class_ids.len() != n {
        return Err(DataError::Invalid(format!(
            "{} class ids for {n} images",
            class_ids.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let ext = if c == 1 { "pgm" } else { "ppm" };

    let quantized: Vec<Vec<u8>> = (0..n).map(|i| quantize(images, norm, i, c, h * w)).collect();
    let mut paths = Vec::with_capacity(n + 1);
    for (i, pixels) in quantized.iter().enumerate() {
        let path = dir.join(format!("class{}_idx{}.{ext}", class_ids[i], i));
        write_netpbm(&path, w, h, c, pixels)?;
        paths.push(path);
    }

    // contact sheet: up to 10 per row
    let cols = n.min(10).max(1);
    let rows = n.div_ceil(cols);
    let (sw, sh) = (cols * w, rows * h);
    let mut sheet = vec![0u8; sw * sh * c];
    for (i, pixels) in quantized.iter().enumerate() {
        let (gr, gc) = (i / cols, i % cols);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    sheet[((gr * h + y) * sw + gc * w + x) * c + ch] = pixels[(y * w + x) * c + ch];
                }
            }
        }
    }
    let sheet_path = dir.join(format!("sheet.{ext}"));
    write_netpbm(&sheet_path, sw, sh, c, &sheet)?;
    paths.push(sheet_path);
    Ok(paths)
}

/// Interleaved 8-bit pixels for sample `i`.
fn quantize(images: &Tensor, norm: &Normalization, i: usize, c: usize, plane: usize) -> Vec<u8> {
    let data = images.data();
    let base = i * c * plane;
    (0..plane)
        .flat_map(|p| {
            (0..c).map(move |ch| {
                let v = norm.denormalize(data[base + ch * plane + p], ch);
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            })
        })
        .collect()
}

fn write_netpbm(path: &Path, w: usize, h: usize, channels: usize, pixels: &[u8]) -> Result<()> {
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a binary PGM (P5) or PPM (P6) file: (width, height, channels,
/// interleaved pixel bytes).
pub fn read_netpbm(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let err = |msg: &str| DataError::BadImageFile { path: path.display().to_string(), msg: msg.into() };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(err("expected P5 or P6 magic")),
    };
    // header: three whitespace-separated integers after the magic
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(err("malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("malformed header integer"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(err("only maxval 255 supported"));
    }
    pos += 1; // exactly one whitespace byte before raster data
    let need = w * h * channels;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| err("truncated raster"))?;
    Ok((w, h, channels, raster.to_vec()))
}
