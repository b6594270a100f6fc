//! Grayscale image corpora: the IDX container and a synthetic stroke set.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, streams};
use crate::Tensor;

/// Unsigned bytes, three dimensions.
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const HEADER_LEN: usize = 16;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let chunk = bytes.get(offset..offset + 4).ok_or(Error::Truncated {
        offset,
        needed: 4,
        available: bytes.len().saturating_sub(offset),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
}

/// Parse an IDX image file into `[1, rows, cols]` tensors scaled to `[0, 1]`.
pub fn read_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("IDX magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format {
            offset: 8,
            msg: format!("empty image size {rows}x{cols}"),
        });
    }
    let per = rows * cols;
    let needed = count.checked_mul(per).ok_or_else(|| Error::Format {
        offset: 4,
        msg: "image count overflows".into(),
    })?;
    let available = bytes.len() - HEADER_LEN;
    if available < needed {
        return Err(Error::Truncated {
            offset: HEADER_LEN,
            needed,
            available,
        });
    }
    if available > needed {
        return Err(Error::Format {
            offset: HEADER_LEN + needed,
            msg: format!("{} trailing bytes", available - needed),
        });
    }
    bytes[HEADER_LEN..]
        .chunks_exact(per)
        .map(|px| Tensor::new([1, rows, cols], px.iter().map(|&b| b as f64 / 255.0).collect()))
        .collect()
}

pub fn load_idx_images(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_idx_images(&bytes)
}

/// Write `[1, rows, cols]` images with values in `[0, 1]`, rounding each to
/// the nearest byte.
pub fn write_idx_images(mut out: impl Write, images: &[Tensor]) -> Result<()> {
    let first = images.first().ok_or_else(|| Error::EmptyData("no images to write".into()))?;
    let shape = first.shape().to_vec();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::contract(format!("IDX images must be [1, H, W], got {shape:?}")));
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN + images.len() * first.numel());
    bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    for d in [images.len(), shape[1], shape[2]] {
        let d = u32::try_from(d).map_err(|_| Error::contract(format!("dimension {d} too large")))?;
        bytes.extend_from_slice(&d.to_be_bytes());
    }
    for img in images {
        if img.shape() != shape.as_slice() {
            return Err(Error::contract(format!(
                "mixed image shapes {shape:?} and {:?}",
                img.shape()
            )));
        }
        bytes.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    out.write_all(&bytes).map_err(|e| Error::io(Path::new("<writer>"), e))
}

/// Distance from `p` to the segment `a`–`b`.
fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Handwriting-like `[1, side, side]` images: one to three thick quadratic
/// curves with anti-aliased edges, quantized to bytes. Image `i` depends
/// only on `(seed, i)`.
pub fn synthetic_strokes(count: usize, side: usize, seed: u64) -> Vec<Tensor> {
    const SEGMENTS: usize = 16;
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, i as u64, streams::IMAGES);
            let s = side as f64;
            let lo = 0.2 * s;
            let hi = 0.8 * s;
            let mut polyline: Vec<([f64; 2], [f64; 2], f64)> = Vec::new();
            for _ in 0..rng.random_range(1..=3) {
                let mut pt = || [rng.random_range(lo..hi), rng.random_range(lo..hi)];
                let (p0, p1, p2) = (pt(), pt(), pt());
                let width = rng.random_range(0.8..1.6);
                let at = |t: f64| {
                    let u = 1.0 - t;
                    [
                        u * u * p0[0] + 2.0 * u * t * p1[0] + t * t * p2[0],
                        u * u * p0[1] + 2.0 * u * t * p1[1] + t * t * p2[1],
                    ]
                };
                for k in 0..SEGMENTS {
                    let (t0, t1) = (k as f64 / SEGMENTS as f64, (k + 1) as f64 / SEGMENTS as f64);
                    polyline.push((at(t0), at(t1), width));
                }
            }
            let mut data = Vec::with_capacity(side * side);
            for r in 0..side {
                for c in 0..side {
                    let p = [r as f64 + 0.5, c as f64 + 0.5];
                    let ink = polyline
                        .iter()
                        .map(|&(a, b, w)| (w + 0.5 - segment_distance(p, a, b)).clamp(0.0, 1.0))
                        .fold(0.0, f64::max);
                    data.push((ink * 255.0).round() / 255.0);
                }
            }
            Tensor::new([1, side, side], data).expect("square image")
        })
        .collect()
}
