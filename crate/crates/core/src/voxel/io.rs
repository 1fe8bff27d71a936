//! Flat little-endian `f32` point files: repeating `(x, y, z, r)` records,
//! no header.

use std::fs;
use std::path::Path;

use super::grid::Point;
use crate::error::{Error, Result};

pub fn decode_points(bytes: &[u8]) -> Result<Vec<Point>> {
    if !bytes.len().is_multiple_of(16) {
        return Err(Error::InvalidInput(format!(
            "point file length {} is not a multiple of 16 bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
            Point::new(f(0), f(1), f(2), f(3))
        })
        .collect())
}

pub fn encode_points(points: &[Point]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * 16);
    for p in points {
        for v in [p.x, p.y, p.z, p.r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_points(&bytes)
}

pub fn write_points(path: impl AsRef<Path>, points: &[Point]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_points(points)).map_err(|e| Error::io(path, e))
}
