//! Grayscale Portable Float Map (`Pf`) files for unbounded separator outputs.
//!
//! Header `Pf\n<width> <height>\n-1.0\n` (negative scale: little-endian), then
//! 32-bit floats with the bottom row first.

use std::path::Path;

use anyhow::{bail, Context, Result};
use misep::ImageGray;

pub fn write_pfm(image: &ImageGray, path: &Path) -> Result<()> {
    let (w, h) = (image.width(), image.height());
    let mut bytes = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    bytes.reserve(4 * w * h);
    for row in (0..h).rev() {
        for col in 0..w {
            bytes.extend_from_slice(&(image.get(col, row) as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_pfm(path: &Path) -> Result<ImageGray> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut fields = Vec::new();
    let mut pos = 0;
    // magic, dimensions and scale are whitespace-separated; one whitespace
    // byte follows the scale
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("{}: truncated header", path.display());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "Pf" {
        bail!("{}: not a grayscale float map", path.display());
    }
    let w: usize = fields[1].parse().context("bad width")?;
    let h: usize = fields[2].parse().context("bad height")?;
    let scale: f64 = fields[3].parse().context("bad scale")?;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != 4 * w * h {
        bail!("{}: expected {} data bytes, found {}", path.display(), 4 * w * h, body.len());
    }
    let mut data = vec![0.0; w * h];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, col) = (h - 1 - k / w, k % w);
        data[row * w + col] = f64::from(v);
    }
    Ok(ImageGray::new(w, h, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_values() {
        let img = ImageGray::from_fn(7, 3, |c, r| c as f64 * 0.25 - r as f64 * 1.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pfm");
        write_pfm(&img, &path).unwrap();
        assert_eq!(read_pfm(&path).unwrap(), img);
    }

    #[test]
    fn rejects_truncated_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pfm");
        std::fs::write(&path, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        assert!(read_pfm(&path).is_err());
    }
}
