//! Grayscale rasters and the geometric primitives used during preprocessing.
//!
//! Intensities are `f64` in row-major order. Images produced by loading,
//! normalization, resampling and the simulator stay inside `[0, 1]`; outputs
//! of a separator may leave that interval and are only required to be finite.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageReader};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite intensity at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(col, row)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Reads with clamp-to-edge semantics for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, col: isize, row: isize) -> f64 {
        let c = col.clamp(0, self.width as isize - 1) as usize;
        let r = row.clamp(0, self.height as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn same_dims(&self, other: &ImageGray) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ImageGray> {
        ImageGray::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Copies out the `width x height` region starting at `(col, row)`,
    /// clamping reads that fall outside the image.
    pub fn crop_clamped(&self, col: isize, row: isize, width: usize, height: usize) -> Result<ImageGray> {
        ImageGray::from_fn(width, height, |c, r| {
            self.get_clamped(col + c as isize, row + r as isize)
        })
    }
}

/// Sample storage depth for [`save_grayscale_with_depth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_level(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

pub fn load_grayscale(path: &Path) -> Result<ImageGray> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "unrecognized file contents in {}",
                path.display()
            )))
        }
    }
    let decoded = reader.decode().map_err(|e| Error::Codec(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .collect(),
        other => return Err(Error::NotGrayscale(format!("{:?}", other.color()))),
    };
    ImageGray::new(w, h, data)
}

/// Saves 8-bit; see [`save_grayscale_with_depth`].
pub fn save_grayscale(image: &ImageGray, path: &Path) -> Result<()> {
    save_grayscale_with_depth(image, path, BitDepth::Eight)
}

/// Writes PNG or binary PGM (chosen by extension). Values are clipped to
/// `[0, 1]` and rounded to the nearest level.
pub fn save_grayscale_with_depth(image: &ImageGray, path: &Path, depth: BitDepth) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let max = depth.max_level();
    let levels: Vec<u16> = image
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * max).round() as u16)
        .collect();
    let (w, h) = (image.width as u32, image.height as u32);
    match ext.as_str() {
        "png" => {
            let dynimg = match depth {
                BitDepth::Eight => DynamicImage::ImageLuma8(
                    image::GrayImage::from_raw(w, h, levels.iter().map(|&v| v as u8).collect())
                        .expect("buffer length matches dimensions"),
                ),
                BitDepth::Sixteen => DynamicImage::ImageLuma16(
                    image::ImageBuffer::from_raw(w, h, levels).expect("buffer length matches dimensions"),
                ),
            };
            dynimg
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| match e {
                    image::ImageError::IoError(io) => Error::io(path, io),
                    other => Error::Codec(other.to_string()),
                })
        }
        "pgm" => write_pgm(path, w, h, &levels, depth),
        other => Err(Error::UnsupportedFormat(format!("extension `{other}`"))),
    }
}

fn write_pgm(path: &Path, w: u32, h: u32, levels: &[u16], depth: BitDepth) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let max = depth.max_level() as u32;
    let mut bytes = format!("P5\n{w} {h}\n{max}\n").into_bytes();
    match depth {
        BitDepth::Eight => bytes.extend(levels.iter().map(|&v| v as u8)),
        BitDepth::Sixteen => bytes.extend(levels.iter().flat_map(|v| v.to_be_bytes())),
    }
    out.write_all(&bytes)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn flip_horizontal(image: &ImageGray) -> ImageGray {
    let w = image.width;
    let data = image
        .data
        .chunks_exact(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    ImageGray {
        width: w,
        height: image.height,
        data,
    }
}

/// Rotates by 90 degrees clockwise: output `(col, row)` reads input
/// `(row, height_in - 1 - col)`.
pub fn rotate_90_cw(image: &ImageGray) -> ImageGray {
    let (w, h) = (image.width, image.height);
    let mut data = Vec::with_capacity(w * h);
    for row in 0..w {
        for col in 0..h {
            data.push(image.get(row, h - 1 - col));
        }
    }
    ImageGray {
        width: h,
        height: w,
        data,
    }
}

/// Joint affine normalization: the darkest pixel of the pair maps to 0 and the
/// lightest to 1, with the same map applied to both images.
pub fn normalize_pair(a: &ImageGray, b: &ImageGray) -> Result<(ImageGray, ImageGray)> {
    a.same_dims(b)?;
    let (lo_a, hi_a) = a.min_max();
    let (lo_b, hi_b) = b.min_max();
    let (lo, hi) = (lo_a.min(lo_b), hi_a.max(hi_b));
    if hi <= lo {
        return Err(Error::Degenerate(
            "image pair is jointly constant; normalization undefined".into(),
        ));
    }
    let span = hi - lo;
    // pins the extremes so that a second pass is the exact identity
    let norm = |v: f64| {
        if v == lo {
            0.0
        } else if v == hi {
            1.0
        } else {
            ((v - lo) / span).clamp(0.0, 1.0)
        }
    };
    Ok((a.map(norm)?, b.map(norm)?))
}

/// Paired intensities drawn from co-registered images, with the pixel
/// locations they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPairSet {
    pub samples: Vec<(f64, f64)>,
    /// `(row, col)` of each sample.
    pub indices: Vec<(usize, usize)>,
    pub seed: u64,
}

impl PixelPairSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same locations, intensities re-read from another pair of images.
    pub fn resample_from(&self, a: &ImageGray, b: &ImageGray) -> Result<PixelPairSet> {
        a.same_dims(b)?;
        let samples = self
            .indices
            .iter()
            .map(|&(r, c)| (a.get(c, r), b.get(c, r)))
            .collect();
        Ok(PixelPairSet {
            samples,
            indices: self.indices.clone(),
            seed: self.seed,
        })
    }
}

/// Draws `n` distinct pixel locations uniformly at random, avoiding the
/// locations in `exclude`. Deterministic given `seed`.
pub fn sample_pixel_pairs(
    a: &ImageGray,
    b: &ImageGray,
    n: usize,
    seed: u64,
    exclude: Option<&PixelPairSet>,
) -> Result<PixelPairSet> {
    a.same_dims(b)?;
    let w = a.width;
    let excluded: HashSet<usize> = exclude
        .map(|set| set.indices.iter().map(|&(r, c)| r * w + c).collect())
        .unwrap_or_default();
    let mut candidates: Vec<usize> = (0..a.len()).filter(|i| !excluded.contains(i)).collect();
    if n > candidates.len() {
        return Err(Error::TooManySamples {
            requested: n,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
    }
    candidates.truncate(n);
    let indices: Vec<(usize, usize)> = candidates.iter().map(|&i| (i / w, i % w)).collect();
    let samples = candidates.iter().map(|&i| (a.data[i], b.data[i])).collect();
    Ok(PixelPairSet {
        samples,
        indices,
        seed,
    })
}

/// Positive rational resampling factor `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    num: u32,
    den: u32,
}

impl Scale {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidParameter(format!(
                "scale {num}/{den} must be positive"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn integer(factor: u32) -> Result<Self> {
        Self::new(factor, 1)
    }

    pub fn inverse(self) -> Self {
        Self {
            num: self.den,
            den: self.num,
        }
    }

    pub fn is_identity(self) -> bool {
        self.num == self.den
    }

    fn output_len(self, len: usize) -> usize {
        let scaled = len as u64 * u64::from(self.num);
        ((scaled + u64::from(self.den) / 2) / u64::from(self.den)) as usize
    }

    fn source_coord(self, dst: usize) -> f64 {
        dst as f64 * f64::from(self.den) / f64::from(self.num)
    }
}

/// Catmull-Rom (a = -0.5) weights for the taps at offsets -1, 0, 1, 2 around
/// fractional phase `t` in `[0, 1)`.
pub fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

fn taps_for(scale: Scale, in_len: usize, out_len: usize) -> Vec<Taps> {
    (0..out_len)
        .map(|dst| {
            let src = scale.source_coord(dst);
            let base = src.floor();
            let weight = catmull_rom_weights(src - base);
            let base = base as isize;
            let mut index = [0usize; 4];
            for (k, slot) in index.iter_mut().enumerate() {
                *slot = (base - 1 + k as isize).clamp(0, in_len as isize - 1) as usize;
            }
            Taps { index, weight }
        })
        .collect()
}

/// Separable bicubic resampling. Output sample `i` is taken at source
/// coordinate `i / factor` (grid origins aligned), so integer up/down factors
/// invert each other exactly. Borders clamp; the result is clipped to `[0, 1]`.
pub fn bicubic_resample(image: &ImageGray, factor: Scale) -> Result<ImageGray> {
    if factor.is_identity() {
        return Ok(image.clone());
    }
    let out_w = factor.output_len(image.width);
    let out_h = factor.output_len(image.height);
    if out_w == 0 || out_h == 0 {
        return Err(Error::Degenerate(format!(
            "resampling {}x{} by {}/{} gives an empty image",
            image.width, image.height, factor.num, factor.den
        )));
    }
    let col_taps = taps_for(factor, image.width, out_w);
    let row_taps = taps_for(factor, image.height, out_h);

    let mut horizontal = vec![0.0; out_w * image.height];
    horizontal
        .par_chunks_mut(out_w)
        .zip(image.data.par_chunks(image.width))
        .for_each(|(out_row, in_row)| {
            for (o, t) in out_row.iter_mut().zip(&col_taps) {
                *o = (0..4).map(|k| t.weight[k] * in_row[t.index[k]]).sum();
            }
        });

    let mut data = vec![0.0; out_w * out_h];
    data.par_chunks_mut(out_w)
        .zip(row_taps.par_iter())
        .for_each(|(out_row, t)| {
            for (col, o) in out_row.iter_mut().enumerate() {
                let v: f64 = (0..4)
                    .map(|k| t.weight[k] * horizontal[t.index[k] * out_w + col])
                    .sum();
                *o = v.clamp(0.0, 1.0);
            }
        });
    ImageGray::new(out_w, out_h, data)
}

/// Display adjustment that saturates the darkest and lightest `fraction` of
/// pixels and stretches the rest linearly to `[0, 1]`.
pub fn saturate_tails(image: &ImageGray, fraction: f64) -> Result<ImageGray> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "tail fraction {fraction} outside [0, 0.5)"
        )));
    }
    let mut sorted = image.data.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = (fraction * n as f64).floor() as usize;
    let lo = if k == 0 { sorted[0] } else { sorted[k - 1] };
    let hi = if k == 0 { sorted[n - 1] } else { sorted[n - k] };
    if hi <= lo {
        return image.map(|_| 0.5);
    }
    image.map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
}
