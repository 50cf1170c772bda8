//! Co-registration of the two acquired sides: an integer coarse shift
//! followed by block-wise local alignment on a 4x upsampled grid.
//!
//! Displacements are stored in units of one upsampled pixel (a quarter of an
//! original pixel at the default factor). A displacement `d` for a block means
//! the block's content is found in the reference at `position + d`; the
//! aligned image is rebuilt by reading the moving image at `position - d`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagery::{bicubic_resample, ImageGray, Scale};

/// Translates content by `(dx, dy)` whole pixels, replicating edge pixels into
/// the vacated margins.
pub fn coarse_shift(image: &ImageGray, dx: i64, dy: i64) -> Result<ImageGray> {
    if dx.unsigned_abs() as usize >= image.width() || dy.unsigned_abs() as usize >= image.height() {
        return Err(Error::InvalidParameter(format!(
            "shift ({dx}, {dy}) not smaller than image {}x{}",
            image.width(),
            image.height()
        )));
    }
    ImageGray::from_fn(image.width(), image.height(), |c, r| {
        image.get_clamped(c as isize - dx as isize, r as isize - dy as isize)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignParams {
    /// Block edge in original pixels.
    pub block_size: usize,
    pub upsample: u32,
    /// Search radius in upsampled pixels.
    pub search_radius: u32,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            block_size: 25,
            upsample: 4,
            search_radius: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockDisplacement {
    pub dx: i32,
    pub dy: i32,
    /// Set when the block carried no alignment signal (zero variance).
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisplacementField {
    pub block_size: usize,
    pub upsample: u32,
    pub search_radius: u32,
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// Row-major over blocks.
    pub displacements: Vec<BlockDisplacement>,
}

#[derive(Serialize, Deserialize)]
struct FieldDocument {
    block_size: usize,
    upsample: u32,
    search_radius: u32,
    blocks_x: usize,
    blocks_y: usize,
    grid: Vec<[i32; 3]>,
}

impl DisplacementField {
    pub fn get(&self, bx: usize, by: usize) -> BlockDisplacement {
        self.displacements[by * self.blocks_x + bx]
    }

    /// Displacement of a block in original-pixel units.
    pub fn displacement_px(&self, bx: usize, by: usize) -> (f64, f64) {
        let d = self.get(bx, by);
        let s = f64::from(self.upsample);
        (f64::from(d.dx) / s, f64::from(d.dy) / s)
    }

    pub fn max_abs(&self) -> i32 {
        self.displacements
            .iter()
            .map(|d| d.dx.abs().max(d.dy.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn flagged_count(&self) -> usize {
        self.displacements.iter().filter(|d| d.flagged).count()
    }

    pub fn to_json(&self) -> String {
        let doc = FieldDocument {
            block_size: self.block_size,
            upsample: self.upsample,
            search_radius: self.search_radius,
            blocks_x: self.blocks_x,
            blocks_y: self.blocks_y,
            grid: self
                .displacements
                .iter()
                .map(|d| [d.dx, d.dy, i32::from(d.flagged)])
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("field document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FieldDocument =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("displacement field: {e}")))?;
        if doc.grid.len() != doc.blocks_x * doc.blocks_y {
            return Err(Error::Config(format!(
                "displacement field grid has {} entries, expected {}",
                doc.grid.len(),
                doc.blocks_x * doc.blocks_y
            )));
        }
        Ok(Self {
            block_size: doc.block_size,
            upsample: doc.upsample,
            search_radius: doc.search_radius,
            blocks_x: doc.blocks_x,
            blocks_y: doc.blocks_y,
            displacements: doc
                .grid
                .into_iter()
                .map(|[dx, dy, f]| BlockDisplacement {
                    dx,
                    dy,
                    flagged: f != 0,
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatch {
    pub dx: i32,
    pub dy: i32,
    /// Zero-mean normalized cross-correlation in `[-1, 1]`.
    pub score: f64,
    pub flagged: bool,
}

impl BlockMatch {
    fn flagged() -> Self {
        Self {
            dx: 0,
            dy: 0,
            score: 0.0,
            flagged: true,
        }
    }
}

// below this sum of squared deviations a window is treated as constant
const FLAT_EPS: f64 = 1e-12;

/// Summed-area tables of values and squared values.
struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Integral {
    fn new(img: &ImageGray) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sum = vec![0.0; stride * (h + 1)];
        let mut sum_sq = vec![0.0; stride * (h + 1)];
        for r in 0..h {
            let (mut row, mut row_sq) = (0.0, 0.0);
            for c in 0..w {
                let v = img.get(c, r);
                row += v;
                row_sq += v * v;
                sum[(r + 1) * stride + c + 1] = sum[r * stride + c + 1] + row;
                sum_sq[(r + 1) * stride + c + 1] = sum_sq[r * stride + c + 1] + row_sq;
            }
        }
        Self { stride, sum, sum_sq }
    }

    fn window(&self, x: usize, y: usize, w: usize, h: usize) -> (f64, f64) {
        let s = self.stride;
        let rect = |t: &[f64]| t[(y + h) * s + x + w] - t[y * s + x + w] - t[(y + h) * s + x] + t[y * s + x];
        (rect(&self.sum), rect(&self.sum_sq))
    }
}

/// A block with its mean removed, ready for correlation.
struct CenteredBlock {
    width: usize,
    height: usize,
    values: Vec<f64>,
    sum_sq: f64,
}

impl CenteredBlock {
    fn from_region(img: &ImageGray, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        let mut values = Vec::with_capacity(w * h);
        for r in y0..y0 + h {
            values.extend_from_slice(&img.data()[r * img.width() + x0..r * img.width() + x0 + w]);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
        let sum_sq = values.iter().map(|v| v * v).sum();
        Self {
            width: w,
            height: h,
            values,
            sum_sq,
        }
    }

    fn is_flat(&self) -> bool {
        self.sum_sq <= FLAT_EPS * self.values.len() as f64
    }
}

/// Searches `reference` (with its integral tables) for `block`; offset
/// `(dx, dy)` places the block's top-left corner at `(origin_x + dx, origin_y + dy)`.
fn search(
    reference: &ImageGray,
    integral: &Integral,
    origin_x: usize,
    origin_y: usize,
    block: &CenteredBlock,
    radius: i32,
) -> BlockMatch {
    if block.is_flat() {
        return BlockMatch::flagged();
    }
    let n = block.values.len() as f64;
    let ref_w = reference.width();
    let data = reference.data();
    let mut best: Option<BlockMatch> = None;
    let mut any_textured = false;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let x = (origin_x as i64 + i64::from(dx)) as usize;
            let y = (origin_y as i64 + i64::from(dy)) as usize;
            let (s, s2) = integral.window(x, y, block.width, block.height);
            let ref_ss = s2 - s * s / n;
            let score = if ref_ss <= FLAT_EPS * n {
                0.0
            } else {
                any_textured = true;
                let mut cross = 0.0;
                for r in 0..block.height {
                    let brow = &block.values[r * block.width..(r + 1) * block.width];
                    let rrow = &data[(y + r) * ref_w + x..(y + r) * ref_w + x + block.width];
                    cross += brow.iter().zip(rrow).map(|(a, b)| a * b).sum::<f64>();
                }
                (cross / (block.sum_sq * ref_ss).sqrt()).clamp(-1.0, 1.0)
            };
            let better = match best {
                None => true,
                Some(b) => {
                    score > b.score
                        || (score == b.score && dx * dx + dy * dy < b.dx * b.dx + b.dy * b.dy)
                }
            };
            if better {
                best = Some(BlockMatch {
                    dx,
                    dy,
                    score,
                    flagged: false,
                });
            }
        }
    }
    if !any_textured {
        return BlockMatch::flagged();
    }
    best.expect("search window is non-empty")
}

/// Finds the offset of `moving_block` inside `reference_region` that
/// maximizes zero-mean normalized cross-correlation. The region must be the
/// block size plus `search_radius` on every side; offset `(0, 0)` is the
/// centered position. Ties prefer the smallest displacement, then row-major
/// candidate order.
pub fn block_match(
    reference_region: &ImageGray,
    moving_block: &ImageGray,
    search_radius: u32,
) -> Result<BlockMatch> {
    let r = search_radius as usize;
    if reference_region.width() < moving_block.width() + 2 * r
        || reference_region.height() < moving_block.height() + 2 * r
    {
        return Err(Error::InvalidParameter(format!(
            "reference region {}x{} cannot hold a {}x{} block at radius {r}",
            reference_region.width(),
            reference_region.height(),
            moving_block.width(),
            moving_block.height()
        )));
    }
    let block = CenteredBlock::from_region(moving_block, 0, 0, moving_block.width(), moving_block.height());
    let integral = Integral::new(reference_region);
    Ok(search(reference_region, &integral, r, r, &block, search_radius as i32))
}

/// Zero-mean normalized cross-correlation of two equally sized images.
pub fn ncc(a: &ImageGray, b: &ImageGray) -> Result<f64> {
    a.same_dims(b)?;
    let n = a.len() as f64;
    let ma = a.data().iter().sum::<f64>() / n;
    let mb = b.data().iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= FLAT_EPS * n || sbb <= FLAT_EPS * n {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Block-wise local alignment of `moving` onto `reference`.
///
/// Both images are upsampled, the moving one is cut into blocks of
/// `block_size * upsample` pixels (edge blocks may be partial), each block is
/// matched independently, the moving image is rebuilt from its displaced
/// blocks and finally downsampled back to the original grid.
pub fn local_align(
    reference: &ImageGray,
    moving: &ImageGray,
    params: AlignParams,
) -> Result<(ImageGray, DisplacementField)> {
    reference.same_dims(moving)?;
    if params.block_size == 0 || params.upsample == 0 {
        return Err(Error::InvalidParameter("block size and upsample must be positive".into()));
    }
    let up = Scale::integer(params.upsample)?;
    let ref_up = bicubic_resample(reference, up)?;
    let mov_up = bicubic_resample(moving, up)?;
    let radius = params.search_radius as usize;
    let padded = ref_up.crop_clamped(
        -(radius as isize),
        -(radius as isize),
        ref_up.width() + 2 * radius,
        ref_up.height() + 2 * radius,
    )?;
    let integral = Integral::new(&padded);

    let block_px = params.block_size * params.upsample as usize;
    let (w, h) = (mov_up.width(), mov_up.height());
    let blocks_x = w.div_ceil(block_px);
    let blocks_y = h.div_ceil(block_px);

    let displacements: Vec<BlockDisplacement> = (0..blocks_x * blocks_y)
        .into_par_iter()
        .map(|i| {
            let (bx, by) = (i % blocks_x, i / blocks_x);
            let (x0, y0) = (bx * block_px, by * block_px);
            let bw = block_px.min(w - x0);
            let bh = block_px.min(h - y0);
            let block = CenteredBlock::from_region(&mov_up, x0, y0, bw, bh);
            // padded coordinates: offset (0, 0) sits at (x0 + radius, y0 + radius)
            let m = search(&padded, &integral, x0 + radius, y0 + radius, &block, params.search_radius as i32);
            BlockDisplacement {
                dx: m.dx,
                dy: m.dy,
                flagged: m.flagged,
            }
        })
        .collect();

    let mut rebuilt = vec![0.0; w * h];
    rebuilt.par_chunks_mut(w).enumerate().for_each(|(row, out)| {
        let by = row / block_px;
        for (col, o) in out.iter_mut().enumerate() {
            let d = displacements[by * blocks_x + col / block_px];
            *o = mov_up.get_clamped(col as isize - d.dx as isize, row as isize - d.dy as isize);
        }
    });
    let rebuilt = ImageGray::new(w, h, rebuilt)?;
    let aligned = bicubic_resample(&rebuilt, up.inverse())?;

    Ok((
        aligned,
        DisplacementField {
            block_size: params.block_size,
            upsample: params.upsample,
            search_radius: params.search_radius,
            blocks_x,
            blocks_y,
            displacements,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize, sx: f64, sy: f64) -> ImageGray {
        ImageGray::from_fn(w, h, |c, r| {
            let x = c as f64 - sx;
            let y = r as f64 - sy;
            0.5 + 0.2 * (x / 5.3).sin() * (y / 7.1).cos() + 0.15 * ((x + 2.0 * y) / 9.7).sin()
                + 0.1 * ((x - y) / 4.1).cos()
        })
        .unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let img = pattern(12, 9, 0.0, 0.0);
        assert_eq!(coarse_shift(&img, 0, 0).unwrap(), img);
    }

    #[test]
    fn shift_moves_delta() {
        let img = ImageGray::from_fn(20, 20, |c, r| if (c, r) == (10, 10) { 1.0 } else { 0.0 }).unwrap();
        let s = coarse_shift(&img, 3, -2).unwrap();
        assert_eq!(s.get(13, 8), 1.0);
        assert_eq!(s.data().iter().filter(|&&v| v == 1.0).count(), 1);
    }

    #[test]
    fn inverse_shifts_on_interior() {
        let img = pattern(16, 10, 0.0, 0.0);
        let back = coarse_shift(&coarse_shift(&img, 1, 0).unwrap(), -1, 0).unwrap();
        for r in 0..10 {
            for c in 0..15 {
                assert_eq!(back.get(c, r), img.get(c, r));
            }
        }
        assert!(coarse_shift(&img, 16, 0).is_err());
    }

    #[test]
    fn block_match_centered_and_offset() {
        let region = pattern(40, 40, 0.0, 0.0);
        let centered = region.crop_clamped(10, 10, 20, 20).unwrap();
        let m = block_match(&region, &centered, 10).unwrap();
        assert_eq!((m.dx, m.dy), (0, 0));
        assert!((m.score - 1.0).abs() < 1e-9);
        let off = region.crop_clamped(13, 13, 20, 20).unwrap();
        let m = block_match(&region, &off, 10).unwrap();
        assert_eq!((m.dx, m.dy), (3, 3));
        let recomputed = ncc(&region.crop_clamped(13, 13, 20, 20).unwrap(), &off).unwrap();
        assert!((m.score - recomputed).abs() < 1e-9);
    }

    #[test]
    fn block_match_flat_block_is_flagged() {
        let region = pattern(30, 30, 0.0, 0.0);
        let flat = ImageGray::filled(10, 10, 0.3).unwrap();
        let m = block_match(&region, &flat, 10).unwrap();
        assert_eq!(m, BlockMatch::flagged());
        assert!(block_match(&region, &flat, 11).is_err());
    }

    #[test]
    fn self_alignment_is_exact() {
        let img = pattern(60, 50, 0.0, 0.0);
        let (aligned, field) = local_align(&img, &img, AlignParams::default()).unwrap();
        assert_eq!(field.max_abs(), 0);
        assert_eq!((field.blocks_x, field.blocks_y), (3, 2));
        let err = aligned
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.01, "{err}");
    }

    #[test]
    fn blank_blocks_are_flagged() {
        let img = ImageGray::from_fn(50, 25, |c, r| {
            if c < 30 {
                0.9
            } else {
                0.5 + 0.3 * ((c as f64) / 3.0).sin() * ((r as f64) / 4.0).cos()
            }
        })
        .unwrap();
        let (_, field) = local_align(&img, &img, AlignParams::default()).unwrap();
        assert!(field.get(0, 0).flagged);
        assert!(!field.get(1, 0).flagged);
        assert_eq!(field.get(0, 0).dx, 0);
    }

    #[test]
    fn field_json_round_trip() {
        let field = DisplacementField {
            block_size: 25,
            upsample: 4,
            search_radius: 16,
            blocks_x: 2,
            blocks_y: 1,
            displacements: vec![
                BlockDisplacement { dx: -3, dy: 2, flagged: false },
                BlockDisplacement { dx: 0, dy: 0, flagged: true },
            ],
        };
        let text = field.to_json();
        assert!(text.contains("\"grid\""));
        assert_eq!(DisplacementField::from_json(&text).unwrap(), field);
        assert!(DisplacementField::from_json("{\"block_size\": 1}").is_err());
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let a = pattern(30, 30, 0.0, 0.0);
        let b = pattern(30, 31, 0.0, 0.0);
        assert!(matches!(
            local_align(&a, &b, AlignParams::default()),
            Err(Error::DimensionMismatch(..))
        ));
    }
}
