//! Synthetic sources and a symmetric point-wise show-through mixture.
//!
//! The noiseless mixture is
//!
//! ```text
//! m1 = s1 (q + (1 - q) s2^g)
//! m2 = s2 (q + (1 - q) s1^g)
//! ```
//!
//! A white back page leaves the front unchanged; a black one attenuates it to
//! `q`. Acquisition adds Gaussian noise, clips and quantizes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::imagery::{rotate_90_cw, ImageGray};
use crate::seed::derive_seed;

pub const MAX_INVERSION_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    /// Fraction of the front intensity left under a solid black back.
    pub q: f64,
    pub gamma: f64,
    /// Acquisition noise standard deviation.
    pub sigma: f64,
    pub levels: u32,
    pub seed: u64,
}

impl Default for MixParams {
    fn default() -> Self {
        Self {
            q: 0.6,
            gamma: 2.0,
            sigma: 0.01,
            levels: 256,
            seed: 0,
        }
    }
}

impl MixParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidParameter(format!("q = {} not in (0, 1]", self.q)));
        }
        if self.gamma.is_nan() || self.gamma < 1.0 || self.gamma.is_infinite() {
            return Err(Error::InvalidParameter(format!("gamma = {} < 1", self.gamma)));
        }
        if self.sigma.is_nan() || self.sigma < 0.0 || self.sigma.is_infinite() {
            return Err(Error::InvalidParameter(format!("sigma = {} < 0", self.sigma)));
        }
        if self.levels < 2 {
            return Err(Error::InvalidParameter(format!("levels = {} < 2", self.levels)));
        }
        Ok(())
    }

    /// Whether the noiseless map has a positive Jacobian determinant on the
    /// whole open unit square. This needs `(1 - q) gamma <= 1`; outside it
    /// the determinant turns negative near `(1, 1)`.
    pub fn jacobian_positive_everywhere(&self) -> bool {
        (1.0 - self.q) * self.gamma <= 1.0
    }

    /// Reads `mix.q`, `mix.gamma`, `mix.sigma`, `mix.levels` and `mix.seed`,
    /// falling back to the defaults.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let p = Self {
            q: kv.get_or("mix.q", d.q)?,
            gamma: kv.get_or("mix.gamma", d.gamma)?,
            sigma: kv.get_or("mix.sigma", d.sigma)?,
            levels: kv.get_or("mix.levels", d.levels)?,
            seed: kv.get_or("mix.seed", d.seed)?,
        };
        p.validate()?;
        Ok(p)
    }
}

/// `n_bars` vertical bars with intensities `k / (n_bars - 1)` in seeded random
/// order, and the same image rotated by 90 degrees.
pub fn generate_bars_pair(n_bars: usize, size: usize, seed: u64) -> Result<(ImageGray, ImageGray)> {
    if n_bars < 2 {
        return Err(Error::InvalidParameter("need at least two bars".into()));
    }
    if size < n_bars {
        return Err(Error::InvalidParameter(format!(
            "image size {size} is smaller than the bar count {n_bars}"
        )));
    }
    let mut levels: Vec<f64> = (0..n_bars).map(|k| k as f64 / (n_bars - 1) as f64).collect();
    levels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let first = ImageGray::from_fn(size, size, |col, _| levels[col * n_bars / size])?;
    let second = rotate_90_cw(&first);
    Ok((first, second))
}

/// Noiseless mixture of one pixel pair.
pub fn mix_point(s1: f64, s2: f64, q: f64, gamma: f64) -> (f64, f64) {
    let m1 = s1 * (q + (1.0 - q) * s2.powf(gamma));
    let m2 = s2 * (q + (1.0 - q) * s1.powf(gamma));
    (m1, m2)
}

/// Jacobian `d(m1, m2) / d(s1, s2)` of [`mix_point`], row-major.
pub fn mix_jacobian(s1: f64, s2: f64, q: f64, gamma: f64) -> [[f64; 2]; 2] {
    let r = 1.0 - q;
    [
        [q + r * s2.powf(gamma), s1 * r * gamma * s2.powf(gamma - 1.0)],
        [s2 * r * gamma * s1.powf(gamma - 1.0), q + r * s1.powf(gamma)],
    ]
}

pub fn mix_jacobian_det(s1: f64, s2: f64, q: f64, gamma: f64) -> f64 {
    let j = mix_jacobian(s1, s2, q, gamma);
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

pub fn mix_noiseless(s1: &ImageGray, s2: &ImageGray, p: &MixParams) -> Result<(ImageGray, ImageGray)> {
    s1.same_dims(s2)?;
    p.validate()?;
    let (m1, m2): (Vec<f64>, Vec<f64>) = s1
        .data()
        .iter()
        .zip(s2.data())
        .map(|(&a, &b)| mix_point(a, b, p.q, p.gamma))
        .unzip();
    Ok((
        ImageGray::new(s1.width(), s1.height(), m1)?,
        ImageGray::new(s1.width(), s1.height(), m2)?,
    ))
}

/// Noiseless mixture followed by independent acquisition noise on each side.
pub fn mix_showthrough(s1: &ImageGray, s2: &ImageGray, p: &MixParams) -> Result<(ImageGray, ImageGray)> {
    let (m1, m2) = mix_noiseless(s1, s2, p)?;
    Ok((
        add_acquisition_noise(&m1, p.sigma, p.levels, derive_seed(p.seed, "noise-1"))?,
        add_acquisition_noise(&m2, p.sigma, p.levels, derive_seed(p.seed, "noise-2"))?,
    ))
}

/// Adds Gaussian noise of std `sigma`, clips to `[0, 1]` and rounds to
/// `levels` uniform levels. Each row draws from its own stream of the seeded
/// generator, so the result does not depend on thread scheduling.
pub fn add_acquisition_noise(image: &ImageGray, sigma: f64, levels: u32, seed: u64) -> Result<ImageGray> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} < 0")));
    }
    if levels < 2 {
        return Err(Error::InvalidParameter(format!("levels = {levels} < 2")));
    }
    let w = image.width();
    let top = (levels - 1) as f64;
    let mut data = image.data().to_vec();
    data.par_chunks_mut(w).enumerate().for_each(|(row, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        for v in chunk.iter_mut() {
            let noisy = if sigma > 0.0 {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v + sigma * g
            } else {
                *v
            };
            *v = (noisy.clamp(0.0, 1.0) * top).round() / top;
        }
    });
    ImageGray::new(w, image.height(), data)
}

/// Inverts [`mix_point`] by Gauss-Seidel fixed-point iteration. `None` when
/// the iteration does not settle or leaves the unit square.
pub fn invert_point(m1: f64, m2: f64, q: f64, gamma: f64) -> Option<(f64, f64)> {
    let r = 1.0 - q;
    let (mut s1, mut s2) = (m1, m2);
    for _ in 0..MAX_INVERSION_ITERATIONS {
        let n1 = m1 / (q + r * s2.powf(gamma));
        let n2 = m2 / (q + r * n1.powf(gamma));
        let delta = (n1 - s1).abs().max((n2 - s2).abs());
        s1 = n1;
        s2 = n2;
        if !(s1.is_finite() && s2.is_finite()) {
            return None;
        }
        if delta <= 1e-15 {
            let inside = (0.0..=1.0).contains(&s1) && (0.0..=1.0).contains(&s2);
            return inside.then_some((s1, s2));
        }
    }
    None
}

/// Ground-truth inverse of the noiseless mixture, for validating the family.
pub fn invert_showthrough(m1: &ImageGray, m2: &ImageGray, p: &MixParams) -> Result<(ImageGray, ImageGray)> {
    m1.same_dims(m2)?;
    p.validate()?;
    let mut s1 = Vec::with_capacity(m1.len());
    let mut s2 = Vec::with_capacity(m1.len());
    for (index, (&a, &b)) in m1.data().iter().zip(m2.data()).enumerate() {
        let (x, y) = invert_point(a, b, p.q, p.gamma).ok_or(Error::NonConvergence { index })?;
        s1.push(x);
        s2.push(y);
    }
    Ok((
        ImageGray::new(m1.width(), m1.height(), s1)?,
        ImageGray::new(m1.width(), m1.height(), s2)?,
    ))
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull in counter-clockwise order without collinear points
/// (monotone chain).
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - a.1 * b.0
        })
        .sum();
    0.5 * twice.abs()
}

/// Area of the smallest parallelogram enclosing a convex polygon. An optimal
/// parallelogram has a side flush with a hull edge in each of its two side
/// directions, so all pairs of edge directions are tried.
pub fn min_enclosing_parallelogram_area(hull: &[(f64, f64)]) -> f64 {
    let n = hull.len();
    if n < 3 {
        return 0.0;
    }
    let dirs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len = dx.hypot(dy);
            (dx / len, dy / len)
        })
        .collect();
    // extent of the hull across each edge direction
    let widths: Vec<f64> = dirs
        .iter()
        .map(|&(ux, uy)| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &(x, y) in hull {
                let t = x * uy - y * ux;
                lo = lo.min(t);
                hi = hi.max(t);
            }
            hi - lo
        })
        .collect();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let sin = (dirs[i].0 * dirs[j].1 - dirs[i].1 * dirs[j].0).abs();
            if sin > 1e-12 {
                best = best.min(widths[i] * widths[j] / sin);
            }
        }
    }
    best
}

/// Hull area over its minimal enclosing parallelogram area; 1 for a
/// parallelogram-shaped scatter such as a linear mixture of uniform sources.
pub fn parallelogram_ratio(points: &[(f64, f64)]) -> Result<f64> {
    let hull = convex_hull(points);
    let area = polygon_area(&hull);
    if hull.len() < 3 || area <= 0.0 {
        return Err(Error::Degenerate("scatter has no interior".into()));
    }
    Ok(area / min_enclosing_parallelogram_area(&hull))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(MixParams::default().validate().is_ok());
        for bad in [
            MixParams { q: 0.0, ..Default::default() },
            MixParams { q: 1.1, ..Default::default() },
            MixParams { gamma: 0.5, ..Default::default() },
            MixParams { sigma: -1.0, ..Default::default() },
            MixParams { levels: 1, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn params_from_config() {
        let kv = KeyValues::parse("mix.q = 0.8\nmix.levels = 64\n").unwrap();
        let p = MixParams::from_config(&kv).unwrap();
        assert_eq!(p.q, 0.8);
        assert_eq!(p.levels, 64);
        assert_eq!(p.gamma, 2.0);
        assert!(MixParams::from_config(&KeyValues::parse("mix.q = 2").unwrap()).is_err());
    }

    #[test]
    fn two_bars_split_the_image() {
        let (a, b) = generate_bars_pair(2, 10, 3).unwrap();
        let left = a.get(0, 0);
        let right = a.get(9, 0);
        assert_eq!(left + right, 1.0);
        for r in 0..10 {
            for c in 0..10 {
                assert_eq!(a.get(c, r), if c < 5 { left } else { right });
            }
        }
        assert_eq!(b, rotate_90_cw(&a));
        assert!(generate_bars_pair(25, 24, 0).is_err());
    }

    #[test]
    fn bar_histogram_is_uniform() {
        let (a, b) = generate_bars_pair(25, 500, 9).unwrap();
        for img in [&a, &b] {
            let mut counts = [0usize; 25];
            for &v in img.data() {
                counts[(v * 24.0).round() as usize] += 1;
            }
            assert!(counts.iter().all(|&c| c == 500 * 20), "{counts:?}");
        }
    }

    #[test]
    fn white_and_black_backs() {
        let s1 = ImageGray::from_fn(8, 8, |c, r| (c + 8 * r) as f64 / 63.0).unwrap();
        let p = MixParams::default();
        let (m1, _) = mix_noiseless(&s1, &ImageGray::filled(8, 8, 1.0).unwrap(), &p).unwrap();
        assert_eq!(m1, s1);
        let (m1, _) = mix_noiseless(&s1, &ImageGray::filled(8, 8, 0.0).unwrap(), &p).unwrap();
        for (m, s) in m1.data().iter().zip(s1.data()) {
            assert_eq!(*m, 0.6 * s);
        }
    }

    #[test]
    fn noiseless_core_exchange_symmetry() {
        let s1 = ImageGray::from_fn(16, 16, |c, r| ((c * 7 + r * 3) % 16) as f64 / 15.0).unwrap();
        let s2 = ImageGray::from_fn(16, 16, |c, r| ((c * 5 + r * 11) % 16) as f64 / 15.0).unwrap();
        let p = MixParams::default();
        let (a1, a2) = mix_noiseless(&s1, &s2, &p).unwrap();
        let (b1, b2) = mix_noiseless(&s2, &s1, &p).unwrap();
        assert_eq!(a1, b2);
        assert_eq!(a2, b1);
    }

    #[test]
    fn quantization_bound_and_idempotence() {
        let img = ImageGray::from_fn(50, 20, |c, r| ((c * 31 + r * 17) % 997) as f64 / 996.0).unwrap();
        let quant = add_acquisition_noise(&img, 0.0, 256, 1).unwrap();
        for (a, b) in img.data().iter().zip(quant.data()) {
            assert!((a - b).abs() <= 1.0 / 510.0 + 1e-15);
        }
        assert_eq!(add_acquisition_noise(&quant, 0.0, 256, 2).unwrap(), quant);
    }

    #[test]
    fn noise_std_oracle() {
        let img = ImageGray::filled(400, 250, 0.5).unwrap();
        let out = add_acquisition_noise(&img, 0.01, 256, 11).unwrap();
        let d = out.data();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        assert!((0.008..=0.012).contains(&sd), "{sd}");
        assert_eq!(out, add_acquisition_noise(&img, 0.01, 256, 11).unwrap());
    }

    #[test]
    fn inversion_round_trip() {
        let mut state = 12345u64;
        let mut next = || {
            state = crate::seed::splitmix64(state);
            0.05 + 0.9 * (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let s1 = ImageGray::from_fn(30, 30, |_, _| next()).unwrap();
        let s2 = ImageGray::from_fn(30, 30, |_, _| next()).unwrap();
        let p = MixParams::default();
        let (m1, m2) = mix_noiseless(&s1, &s2, &p).unwrap();
        let (r1, r2) = invert_showthrough(&m1, &m2, &p).unwrap();
        for (a, b) in r1.data().iter().chain(r2.data()).zip(s1.data().iter().chain(s2.data())) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn inversion_identity_and_domain() {
        assert_eq!(invert_point(0.3, 0.8, 1.0, 2.0), Some((0.3, 0.8)));
        assert_eq!(invert_point(1.5, 1.5, 0.6, 2.0), None);
        let m = ImageGray::filled(2, 2, 1.0).unwrap();
        let bad = m.map(|_| 0.99).unwrap();
        // (1, 0.99) has no preimage in the unit square
        assert!(matches!(
            invert_showthrough(&m, &bad, &MixParams::default()),
            Err(Error::NonConvergence { index: 0 })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (q, g) = (0.6, 2.0);
        let h = 1e-6;
        for &(a, b) in &[(0.3, 0.7), (0.9, 0.2), (0.5, 0.5)] {
            let j = mix_jacobian(a, b, q, g);
            let (p1, p2) = mix_point(a + h, b, q, g);
            let (n1, n2) = mix_point(a - h, b, q, g);
            assert!((j[0][0] - (p1 - n1) / (2.0 * h)).abs() < 1e-8);
            assert!((j[1][0] - (p2 - n2) / (2.0 * h)).abs() < 1e-8);
            let (p1, p2) = mix_point(a, b + h, q, g);
            let (n1, n2) = mix_point(a, b - h, q, g);
            assert!((j[0][1] - (p1 - n1) / (2.0 * h)).abs() < 1e-8);
            assert!((j[1][1] - (p2 - n2) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn determinant_positive_on_valid_parameters() {
        for &(q, g) in &[(0.6, 2.0), (1.0, 1.0), (0.5, 2.0), (0.1, 1.0), (0.8, 5.0), (0.3, 1.4)] {
            let p = MixParams { q, gamma: g, ..Default::default() };
            assert!(p.jacobian_positive_everywhere());
            for i in 0..100 {
                for j in 0..100 {
                    let (a, b) = ((i as f64 + 0.5) / 100.0, (j as f64 + 0.5) / 100.0);
                    assert!(mix_jacobian_det(a, b, q, g) > 0.0, "q={q} g={g} at ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn determinant_turns_negative_for_strong_nonlinearity() {
        let p = MixParams { q: 0.2, gamma: 2.0, ..Default::default() };
        assert!(p.validate().is_ok());
        assert!(!p.jacobian_positive_everywhere());
        assert!(mix_jacobian_det(0.99, 0.99, p.q, p.gamma) < 0.0);
    }

    #[test]
    fn hull_and_parallelogram_oracles() {
        let square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5), (0.5, 0.0)];
        let hull = convex_hull(&square);
        assert_eq!(hull.len(), 4);
        assert!((polygon_area(&hull) - 1.0).abs() < 1e-15);
        assert!((parallelogram_ratio(&square).unwrap() - 1.0).abs() < 1e-12);
        let tri = [(0.0, 0.0), (2.0, 0.0), (0.5, 1.5)];
        assert!((parallelogram_ratio(&tri).unwrap() - 0.5).abs() < 1e-12);
        let skew = [(0.0, 0.0), (1.0, 0.2), (1.3, 1.1), (0.3, 0.9)];
        assert!((parallelogram_ratio(&skew).unwrap() - 1.0).abs() < 1e-12);
        assert!(parallelogram_ratio(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).is_err());
    }
}
