//! Objective separation-quality measures.
//!
//! * `Q1`: SNR of an extracted component against its source,
//!   `10 log10(var(S) / var(Y - S))`.
//! * `Q2`: the same SNR after the best monotone remapping `f` of the
//!   extracted intensities, `10 log10(var(S) / var(f(Y) - S))`. `f` is a table
//!   over the distinct levels of `Y`, fitted by pool-adjacent-violators.
//! * `Q3` / `Q4`: mutual information (bits) between an extracted component
//!   and its own / the opposite source, with the Kraskov k-NN estimator
//!   (first variant, max-norm).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::imagery::{sample_pixel_pairs, ImageGray, PixelPairSet};
use crate::seed::derive_seed;

/// Reported ceiling for a zero-noise SNR.
pub const DB_CAP: f64 = 150.0;

/// MI estimates above this (negative) value are attributed to estimator noise.
pub const MI_NOISE_FLOOR: f64 = -0.1;

pub const JITTER_AMPLITUDE: f64 = 1e-6;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (mean removed), two-pass.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn snr_db(signal_var: f64, noise_var: f64) -> f64 {
    if noise_var <= 0.0 {
        return DB_CAP;
    }
    (10.0 * (signal_var / noise_var).log10()).min(DB_CAP)
}

fn check_pair(extracted: &ImageGray, source: &ImageGray) -> Result<f64> {
    extracted.same_dims(source)?;
    let var_s = variance(source.data());
    if var_s <= 0.0 {
        return Err(Error::Degenerate("source image is constant".into()));
    }
    Ok(var_s)
}

pub fn q1_snr(extracted: &ImageGray, source: &ImageGray) -> Result<f64> {
    let var_s = check_pair(extracted, source)?;
    let noise: Vec<f64> = extracted
        .data()
        .iter()
        .zip(source.data())
        .map(|(y, s)| y - s)
        .collect();
    Ok(snr_db(var_s, variance(&noise)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Increasing,
    Decreasing,
}

/// Least-squares monotone table map from extracted levels to source values.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMap {
    /// Distinct extracted levels, ascending.
    pub levels: Vec<f64>,
    /// Fitted output per level.
    pub values: Vec<f64>,
    pub orientation: Orientation,
    /// `sum_l w_l (f_l - mean_l)^2` over levels (excludes the within-level
    /// scatter, which no map can remove).
    pub residual: f64,
}

impl MonotoneMap {
    /// Table lookup; values between levels take the nearest lower level
    /// (clamped at the ends).
    pub fn apply(&self, y: f64) -> f64 {
        match self.levels.binary_search_by(|l| l.total_cmp(&y)) {
            Ok(i) => self.values[i],
            Err(0) => self.values[0],
            Err(i) => self.values[i - 1],
        }
    }
}

/// Level-aggregated `(y, s)` data: distinct `y` ascending with the weight and
/// mean `s` for each.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub levels: Vec<f64>,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    /// Level index of every input pair, in input order.
    pub assignment: Vec<usize>,
}

pub fn level_stats(y: &[f64], s: &[f64]) -> LevelStats {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut levels = Vec::new();
    let mut weights = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut assignment = vec![0; y.len()];
    for &i in &order {
        if levels.last() != Some(&y[i]) {
            levels.push(y[i]);
            weights.push(0.0);
            sums.push(0.0);
        }
        let l = levels.len() - 1;
        weights[l] += 1.0;
        sums[l] += s[i];
        assignment[i] = l;
    }
    let means = sums.iter().zip(&weights).map(|(s, w)| s / w).collect();
    LevelStats {
        levels,
        weights,
        means,
        assignment,
    }
}

/// Weighted mean of `means[range]`, summed in ascending index order.
pub fn block_mean(means: &[f64], weights: &[f64], range: std::ops::Range<usize>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for l in range {
        num += weights[l] * means[l];
        den += weights[l];
    }
    num / den
}

/// Residual of a fitted table against level means, summed in level order.
pub fn level_residual(fitted: &[f64], means: &[f64], weights: &[f64]) -> f64 {
    fitted
        .iter()
        .zip(means)
        .zip(weights)
        .map(|((f, m), w)| w * (f - m) * (f - m))
        .sum()
}

/// Pool-adjacent-violators: blocks (as ascending index ranges) of the
/// weighted least-squares non-decreasing fit, or non-increasing when
/// `increasing` is false.
pub fn pava_blocks(means: &[f64], weights: &[f64], increasing: bool) -> Vec<std::ops::Range<usize>> {
    let n = means.len();
    // processes indices in the direction along which the fit must not decrease
    let idx = |k: usize| if increasing { k } else { n - 1 - k };
    struct Block {
        start: usize,
        end: usize,
        weight: f64,
        value: f64,
    }
    let mut stack: Vec<Block> = Vec::with_capacity(n);
    for k in 0..n {
        let l = idx(k);
        let mut cur = Block {
            start: k,
            end: k + 1,
            weight: weights[l],
            value: means[l],
        };
        while let Some(top) = stack.last() {
            if top.value >= cur.value {
                let top = stack.pop().expect("non-empty");
                let weight = top.weight + cur.weight;
                cur = Block {
                    start: top.start,
                    end: cur.end,
                    value: (top.value * top.weight + cur.value * cur.weight) / weight,
                    weight,
                };
            } else {
                break;
            }
        }
        stack.push(cur);
    }
    let mut blocks: Vec<std::ops::Range<usize>> = stack
        .into_iter()
        .map(|b| {
            if increasing {
                b.start..b.end
            } else {
                (n - b.end)..(n - b.start)
            }
        })
        .collect();
    blocks.sort_by_key(|r| r.start);
    blocks
}

/// Fitted per-level values for one orientation; block values are recomputed
/// directly from the level data.
pub fn isotonic_fit(means: &[f64], weights: &[f64], increasing: bool) -> Vec<f64> {
    let mut fitted = vec![0.0; means.len()];
    for block in pava_blocks(means, weights, increasing) {
        let v = block_mean(means, weights, block.clone());
        fitted[block].iter_mut().for_each(|f| *f = v);
    }
    fitted
}

/// Best monotone table map of `extracted` onto `source`, trying both
/// orientations and keeping the lower residual (increasing on ties).
pub fn fit_monotone_map(extracted: &ImageGray, source: &ImageGray) -> Result<MonotoneMap> {
    extracted.same_dims(source)?;
    fit_monotone_values(extracted.data(), source.data()).map(|(map, _)| map)
}

fn fit_monotone_values(y: &[f64], s: &[f64]) -> Result<(MonotoneMap, LevelStats)> {
    let stats = level_stats(y, s);
    if stats.levels.len() < 2 {
        return Err(Error::Degenerate(
            "extracted component has fewer than two distinct levels".into(),
        ));
    }
    let up = isotonic_fit(&stats.means, &stats.weights, true);
    let down = isotonic_fit(&stats.means, &stats.weights, false);
    let r_up = level_residual(&up, &stats.means, &stats.weights);
    let r_down = level_residual(&down, &stats.means, &stats.weights);
    let (values, orientation, residual) = if r_down < r_up {
        (down, Orientation::Decreasing, r_down)
    } else {
        (up, Orientation::Increasing, r_up)
    };
    Ok((
        MonotoneMap {
            levels: stats.levels.clone(),
            values,
            orientation,
            residual,
        },
        stats,
    ))
}

pub fn q2_snr(extracted: &ImageGray, source: &ImageGray) -> Result<(f64, MonotoneMap)> {
    let var_s = check_pair(extracted, source)?;
    let (map, stats) = fit_monotone_values(extracted.data(), source.data())?;
    let noise: Vec<f64> = stats
        .assignment
        .iter()
        .zip(source.data())
        .map(|(&l, s)| map.values[l] - s)
        .collect();
    Ok((snr_db(var_s, variance(&noise)), map))
}

#[derive(Clone, Copy, PartialEq)]
struct HeapDist(f64);

impl Eq for HeapDist {}

impl PartialOrd for HeapDist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapDist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Kraskov estimator (first variant) in nats on untied continuous data:
///
/// `I = digamma(k) + digamma(N) - < digamma(n_x + 1) + digamma(n_y + 1) >`
///
/// where `eps_i` is the max-norm distance to the k-th joint neighbour and
/// `n_x`, `n_y` count the other points strictly closer than `eps_i` in each
/// marginal.
pub fn ksg_nats(xs: &[f64], ys: &[f64], k: usize) -> Result<f64> {
    let n = xs.len();
    if ys.len() != n {
        return Err(Error::InvalidParameter("coordinate lengths differ".into()));
    }
    if k == 0 || n < k + 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least k + 2 = {} samples, got {n}",
            k + 2
        )));
    }
    // joint search sweeps outward along x-sorted order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let sy_by_x: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let mut sorted_y = ys.to_vec();
    sorted_y.sort_by(f64::total_cmp);

    let mut heap: BinaryHeap<HeapDist> = BinaryHeap::with_capacity(k + 1);
    // per-point terms summed in input order, so swapping coordinates is exact
    let mut terms = vec![0.0; n];
    for p in 0..n {
        heap.clear();
        let (x0, y0) = (sx[p], sy_by_x[p]);
        let consider = |q: usize, heap: &mut BinaryHeap<HeapDist>| {
            let d = (sx[q] - x0).abs().max((sy_by_x[q] - y0).abs());
            if heap.len() < k {
                heap.push(HeapDist(d));
            } else if d < heap.peek().expect("full heap").0 {
                heap.pop();
                heap.push(HeapDist(d));
            }
        };
        let (mut lo, mut hi) = (p, p + 1);
        loop {
            let bound = if heap.len() < k { f64::INFINITY } else { heap.peek().expect("full heap").0 };
            let left = if lo > 0 { x0 - sx[lo - 1] } else { f64::INFINITY };
            let right = if hi < n { sx[hi] - x0 } else { f64::INFINITY };
            if left.min(right) > bound || (left.is_infinite() && right.is_infinite()) {
                break;
            }
            if left <= right {
                lo -= 1;
                consider(lo, &mut heap);
            } else {
                consider(hi, &mut heap);
                hi += 1;
            }
        }
        let eps = heap.peek().expect("k >= 1").0;
        if eps <= 0.0 {
            return Err(Error::Degenerate("duplicate sample points".into()));
        }
        let nx = count_within(&sx, x0, eps) - 1;
        let ny = count_within(&sorted_y, y0, eps) - 1;
        terms[order[p]] = digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
    }
    let total: f64 = terms.iter().sum();
    Ok(digamma(k as f64) + digamma(n as f64) - total / n as f64)
}

/// Number of sorted values `v` with `|v - center| < eps`.
fn count_within(sorted: &[f64], center: f64, eps: f64) -> usize {
    let lo = sorted.partition_point(|&v| v < center - 2.0 * eps);
    let hi = sorted.partition_point(|&v| v <= center + 2.0 * eps);
    sorted[lo..hi].iter().filter(|&&v| (v - center).abs() < eps).count()
}

fn has_duplicate_points(xs: &[f64], ys: &[f64]) -> bool {
    let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2).any(|w| w[0] == w[1])
}

/// Mutual information in bits between the two coordinates of `points`.
///
/// Quantized intensities produce exact ties, so both coordinates receive
/// uniform jitter of amplitude [`JITTER_AMPLITUDE`] drawn from `seed`. If
/// duplicates survive, the jitter is redrawn from a derived seed (three
/// attempts).
pub fn kraskov_mi_bits(points: &[(f64, f64)], k: usize, seed: u64) -> Result<f64> {
    if points.len() < k + 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least k + 2 = {} samples, got {}",
            k + 2,
            points.len()
        )));
    }
    for attempt in 0..3u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("jitter-{attempt}")));
        let mut jit = || JITTER_AMPLITUDE * (2.0 * rng.random::<f64>() - 1.0);
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x + jit(), y + jit())).unzip();
        if has_duplicate_points(&xs, &ys) {
            continue;
        }
        return Ok(ksg_nats(&xs, &ys, k)? / std::f64::consts::LN_2);
    }
    Err(Error::Degenerate(
        "duplicate points remain after three jitter attempts".into(),
    ))
}

/// [`kraskov_mi_bits`] on a sampled pixel-pair set, jittered from its seed.
pub fn kraskov_mi(samples: &PixelPairSet, k: usize) -> Result<f64> {
    kraskov_mi_bits(&samples.samples, k, samples.seed)
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `values` and the uniform distribution on `[0, 1]`.
pub fn ks_distance_uniform(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = x.clamp(0.0, 1.0);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiMeasures {
    /// MI with the corresponding source, per component.
    pub q3: [f64; 2],
    /// MI with the opposite source, per component.
    pub q4: [f64; 2],
    pub locations: usize,
}

/// Q3 and Q4 for both components, all estimated at the same `eval_samples`
/// pixel locations drawn disjoint from `exclude`.
pub fn q3_q4(
    extracted: [&ImageGray; 2],
    sources: [&ImageGray; 2],
    eval_samples: usize,
    exclude: Option<&PixelPairSet>,
    seed: u64,
    k: usize,
) -> Result<MiMeasures> {
    for img in extracted.iter().chain(sources.iter()).skip(1) {
        extracted[0].same_dims(img)?;
    }
    let locs = sample_pixel_pairs(extracted[0], extracted[1], eval_samples, seed, exclude)?;
    let read = |a: &ImageGray, b: &ImageGray| -> Vec<(f64, f64)> {
        locs.indices.iter().map(|&(r, c)| (a.get(c, r), b.get(c, r))).collect()
    };
    let mut q3 = [0.0; 2];
    let mut q4 = [0.0; 2];
    for i in 0..2 {
        let own = read(extracted[i], sources[i]);
        let other = read(extracted[i], sources[1 - i]);
        q3[i] = kraskov_mi_bits(&own, k, derive_seed(seed, &format!("q3-{i}")))?;
        q4[i] = kraskov_mi_bits(&other, k, derive_seed(seed, &format!("q4-{i}")))?;
    }
    Ok(MiMeasures {
        q3,
        q4,
        locations: locs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentQuality {
    pub q1_db: f64,
    pub q2_db: f64,
    /// Reported MI, clamped at zero.
    pub q3_bits: f64,
    pub q4_bits: f64,
    /// Estimator output before clamping.
    pub q3_raw: f64,
    pub q4_raw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalParams {
    pub samples: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            samples: 5000,
            k: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub components: [ComponentQuality; 2],
    pub eval: EvalParams,
}

impl QualityReport {
    /// Mean Q2 over both components; the ranking key for best/worst runs.
    pub fn mean_q2(&self) -> f64 {
        0.5 * (self.components[0].q2_db + self.components[1].q2_db)
    }

    /// True when all MI estimates are above [`MI_NOISE_FLOOR`].
    pub fn mi_within_noise_floor(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.q3_raw > MI_NOISE_FLOOR && c.q4_raw > MI_NOISE_FLOOR)
    }
}

/// All four measures for an extracted pair against its sources.
pub fn evaluate(
    extracted: [&ImageGray; 2],
    sources: [&ImageGray; 2],
    exclude: Option<&PixelPairSet>,
    params: EvalParams,
) -> Result<QualityReport> {
    let mi = q3_q4(extracted, sources, params.samples, exclude, params.seed, params.k)?;
    let mut components = [ComponentQuality {
        q1_db: 0.0,
        q2_db: 0.0,
        q3_bits: 0.0,
        q4_bits: 0.0,
        q3_raw: 0.0,
        q4_raw: 0.0,
    }; 2];
    for i in 0..2 {
        components[i] = ComponentQuality {
            q1_db: q1_snr(extracted[i], sources[i])?,
            q2_db: q2_snr(extracted[i], sources[i])?.0,
            q3_bits: mi.q3[i].max(0.0),
            q4_bits: mi.q4[i].max(0.0),
            q3_raw: mi.q3[i],
            q4_raw: mi.q4[i],
        };
    }
    Ok(QualityReport {
        components,
        eval: params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Linear,
    Nonlinear,
    /// Components extracted outside this crate and supplied as images.
    Extracted,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Linear => "linear",
            Method::Nonlinear => "nonlinear",
            Method::Extracted => "extracted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Best,
    Worst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pair: String,
    pub method: Method,
    pub component: usize,
    pub statistic: Statistic,
    /// Run index for best/worst rows.
    pub run: Option<usize>,
    pub runs: usize,
    pub q1_db: f64,
    pub q2_db: f64,
    pub q3_bits: f64,
    pub q4_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub runs: usize,
    pub best: usize,
    pub worst: usize,
    pub mean: [ComponentQuality; 2],
}

/// Mean per measure over runs and the best/worst run by mean Q2.
pub fn summarize(runs: &[QualityReport]) -> Result<SeriesSummary> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter("empty run list".into()));
    }
    let n = runs.len() as f64;
    let avg = |f: &dyn Fn(&ComponentQuality) -> f64, i: usize| runs.iter().map(|r| f(&r.components[i])).sum::<f64>() / n;
    let mut mean = runs[0].components;
    for (i, m) in mean.iter_mut().enumerate() {
        *m = ComponentQuality {
            q1_db: avg(&|c| c.q1_db, i),
            q2_db: avg(&|c| c.q2_db, i),
            q3_bits: avg(&|c| c.q3_bits, i),
            q4_bits: avg(&|c| c.q4_bits, i),
            q3_raw: avg(&|c| c.q3_raw, i),
            q4_raw: avg(&|c| c.q4_raw, i),
        };
    }
    // first index wins ties
    let mut best = 0;
    let mut worst = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.mean_q2() > runs[best].mean_q2() {
            best = i;
        }
        if r.mean_q2() < runs[worst].mean_q2() {
            worst = i;
        }
    }
    Ok(SeriesSummary {
        runs: runs.len(),
        best,
        worst,
        mean,
    })
}

/// Builds the result table: the unseparated baseline first, then one block
/// per method in `series` order (mean, best, worst rows per component).
pub fn build_report(
    pair: &str,
    baseline: &QualityReport,
    series: &[(Method, Vec<QualityReport>)],
) -> Result<ReportTable> {
    let mut rows = Vec::new();
    for (i, c) in baseline.components.iter().enumerate() {
        rows.push(ReportRow {
            pair: pair.to_string(),
            method: Method::Baseline,
            component: i + 1,
            statistic: Statistic::Mean,
            run: None,
            runs: 1,
            q1_db: c.q1_db,
            q2_db: c.q2_db,
            q3_bits: c.q3_bits,
            q4_bits: c.q4_bits,
        });
    }
    let mut ordered: Vec<&(Method, Vec<QualityReport>)> = series.iter().collect();
    ordered.sort_by_key(|(m, _)| *m);
    for (method, runs) in ordered {
        let summary = summarize(runs)?;
        for i in 0..2 {
            let entries = [
                (Statistic::Mean, None, summary.mean[i]),
                (Statistic::Best, Some(summary.best), runs[summary.best].components[i]),
                (Statistic::Worst, Some(summary.worst), runs[summary.worst].components[i]),
            ];
            for (statistic, run, c) in entries {
                rows.push(ReportRow {
                    pair: pair.to_string(),
                    method: *method,
                    component: i + 1,
                    statistic,
                    run,
                    runs: runs.len(),
                    q1_db: c.q1_db,
                    q2_db: c.q2_db,
                    q3_bits: c.q3_bits,
                    q4_bits: c.q4_bits,
                });
            }
        }
    }
    Ok(ReportTable { rows })
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair,method,component,statistic,run,runs,q1_db,q2_db,q3_bits,q4_bits\n");
        for r in &self.rows {
            let stat = match r.statistic {
                Statistic::Mean => "mean",
                Statistic::Best => "best",
                Statistic::Worst => "worst",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.pair,
                r.method.as_str(),
                r.component,
                stat,
                r.run.map(|v| v.to_string()).unwrap_or_default(),
                r.runs,
                r.q1_db,
                r.q2_db,
                r.q3_bits,
                r.q4_bits
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn find(&self, method: Method, component: usize, statistic: Statistic) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.component == component && r.statistic == statistic)
    }
}
