use std::collections::HashSet;

use misep::imagery::sample_pixel_pairs;
use misep::metrics::{fit_monotone_map, kraskov_mi, kraskov_mi_bits, q1_snr, q2_snr, q3_q4, Orientation};
use misep::mixsim::generate_bars_pair;
use misep::ImageGray;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Minimum residual over all contiguous partitions of the levels whose block
/// means are monotone in either direction.
fn exhaustive_residual(y: &[f64], s: &[f64]) -> f64 {
    let mut levels: Vec<f64> = y.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let l = levels.len();
    let mut w = vec![0.0; l];
    let mut sum = vec![0.0; l];
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    for &i in &idx {
        let k = levels.iter().position(|&v| v == y[i]).unwrap();
        w[k] += 1.0;
        sum[k] += s[i];
    }
    let m: Vec<f64> = sum.iter().zip(&w).map(|(a, b)| a / b).collect();
    let mut best = f64::INFINITY;
    for cuts in 0u32..(1 << (l - 1)) {
        let mut blocks = Vec::new();
        let mut start = 0;
        for k in 0..l {
            if k == l - 1 || cuts & (1 << k) != 0 {
                blocks.push(start..k + 1);
                start = k + 1;
            }
        }
        let values: Vec<f64> = blocks
            .iter()
            .map(|b| {
                let (mut num, mut den) = (0.0, 0.0);
                for k in b.clone() {
                    num += w[k] * m[k];
                    den += w[k];
                }
                num / den
            })
            .collect();
        let up = values.windows(2).all(|p| p[0] <= p[1]);
        let down = values.windows(2).all(|p| p[0] >= p[1]);
        if !(up || down) {
            continue;
        }
        let mut fitted = vec![0.0; l];
        for (b, v) in blocks.iter().zip(&values) {
            for k in b.clone() {
                fitted[k] = *v;
            }
        }
        let r: f64 = (0..l).map(|k| w[k] * (fitted[k] - m[k]) * (fitted[k] - m[k])).sum();
        best = best.min(r);
    }
    best
}

fn row(data: Vec<f64>) -> ImageGray {
    let n = data.len();
    ImageGray::new(n, 1, data).unwrap()
}

#[test]
fn pava_equals_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let levels = rng.random_range(2..=8);
        let n = rng.random_range(levels..40);
        let mut y: Vec<f64> = (0..n).map(|i| (i % levels) as f64 / 7.0).collect();
        for i in (1..n).rev() {
            y.swap(i, rng.random_range(0..=i));
        }
        let s: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let map = fit_monotone_map(&row(y.clone()), &row(s.clone())).unwrap();
        assert_eq!(map.residual, exhaustive_residual(&y, &s));
    }
}

#[test]
fn pava_example_pools_first_two_levels() {
    // levels 1, 2, 3 with source means 0.5, 0.2, 0.9
    let y = vec![1.0, 1.0, 2.0, 2.0, 3.0];
    let s = vec![0.4, 0.6, 0.1, 0.3, 0.9];
    let map = fit_monotone_map(&row(y), &row(s)).unwrap();
    assert_eq!(map.orientation, Orientation::Increasing);
    assert_eq!(map.levels, vec![1.0, 2.0, 3.0]);
    assert!((map.values[0] - 0.35).abs() < 1e-15);
    assert!((map.values[1] - 0.35).abs() < 1e-15);
    assert!((map.values[2] - 0.9).abs() < 1e-15);
}

#[test]
fn q2_dominates_q1_and_is_cube_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in 0..100 {
        let s: Vec<f64> = (0..400).map(|_| (rng.random_range(0..256) as f64) / 255.0).collect();
        let a = 2.0 * rng.random::<f64>() - 1.0;
        let y: Vec<f64> = s
            .iter()
            .map(|v| ((a * v + 0.3 * rng.random::<f64>()) * 255.0).round() / 255.0)
            .collect();
        let (y, s) = (row(y), row(s));
        let q1 = q1_snr(&y, &s).unwrap();
        let (q2, _) = q2_snr(&y, &s).unwrap();
        assert!(q2 >= q1, "case {t}: {q2} < {q1}");
        let cubed = y.map(|v| v * v * v).unwrap();
        assert_eq!(q2_snr(&cubed, &s).unwrap().0, q2, "case {t}");
    }
}

fn gaussian_pairs(n: usize, rho: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            (a, rho * a + (1.0 - rho * rho).sqrt() * b)
        })
        .collect()
}

fn gaussian_mi_bits(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln() / std::f64::consts::LN_2
}

#[test]
fn gaussian_oracle_and_uniform_independence() {
    let truth = gaussian_mi_bits(0.6);
    assert!((truth - 0.3219).abs() < 1e-4);
    let est = kraskov_mi_bits(&gaussian_pairs(5000, 0.6, 7), 3, 7).unwrap();
    assert!((est - truth).abs() < 0.05, "{est}");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pts: Vec<(f64, f64)> = (0..5000).map(|_| (rng.random(), rng.random())).collect();
    assert!(kraskov_mi_bits(&pts, 3, 8).unwrap().abs() < 0.05);
}

#[test]
fn mi_invariant_under_cubing() {
    let pts = gaussian_pairs(5000, 0.6, 21);
    let base = kraskov_mi_bits(&pts, 3, 1).unwrap();
    let cubed: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, y * y * y)).collect();
    let c = kraskov_mi_bits(&cubed, 3, 1).unwrap();
    assert!((base - c).abs() < 0.05, "{base} vs {c}");
}

#[test]
fn mi_symmetric_in_coordinates() {
    let pts = gaussian_pairs(2000, 0.4, 3);
    let swapped: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (y, x)).collect();
    let a = misep::metrics::ksg_nats(
        &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
        &pts.iter().map(|p| p.1).collect::<Vec<_>>(),
        3,
    )
    .unwrap();
    let b = misep::metrics::ksg_nats(
        &swapped.iter().map(|p| p.0).collect::<Vec<_>>(),
        &swapped.iter().map(|p| p.1).collect::<Vec<_>>(),
        3,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn estimator_error_shrinks_with_sample_size() {
    let truth = gaussian_mi_bits(0.6);
    let rmse = |n: usize| {
        let sq: f64 = (0..10)
            .map(|s| {
                let e = kraskov_mi_bits(&gaussian_pairs(n, 0.6, 1000 + s), 3, s).unwrap() - truth;
                e * e
            })
            .sum();
        (sq / 10.0).sqrt()
    };
    let (a, b, c) = (rmse(500), rmse(2000), rmse(5000));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn quantized_ties_are_handled() {
    let (s1, s2) = generate_bars_pair(25, 200, 4).unwrap();
    let set = sample_pixel_pairs(&s1, &s2, 5000, 5, None).unwrap();
    let mi = kraskov_mi(&set, 3).unwrap();
    assert!(mi.abs() < 0.05, "{mi}");
}

#[test]
fn q3_q4_perfect_and_null_extractions() {
    let (s1, s2) = generate_bars_pair(25, 200, 6).unwrap();
    let train = sample_pixel_pairs(&s1, &s2, 5000, 1, None).unwrap();
    let perfect = q3_q4([&s1, &s2], [&s1, &s2], 5000, Some(&train), 2, 3).unwrap();
    assert_eq!(perfect.locations, 5000);
    for i in 0..2 {
        assert!(perfect.q4[i] < 0.05, "{:?}", perfect);
        assert!(perfect.q3[i] > 3.0, "{:?}", perfect);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n1 = ImageGray::from_fn(200, 200, |_, _| rng.random::<f64>()).unwrap();
    let n2 = ImageGray::from_fn(200, 200, |_, _| rng.random::<f64>()).unwrap();
    let null = q3_q4([&n1, &n2], [&s1, &s2], 5000, Some(&train), 2, 3).unwrap();
    for i in 0..2 {
        assert!(null.q3[i] < 0.05 && null.q4[i] < 0.05, "{:?}", null);
    }
    let small = sample_pixel_pairs(&s1, &s2, 39_000, 1, None).unwrap();
    assert!(q3_q4([&s1, &s2], [&s1, &s2], 5000, Some(&small), 2, 3).is_err());
}

#[test]
fn evaluation_locations_avoid_training_pixels() {
    let (s1, s2) = generate_bars_pair(25, 100, 6).unwrap();
    let train = sample_pixel_pairs(&s1, &s2, 5000, 1, None).unwrap();
    let eval = sample_pixel_pairs(&s1, &s2, 5000, 2, Some(&train)).unwrap();
    let a: HashSet<_> = train.indices.iter().collect();
    assert!(eval.indices.iter().all(|i| !a.contains(i)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q2_strict_monotone_invariance(
        data in prop::collection::vec((0u8..32, 0.0f64..1.0), 5..60),
        a in 0.1f64..3.0,
        b in -2.0f64..2.0,
    ) {
        let y: Vec<f64> = data.iter().map(|d| f64::from(d.0) / 31.0).collect();
        let s: Vec<f64> = data.iter().map(|d| d.1).collect();
        prop_assume!(y.iter().any(|&v| v != y[0]));
        prop_assume!(s.iter().any(|&v| v != s[0]));
        let (y, s) = (row(y), row(s));
        let (q2, _) = q2_snr(&y, &s).unwrap();
        prop_assert!(q2 >= q1_snr(&y, &s).unwrap());
        let g = y.map(|v| (a * v + b).exp()).unwrap();
        prop_assert_eq!(q2_snr(&g, &s).unwrap().0, q2);
        let flipped = y.map(|v| -v).unwrap();
        prop_assert!((q2_snr(&flipped, &s).unwrap().0 - q2).abs() < 1e-9);
    }
}
