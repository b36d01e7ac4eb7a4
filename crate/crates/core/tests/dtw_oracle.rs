use leadsynth::dtw::{dtw_distance, nearest_beat, z_normalize, DtwConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Minimum cost over every monotone warping path that stays within the band,
/// and the shortest length among the paths reaching it.
fn brute_force(a: &[f64], b: &[f64], band: usize) -> (f64, usize) {
    fn walk(a: &[f64], b: &[f64], band: usize, i: usize, j: usize, cost: f64, len: usize, best: &mut (f64, usize)) {
        if i.abs_diff(j) > band {
            return;
        }
        let d = a[i] - b[j];
        let (cost, len) = (cost + d * d, len + 1);
        if i + 1 == a.len() && j + 1 == b.len() {
            if cost < best.0 || (cost == best.0 && len < best.1) {
                *best = (cost, len);
            }
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, band, i + 1, j, cost, len, best);
        }
        if j + 1 < b.len() {
            walk(a, b, band, i, j + 1, cost, len, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, band, i + 1, j + 1, cost, len, best);
        }
    }
    let mut best = (f64::INFINITY, usize::MAX);
    walk(a, b, band, 0, 0, 0.0, 0, &mut best);
    best
}

fn small_ints() -> impl Strategy<Value = Vec<f64>> {
    // integer values keep the sums exact, so ties are real ties
    prop::collection::vec((-4i32..=4).prop_map(f64::from), 1..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_exhaustive_path_search(a in small_ints(), b in small_ints(), frac in prop::sample::select(vec![0.15, 0.3, 0.5, 1.0])) {
        let raw = DtwConfig { window_fraction: frac, normalize: false };
        let band = raw.band(a.len(), b.len());
        let (cost, len) = brute_force(&a, &b, band);
        prop_assert_eq!(dtw_distance(&a, &b, &raw).unwrap(), cost);
        let norm = DtwConfig { window_fraction: frac, normalize: true };
        let got = dtw_distance(&a, &b, &norm).unwrap();
        prop_assert!((got - cost / len as f64).abs() < 1e-12, "{} vs {}/{}", got, cost, len);
    }

    #[test]
    fn symmetric_and_zero_on_identity(a in small_ints(), b in small_ints()) {
        let cfg = DtwConfig::default();
        prop_assert_eq!(dtw_distance(&a, &a, &cfg).unwrap(), 0.0);
        prop_assert_eq!(dtw_distance(&a, &b, &cfg).unwrap(), dtw_distance(&b, &a, &cfg).unwrap());
    }

    #[test]
    fn band_never_lowers_the_cost(a in prop::collection::vec(-3.0f64..3.0, 2..40), b in prop::collection::vec(-3.0f64..3.0, 2..40)) {
        let full = dtw_distance(&a, &b, &DtwConfig::full_window()).unwrap();
        let banded = dtw_distance(&a, &b, &DtwConfig { window_fraction: 0.15, normalize: false }).unwrap();
        prop_assert!(banded >= full - 1e-9);
    }
}

fn shapes() -> Vec<Vec<f64>> {
    let n = 80;
    let t = |i: usize| i as f64 / n as f64;
    vec![
        (0..n).map(|i| (-((t(i) - 0.5) / 0.05).powi(2)).exp()).collect(),
        (0..n).map(|i| (std::f64::consts::TAU * t(i)).sin()).collect(),
        (0..n)
            .map(|i| (-((t(i) - 0.3) / 0.04).powi(2)).exp() - 0.6 * (-((t(i) - 0.7) / 0.08).powi(2)).exp())
            .collect(),
    ]
}

#[test]
fn noisy_copy_finds_its_source() {
    let lib: Vec<Vec<f64>> = shapes().iter().map(|s| z_normalize(s)).collect();
    let cfg = DtwConfig::default();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = &shapes()[2];
        let power = src.iter().map(|v| v * v).sum::<f64>() / src.len() as f64;
        let noise = Normal::new(0.0, (power / 100.0).sqrt()).unwrap();
        let q: Vec<f64> = src.iter().map(|v| v + noise.sample(&mut rng)).collect();
        assert_eq!(nearest_beat(&z_normalize(&q), &lib, &cfg).unwrap().0, 2, "seed {seed}");
    }
    for (k, s) in lib.iter().enumerate() {
        let (idx, cost) = nearest_beat(s, &lib, &cfg).unwrap();
        assert_eq!((idx, cost), (k, 0.0));
    }
}

#[test]
fn empty_inputs_are_errors() {
    let cfg = DtwConfig::default();
    assert!(dtw_distance::<f64>(&[], &[1.0], &cfg).is_err());
    assert!(nearest_beat::<f64, Vec<f64>>(&[1.0], &[], &cfg).is_err());
    assert!(dtw_distance(
        &[1.0],
        &[1.0],
        &DtwConfig {
            window_fraction: 0.0,
            normalize: true
        }
    )
    .is_err());
}
