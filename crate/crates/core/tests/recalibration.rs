use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uqkit::calib::{calibration_curve, ece};
use uqkit::recal::{fit_isotonic, pava, recalibrated_report, recalibration_pipeline};
use uqkit::{validate, EvalDataset, PredictionSet, ProbGrid, Split};

/// Best nondecreasing fit found by trying every split into contiguous
/// blocks, each fitted by its mean.
fn brute_force_projection(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let m = v[start..end].iter().sum::<f64>() / (end - start) as f64;
                fit.extend(std::iter::repeat_n(m, end - start));
                start = end;
            }
        }
        if fit.windows(2).any(|w| w[0] > w[1] + 1e-15) {
            continue;
        }
        let sse: f64 = fit.iter().zip(v).map(|(f, x)| (f - x).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-15) {
            best = Some((sse, fit));
        }
    }
    best.unwrap().1
}

fn assert_close(a: &[f64], b: &[f64]) {
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
    }
}

#[test]
fn pava_matches_brute_force_on_every_small_instance() {
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    for n in 1..=6usize {
        let total = levels.len().pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let v: Vec<f64> = (0..n)
                .map(|_| {
                    let x = levels[c % levels.len()];
                    c /= levels.len();
                    x
                })
                .collect();
            assert_close(&pava(&v), &brute_force_projection(&v));
        }
    }
}

proptest! {
    #[test]
    fn pava_matches_brute_force_on_random_values(v in prop::collection::vec(0.0f64..1.0, 1..8)) {
        assert_close(&pava(&v), &brute_force_projection(&v));
    }

    #[test]
    fn pava_output_is_monotone_and_mean_preserving(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let f = pava(&v);
        prop_assert!(f.windows(2).all(|w| w[0] <= w[1]));
        let d = f.iter().sum::<f64>() - v.iter().sum::<f64>();
        prop_assert!(d.abs() < 1e-9);
    }

    #[test]
    fn fitted_map_is_monotone_with_fixed_ends(obs in prop::collection::vec(0.0f64..=1.0, 99)) {
        let grid = ProbGrid::<f64>::default();
        let map = fit_isotonic(grid.probs(), &obs).unwrap();
        prop_assert_eq!(map.apply(0.0).unwrap(), 0.0);
        prop_assert_eq!(map.apply(1.0).unwrap(), 1.0);
        let mut last = 0.0;
        for k in 0..=200 {
            let y = map.apply(k as f64 / 200.0).unwrap();
            prop_assert!(y >= last);
            last = y;
        }
    }
}

/// Targets N(0, 1) with predictions N(0, scale^2).
fn miscalibrated(n: usize, scale: f64, seed: u64) -> (PredictionSet<f64>, EvalDataset<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ys: Vec<f64> = (0..n).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
    (
        PredictionSet::homoscedastic(vec![0.0; n], scale),
        EvalDataset::from_targets(ys, Split::Test),
    )
}

#[test]
fn held_out_ece_improves_for_over_and_under_confidence() {
    let grid = ProbGrid::default();
    for scale in [0.5, 2.0] {
        let (rp, rd) = miscalibrated(10_000, scale, 1);
        let (tp, td) = miscalibrated(10_000, scale, 2);
        let out = recalibration_pipeline(&validate(&rp, &rd).unwrap(), &validate(&tp, &td).unwrap(), &grid).unwrap();
        assert!(out.after.ece < out.before.ece, "scale {scale}: {} -> {}", out.before.ece, out.after.ece);
        assert!(out.after.ece < 0.02);
    }
}

#[test]
fn fitting_split_ece_never_increases() {
    let grid = ProbGrid::default();
    for (seed, scale) in [(3, 0.7), (4, 1.0), (5, 1.6)] {
        let (p, d) = miscalibrated(500, scale, seed);
        let pair = validate(&p, &d).unwrap();
        let curve = calibration_curve(&pair, &grid).unwrap();
        let map = fit_isotonic(grid.probs(), &curve.observed).unwrap();
        let after = recalibrated_report(&pair, &map, &grid).unwrap();
        assert!(after.ece <= ece(&pair, &grid).unwrap() + 1e-12);
    }
}
