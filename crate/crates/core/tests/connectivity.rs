mod common;

use common::{lstsq_rss, simulate_var1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use starformer_core::connectivity::{build_effective_connectivity, granger_f_test, ols_ar_fit};
use starformer_core::{Error, TimeSeriesMatrix};

#[test]
fn noiseless_ar1_recovers_coefficient() {
    let mut s = vec![1.0];
    for _ in 1..64 {
        let last = *s.last().unwrap();
        s.push(0.5 * last);
    }
    let fit = ols_ar_fit(&s, &[&s], 1).unwrap();
    assert!((fit.coefficients[0] - 0.5).abs() < 1e-8);
    assert!(fit.rss.abs() <= 1e-12);
}

#[test]
fn zero_series_fits_zero() {
    let s = vec![0.0; 32];
    let fit = ols_ar_fit(&s, &[&s], 1).unwrap();
    assert!(fit.coefficients.iter().all(|&c| c == 0.0));
    assert_eq!(fit.intercept, 0.0);
    assert_eq!(fit.rss, 0.0);
}

#[test]
fn too_short_series_is_rejected() {
    let s = vec![1.0; 4];
    assert!(ols_ar_fit(&s, &[&s, &s], 1).is_err());
}

#[test]
fn planted_bivariate_var_coefficients_recovered() {
    // x0(t) = 0.5 x0(t-1) + e;  x1(t) = 0.6 x0(t-1) + 0.3 x1(t-1) + e
    let coef = [0.5, 0.0, 0.6, 0.3];
    let ts = simulate_var1(&coef, 2, 512, 0.1, 42, 200);
    let (x0, x1) = (ts.row(0), ts.row(1));
    let fit = ols_ar_fit(x1, &[x1, x0], 1).unwrap();
    let (oracle, oracle_rss) = lstsq_rss(x1, &[x1, x0], 1);
    assert!((fit.intercept - oracle[0]).abs() < 1e-8);
    for (a, b) in fit.coefficients.iter().zip(&oracle[1..]) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!((fit.rss - oracle_rss).abs() / oracle_rss < 1e-8);
    assert!((fit.coefficients[0] - 0.3).abs() < 0.05);
    assert!((fit.coefficients[1] - 0.6).abs() < 0.05);
}

#[test]
fn constant_zero_source_adds_nothing() {
    let ts = simulate_var1(&[0.5], 1, 200, 1.0, 1, 50);
    let zero = vec![0.0; 200];
    let r = granger_f_test(&zero, ts.row(0), 1, 0.05).unwrap();
    assert!(r.f_stat.abs() < 1e-6);
    assert_eq!(r.decision, 0);
    assert!(r.rss_full <= r.rss_restricted);
}

#[test]
fn lagged_driver_is_detected_and_f_matches_two_regression_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = 512;
    let src: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut dst = vec![0.0; m];
    for t in 1..m {
        dst[t] = 0.9 * src[t - 1] + 1e-3 * rng.random_range(-1.0..1.0);
    }
    let r = granger_f_test(&src, &dst, 1, 0.05).unwrap();
    assert_eq!(r.decision, 1);

    let (_, rss_r) = lstsq_rss(&dst, &[&dst], 1);
    let (_, rss_f) = lstsq_rss(&dst, &[&dst, &src], 1);
    let df = (m - 1 - 3) as f64;
    let f_oracle = (rss_r - rss_f) / (rss_f / df);
    assert!((r.f_stat - f_oracle).abs() / f_oracle <= 1e-8, "{} vs {}", r.f_stat, f_oracle);
    assert_eq!(r.df_den, m - 1 - 3);
}

#[test]
fn exact_fit_is_flagged_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let src: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut dst = vec![0.0; 100];
    for t in 1..100 {
        dst[t] = 0.9 * src[t - 1];
    }
    let r = granger_f_test(&src, &dst, 1, 0.05).unwrap();
    assert!(r.deterministic);
    assert_eq!((r.p_value, r.decision), (0.0, 1));
}

#[test]
fn all_zero_matrix_gives_empty_graph() {
    let ts = TimeSeriesMatrix::from_rows(&vec![vec![0.0; 64]; 5]).unwrap();
    let g = build_effective_connectivity(&ts, 1, 0.05).unwrap();
    assert_eq!(g.edge_count(), 0);
}

#[test]
fn invalid_inputs_are_rejected() {
    let ts = TimeSeriesMatrix::from_rows(&[vec![0.0; 5], vec![0.0; 5]]).unwrap();
    assert!(build_effective_connectivity(&ts, 1, 0.05).is_err());
    let ts = TimeSeriesMatrix::from_rows(&[vec![0.0; 64]]).unwrap();
    assert!(build_effective_connectivity(&ts, 1, 0.05).is_err());
    let ts = TimeSeriesMatrix::from_rows(&[vec![0.0; 64], vec![1.0; 64]]).unwrap();
    assert!(matches!(build_effective_connectivity(&ts, 1, 1.5), Err(Error::Config(_))));
    assert!(TimeSeriesMatrix::from_rows(&[vec![f64::NAN; 4]]).is_err());
}

#[test]
fn planted_chain_recovered_with_controlled_false_positives() {
    // 0 -> 1 -> 2 with coefficient 0.8
    let n = 3;
    let mut coef = vec![0.0; n * n];
    coef[1 * n + 0] = 0.8;
    coef[2 * n + 1] = 0.8;
    let mut spurious = 0;
    for seed in 0..20 {
        let ts = simulate_var1(&coef, n, 512, 0.1, seed, 200);
        let g = build_effective_connectivity(&ts, 1, 0.05).unwrap();
        assert_eq!(g.get(0, 1), 1, "seed {seed}");
        assert_eq!(g.get(1, 2), 1, "seed {seed}");
        for i in 0..n {
            assert_eq!(g.get(i, i), 0);
        }
        spurious += g.edge_count() - 2;
    }
    let rate = spurious as f64 / (20 * 4) as f64;
    assert!(rate <= 0.10, "spurious rate {rate}");
}

#[test]
fn white_noise_edge_density_near_alpha() {
    let n = 10;
    let coef = vec![0.0; n * n];
    let mut total = 0.0;
    for seed in 0..20 {
        let ts = simulate_var1(&coef, n, 512, 1.0, 100 + seed, 0);
        total += build_effective_connectivity(&ts, 1, 0.05).unwrap().density();
    }
    assert!(total / 20.0 <= 0.08, "density {}", total / 20.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn connectivity_is_permutation_equivariant(seed in 0u64..1000, perm_seed in 0u64..1000) {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef: Vec<f64> = (0..n * n).map(|_| if rng.random::<f64>() < 0.3 { 0.3 } else { 0.0 }).collect();
        let ts = simulate_var1(&coef, n, 128, 1.0, seed, 50);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut prng = ChaCha8Rng::seed_from_u64(perm_seed);
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut prng);
        let g = build_effective_connectivity(&ts, 1, 0.05).unwrap();
        let gp = build_effective_connectivity(&ts.permute_rows(&perm).unwrap(), 1, 0.05).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(gp.get(i, j), g.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn full_model_never_fits_worse(seed in 0u64..10_000, lag in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = granger_f_test(&a, &b, lag, 0.05).unwrap();
        prop_assert!(r.rss_full <= r.rss_restricted + 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!(r.f_stat >= 0.0);
        prop_assert_eq!(r.decision == 1, r.p_value < 0.05);
    }
}
