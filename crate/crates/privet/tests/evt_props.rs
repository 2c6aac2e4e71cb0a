mod common;

use privet::evt::{fit_both, fit_family, Family, TailFit, TailWindow};
use privet::knn::NNDistanceSet;
use privet::rng;
use proptest::prelude::*;

fn weibull_draws(n: usize, alpha: f64, seed: u64) -> Vec<f64> {
    let mut g = rng::stream(seed, "evt-weibull");
    (0..n).map(|_| (-rng::open_unit(&mut g).ln()).powf(1.0 / alpha)).collect()
}

/// Minimum-Gumbel law `F(u) = 1 - exp(-exp(B u))` by inversion.
fn gumbel_draws(n: usize, b: f64, seed: u64) -> Vec<f64> {
    let mut g = rng::stream(seed, "evt-gumbel");
    (0..n).map(|_| (-rng::open_unit(&mut g).ln()).ln() / b).collect()
}

#[test]
fn recovers_weibull_alpha_five() {
    let d = NNDistanceSet::from_values(&weibull_draws(100_000, 5.0, 1), 100_000);
    let (f, _) = fit_both(&d, &TailWindow::default()).unwrap();
    assert_eq!(f.family, Family::Weibull);
    assert!((4.75..=5.25).contains(&f.shape), "alpha {}", f.shape);
}

#[test]
fn recovers_gumbel_b_two() {
    let d = NNDistanceSet::from_values(&gumbel_draws(100_000, 2.0, 2), 100_000);
    let (f, _) = fit_both(&d, &TailWindow::default()).unwrap();
    assert_eq!(f.family, Family::Gumbel);
    assert!((f.shape / 2.0 - 1.0).abs() <= 0.05, "B {}", f.shape);
}

#[test]
fn tiny_window_is_rejected() {
    let v = weibull_draws(30, 3.0, 3);
    let e = fit_family(&{ let mut s = v.clone(); s.sort_by(f64::total_cmp); s }, &TailWindow::default(), Family::Weibull, 30)
        .unwrap_err();
    assert!(matches!(e, privet::PrivetError::WindowTooSmall { .. }), "{e}");
}

#[test]
fn weibull_closed_forms() {
    let f = TailFit::from_params(Family::Weibull, 0.0, 2.0, 100).unwrap();
    assert_eq!(f.cdf(0.0), 0.0);
    assert!((f.cdf(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    assert!((f.quantile(1.0 - (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn cdf_matches_integrated_density() {
    let d = NNDistanceSet::from_values(&weibull_draws(20_000, 5.0, 4), 20_000);
    for fit in [
        fit_family(&d.distances, &TailWindow::default(), Family::Weibull, 20_000).unwrap(),
        fit_family(&d.distances, &TailWindow::default(), Family::Gumbel, 20_000).unwrap(),
    ] {
        let lo = fit.quantile(1e-12).unwrap().max(0.0);
        let hi = fit.quantile(1.0 - 1e-12).unwrap();
        let mut g = rng::stream(4, "cdf-points");
        let mut u: Vec<f64> = (0..1_000_000).map(|_| lo + (hi - lo) * rng::unit(&mut g)).collect();
        u.sort_by(f64::total_cmp);
        let (mut acc, mut prev, mut worst) = (fit.cdf(lo), lo, 0.0f64);
        for &x in &u {
            acc += common::simpson(|t| fit.density(t), prev, x, 4);
            prev = x;
            worst = worst.max((acc - fit.cdf(x)).abs());
        }
        assert!(worst <= 1e-9, "{:?}: {worst}", fit.family);
    }
}

#[test]
fn quantile_inverts_cdf() {
    let d = NNDistanceSet::from_values(&gumbel_draws(5000, 0.5, 5), 5000);
    let gum = fit_family(&d.distances, &TailWindow::default(), Family::Gumbel, 5000).unwrap();
    let wei = TailFit::from_params(Family::Weibull, -3.0, 7.0, 10).unwrap();
    let mut g = rng::stream(5, "quantile");
    for _ in 0..10_000 {
        let p = rng::open_unit(&mut g);
        for f in [&gum, &wei] {
            let u = f.quantile(p).unwrap();
            assert!((f.cdf(u) - p).abs() <= 1e-12, "{:?} p={p}", f.family);
        }
    }
    let qs: Vec<f64> = (1..100).map(|i| gum.quantile(i as f64 / 100.0).unwrap()).collect();
    assert!(qs.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn rescale_identity_and_factor() {
    let f = TailFit::from_params(Family::Weibull, -2.0, 25.0, 500).unwrap();
    let same = f.rescale(500);
    assert_eq!((same.ln_a, same.shape, same.n_reference), (f.ln_a, f.shape, f.n_reference));
    let big = TailFit::from_params(Family::Weibull, -2.0, 25.0, 5000).unwrap();
    let k = big.distance_rescale_factor(1000);
    assert!((k - 5f64.powf(1.0 / 25.0)).abs() < 1e-15);
    assert!((k - 1.0665).abs() < 5e-5, "{k}");
}

/// Nearest of N uniform points in [-1, 1]^3 to the origin.
fn cube_minima(n_points: usize, reps: usize, seed: u64) -> Vec<f64> {
    let mut g = rng::stream(seed, "cube");
    (0..reps)
        .map(|_| {
            (0..n_points)
                .map(|_| {
                    let x = 2.0 * rng::unit(&mut g) - 1.0;
                    let y = 2.0 * rng::unit(&mut g) - 1.0;
                    let z = 2.0 * rng::unit(&mut g) - 1.0;
                    x * x + y * y + z * z
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

#[test]
fn rescaled_fit_predicts_smaller_reference() {
    let big = cube_minima(1000, 20_000, 6);
    let small = cube_minima(200, 20_000, 7);
    let d = NNDistanceSet::from_values(&big, 1000);
    let fit = fit_family(&d.distances, &TailWindow::default(), Family::Weibull, 1000).unwrap();
    let moved = fit.rescale(200);
    let ks = common::ks_distance(&small, |u| moved.cdf(u));
    assert!(ks <= 0.02, "KS {ks}, alpha {}", fit.shape);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// Scaling every distance by c leaves the Weibull shape unchanged and
    /// moves ln A by -alpha ln c.
    #[test]
    fn weibull_fit_is_scale_equivariant(c in 0.01f64..100.0, seed in 0u64..1000) {
        let v = weibull_draws(3000, 8.0, seed);
        let w: Vec<f64> = v.iter().map(|x| x * c).collect();
        let a = fit_family(&NNDistanceSet::from_values(&v, 3000).distances, &TailWindow::default(), Family::Weibull, 3000).unwrap();
        let b = fit_family(&NNDistanceSet::from_values(&w, 3000).distances, &TailWindow::default(), Family::Weibull, 3000).unwrap();
        prop_assert!((a.shape - b.shape).abs() <= 1e-6 * a.shape);
        prop_assert!((a.ln_a - a.shape * c.ln() - b.ln_a).abs() <= 1e-5 * a.ln_a.abs().max(1.0));
    }

    #[test]
    fn cdf_is_a_cdf(ln_a in -50.0f64..5.0, shape in 0.5f64..60.0, u in 0.0f64..10.0, v in 0.0f64..10.0) {
        for fam in [Family::Weibull, Family::Gumbel] {
            let f = TailFit::from_params(fam, ln_a, shape, 10).unwrap();
            let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
            prop_assert!((0.0..=1.0).contains(&f.cdf(lo)));
            prop_assert!(f.cdf(lo) <= f.cdf(hi));
            prop_assert!(f.ln_cdf(lo) <= 0.0 && f.ln_sf(lo) <= 0.0);
        }
    }
}
