mod common;

use privet::data::DataMatrix;
use privet::knn::{nearest, nn_distances, pairwise_min_profile, Metric};
use privet::rng;
use proptest::prelude::*;

fn random_binary(n: usize, d: usize, g: &mut rng::Rng) -> DataMatrix {
    let v: Vec<u8> = (0..n * d).map(|_| rng::below(g, 2) as u8).collect();
    DataMatrix::from_binary(n, d, &v).unwrap()
}

fn random_float(n: usize, d: usize, g: &mut rng::Rng) -> DataMatrix {
    let v: Vec<f64> = (0..n * d).map(|_| 2.0 * rng::unit(g) - 1.0).collect();
    DataMatrix::from_f64(n, d, v).unwrap()
}

#[test]
fn hand_checked_pair() {
    let q = DataMatrix::from_binary(2, 2, &[0, 0, 1, 1]).unwrap();
    let r = DataMatrix::from_binary(2, 2, &[0, 0, 0, 1]).unwrap();
    let d = nn_distances(&q, &r, Metric::Hamming, false).unwrap();
    assert_eq!(d.distances, vec![0.0, 1.0]);
}

#[test]
fn duplicate_pair_gives_zero() {
    let m = DataMatrix::from_binary(3, 3, &[1, 0, 1, 1, 0, 1, 0, 1, 0]).unwrap();
    let d = pairwise_min_profile(&m, Metric::Hamming).unwrap();
    assert_eq!(d.distances[0], 0.0);
    let same = DataMatrix::from_binary(3, 2, &[1, 0, 1, 0, 1, 0]).unwrap();
    assert_eq!(pairwise_min_profile(&same, Metric::Hamming).unwrap().distances, vec![0.0; 3]);
    let two = DataMatrix::from_binary(2, 8, &[1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
    assert_eq!(pairwise_min_profile(&two, Metric::Hamming).unwrap().distances, vec![5.0, 5.0]);
}

#[test]
fn metric_must_match_dtype() {
    let b = DataMatrix::from_binary(2, 2, &[0, 0, 1, 1]).unwrap();
    let f = DataMatrix::from_f64(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    assert!(nearest(&b, &b, Metric::Euclidean, false).is_err());
    assert!(nearest(&f, &f, Metric::Hamming, false).is_err());
}

/// 100 random instances, n <= 300 and d <= 512, against the double loop.
#[test]
fn matches_naive_oracle_on_random_instances() {
    let mut g = rng::stream(2024, "knn-oracle");
    for t in 0..100 {
        let nq = 1 + rng::below(&mut g, 300);
        let nr = 2 + rng::below(&mut g, 299);
        let d = 1 + rng::below(&mut g, 512);
        let excl = t % 3 == 0;
        let nr = if excl { nq.max(2) } else { nr };
        let nq = if excl { nr } else { nq };
        if t % 2 == 0 {
            let r = random_binary(nr, d, &mut g);
            let q = if excl { r.clone() } else { random_binary(nq, d, &mut g) };
            let ours = nearest(&q, &r, Metric::Hamming, excl).unwrap();
            let oracle = common::naive_nn(&q, &r, excl);
            for (a, b) in ours.iter().zip(&oracle) {
                assert_eq!(a.dist, *b, "instance {t}");
            }
        } else {
            let r = random_float(nr, d, &mut g);
            let q = if excl { r.clone() } else { random_float(nq, d, &mut g) };
            let ours = nearest(&q, &r, Metric::Euclidean, excl).unwrap();
            let oracle = common::naive_nn(&q, &r, excl);
            for (a, b) in ours.iter().zip(&oracle) {
                assert!((a.dist - b).abs() <= 1e-12 * b.max(1.0), "instance {t}: {} vs {b}", a.dist);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn profile_equals_self_excluded_nn(n in 2usize..60, d in 1usize..200, seed in any::<u64>()) {
        let mut g = rng::stream(seed, "profile");
        let m = random_binary(n, d, &mut g);
        let a = pairwise_min_profile(&m, Metric::Hamming).unwrap();
        let b = nn_distances(&m, &m, Metric::Hamming, true).unwrap();
        prop_assert_eq!(a.distances, b.distances);
    }

    #[test]
    fn distances_sorted_and_ranks_consistent(n in 1usize..50, d in 1usize..64, seed in any::<u64>()) {
        let mut g = rng::stream(seed, "ranks");
        let q = random_float(n, d, &mut g);
        let r = random_float(n + 1, d, &mut g);
        let s = nn_distances(&q, &r, Metric::Euclidean, false).unwrap();
        prop_assert!(s.distances.windows(2).all(|w| w[0] <= w[1]));
        let rows = s.row_distances();
        for (i, k) in s.ranks().into_iter().enumerate() {
            prop_assert_eq!(s.distances[k], rows[i]);
        }
    }
}
