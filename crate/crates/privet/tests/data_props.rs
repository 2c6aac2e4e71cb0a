use privet::data::{load_matrix, save_matrix, split, split_indices, DataMatrix, Dtype, DtypeHint, Format, SplitSpec};
use privet::rng;
use proptest::prelude::*;

fn random_binary(n: usize, d: usize, seed: u64) -> DataMatrix {
    let mut g = rng::stream(seed, "data-test");
    let v: Vec<u8> = (0..n * d).map(|_| rng::below(&mut g, 2) as u8).collect();
    DataMatrix::from_binary(n, d, &v).unwrap()
}

#[test]
fn csv_of_zeros_and_ones_is_binary() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    std::fs::write(&p, "0,1,1,0\n1,1,1,1\n0,0,0,1\n").unwrap();
    let m = load_matrix(&p, Format::Csv, DtypeHint::Auto).unwrap();
    assert_eq!((m.n_rows(), m.n_cols(), m.dtype()), (3, 4, Dtype::Binary));
    assert!(m.bit(0, 1) && !m.bit(2, 2));
}

#[test]
fn ragged_csv_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    std::fs::write(&p, "0,1,1,0\n1,1,1,1,0\n").unwrap();
    let e = load_matrix(&p, Format::Csv, DtypeHint::Auto).unwrap_err();
    assert!(e.to_string().contains("ragged"), "{e}");
}

#[test]
fn header_row_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    std::fs::write(&p, "a,b\n0.5,1\n2,3\n").unwrap();
    let m = load_matrix(&p, Format::Csv, DtypeHint::Auto).unwrap();
    assert_eq!((m.n_rows(), m.dtype()), (2, Dtype::Float64));
    assert_eq!(m.get(0, 0), 0.5);
}

#[test]
fn wide_binary_round_trips_bit_exactly() {
    let m = random_binary(1668, 65535, 1);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("wide.bin");
    save_matrix(&m, &p, Format::DenseBinary).unwrap();
    let back = load_matrix(&p, Format::DenseBinary, DtypeHint::Auto).unwrap();
    assert_eq!(back, m);
}

#[test]
fn identity_and_tenth_round_trip_in_dense_format() {
    let m = DataMatrix::from_f64(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let t = DataMatrix::from_f64(1, 1, vec![0.1]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (k, x) in [&m, &t].into_iter().enumerate() {
        let p = dir.path().join(format!("{k}.bin"));
        save_matrix(x, &p, Format::DenseBinary).unwrap();
        let back = load_matrix(&p, Format::DenseBinary, DtypeHint::Auto).unwrap();
        assert_eq!(&back, x);
    }
    let p = dir.path().join("1.bin");
    let back = load_matrix(&p, Format::DenseBinary, DtypeHint::Auto).unwrap();
    assert_eq!(back.get(0, 0).to_bits(), 0.1f64.to_bits());
}

#[test]
fn six_rows_split_two_two_two() {
    let spec = SplitSpec {
        seed: 0,
        n_train: 2,
        n_test: 2,
        n_synth: 2,
    };
    let ix = split_indices(6, &spec).unwrap();
    let mut all: Vec<usize> = ix.train.iter().chain(&ix.test).chain(&ix.synth).copied().collect();
    all.sort();
    assert_eq!(all, (0..6).collect::<Vec<_>>());
    assert_eq!(split_indices(6, &spec).unwrap(), ix);
    let too_big = SplitSpec { n_train: 4, ..spec };
    assert!(split_indices(6, &too_big).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn binary_csv_binary_round_trip(n in 1usize..20, d in 1usize..150, seed in any::<u64>()) {
        let m = random_binary(n, d, seed);
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("m.csv");
        let b = dir.path().join("m.bin");
        save_matrix(&m, &c, Format::Csv).unwrap();
        let via_csv = load_matrix(&c, Format::Csv, DtypeHint::Binary).unwrap();
        save_matrix(&via_csv, &b, Format::DenseBinary).unwrap();
        let back = load_matrix(&b, Format::DenseBinary, DtypeHint::Auto).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn float_csv_round_trip_is_exact(vals in prop::collection::vec(-1e6f64..1e6, 1..60)) {
        let m = DataMatrix::from_f64(1, vals.len(), vals.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("m.csv");
        save_matrix(&m, &c, Format::Csv).unwrap();
        let back = load_matrix(&c, Format::Csv, DtypeHint::Float64).unwrap();
        prop_assert_eq!(back.values(), m.values());
    }

    #[test]
    fn split_parts_are_disjoint_and_sized(n in 3usize..200, a in 1usize..50, b in 1usize..50, c in 1usize..50, seed in any::<u64>()) {
        prop_assume!(a + b + c <= n);
        let spec = SplitSpec { seed, n_train: a, n_test: b, n_synth: c };
        let ix = split_indices(n, &spec).unwrap();
        prop_assert_eq!((ix.train.len(), ix.test.len(), ix.synth.len()), (a, b, c));
        let mut all: Vec<usize> = ix.train.iter().chain(&ix.test).chain(&ix.synth).copied().collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), a + b + c);
        prop_assert!(all.iter().all(|&i| i < n));
        let m = random_binary(n, 7, seed);
        let (tr, _, _) = split(&m, &spec).unwrap();
        prop_assert_eq!(tr.unpack_row(0), m.unpack_row(ix.train[0]));
    }
}
