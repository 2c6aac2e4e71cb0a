use privet::data::DataMatrix;
use privet::experiments::{population_split, PopulationSpec};
use privet::knn::NNDistanceSet;
use privet::pipeline::{
    classify_regime, emit_report, membership_attack, privet, samples_csv, MembershipConfig, PipelineConfig,
    Regime, NO_TEST_BANNER,
};
use privet::rng;

fn small_spec() -> PopulationSpec {
    PopulationSpec {
        n_features: 1024,
        ..PopulationSpec::default()
    }
}

fn gaussian(n: usize, d: usize, scale: f64, seed: u64, name: &str) -> DataMatrix {
    let mut g = rng::stream(seed, name);
    let v = (0..n * d)
        .map(|_| {
            let (u1, u2) = (rng::open_unit(&mut g), rng::unit(&mut g));
            scale * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    DataMatrix::from_f64(n, d, v).unwrap()
}

/// `synth` with its first `k` rows replaced by train rows `0..k`.
fn with_copies(synth: &DataMatrix, train: &DataMatrix, k: usize) -> DataMatrix {
    let mut out = synth.clone();
    for i in 0..k {
        out.copy_row_from(i, train, i);
    }
    out
}

#[test]
fn null_split_has_few_leaks_and_is_well_fitted() {
    let (train, test, synth) = population_split(&small_spec(), 600, 11).unwrap();
    let r = privet(&train, Some(&test), &synth, &PipelineConfig::default()).unwrap();
    let m = synth.n_rows();
    assert!(r.global.npl as f64 <= 0.01 * m as f64, "npl {} of {m}", r.global.npl);
    assert_eq!(r.regime, Regime::WellFitted, "{:?}", r.regime_evidence);
}

#[test]
fn verbatim_copies_are_all_flagged() {
    let (train, test, synth) = population_split(&small_spec(), 600, 12).unwrap();
    let k = synth.n_rows() / 10;
    let s = with_copies(&synth, &train, k);
    let r = privet(&train, Some(&test), &s, &PipelineConfig::default()).unwrap();
    let frac = r.global.npl as f64 / s.n_rows() as f64;
    assert!((frac - 0.10).abs() <= 0.02, "npl fraction {frac}");
    for smp in &r.samples[..k] {
        assert_eq!(smp.nn_dist_train, 0.0);
        assert!(smp.leak, "copied row {} not flagged", smp.synth_row);
    }
    let flagged = r.samples.iter().filter(|s| s.leak).count();
    assert_eq!(flagged, r.global.npl);
}

#[test]
fn regime_archetypes_on_gaussian_data() {
    let (n, d) = (800, 6);
    let train = gaussian(n, d, 1.0, 1, "train");
    let test = gaussian(n, d, 1.0, 2, "test");
    let cfg = PipelineConfig::default();

    let same = gaussian(n, d, 1.0, 3, "synth");
    let r = privet(&train, Some(&test), &same, &cfg).unwrap();
    assert_eq!(r.regime, Regime::WellFitted, "{:?}", r.regime_evidence);

    // Doubling the synthetic cloud doubles typical distances to the data.
    let wide = gaussian(n, d, 2.0, 3, "synth");
    let r = privet(&train, Some(&test), &wide, &cfg).unwrap();
    assert_eq!(r.regime, Regime::Underfitting, "{:?}", r.regime_evidence);

    let copied = with_copies(&same, &train, n / 5);
    let r = privet(&train, Some(&test), &copied, &cfg).unwrap();
    assert_eq!(r.regime, Regime::Overfitting, "{:?}", r.regime_evidence);
}

#[test]
fn regime_evidence_is_reproducible_from_stored_curves() {
    let (train, test, synth) = population_split(&small_spec(), 400, 13).unwrap();
    let r = privet(&train, Some(&test), &synth, &PipelineConfig::default()).unwrap();
    let (regime, ev) = classify_regime(&r.d_trtr, &r.d_str, r.d_ste.as_ref(), r.config.regime_tolerance).unwrap();
    assert_eq!(regime, r.regime);
    assert_eq!(ev, r.regime_evidence);
}

fn count(hay: &str, needle: &str) -> usize {
    hay.matches(needle).count()
}

/// Balanced-tag check for the small SVG subset the plots use.
fn svg_is_well_formed(svg: &str) -> bool {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = svg;
    while let Some(start) = rest.find('<') {
        let Some(end) = rest[start..].find('>') else {
            return false;
        };
        let tag = &rest[start + 1..start + end];
        rest = &rest[start + end + 1..];
        if tag.starts_with('?') || tag.starts_with('!') || tag.ends_with('/') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            if stack.pop().as_deref() != Some(name.trim()) {
                return false;
            }
        } else {
            let name = tag.split_whitespace().next().unwrap_or("");
            stack.push(name.to_string());
        }
    }
    stack.is_empty()
}

#[test]
fn emitted_files_are_complete_and_stable() {
    let (train, test, synth) = population_split(&small_spec(), 300, 14).unwrap();
    let three = synth.select_rows(&[0, 1, 2]);
    let r = privet(&train, Some(&test), &three, &PipelineConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&r, dir.path()).unwrap();

    let csv = std::fs::read_to_string(&files.samples_csv).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(csv, samples_csv(&r));

    let svg = std::fs::read_to_string(&files.ecdf_svg).unwrap();
    assert!(svg_is_well_formed(&svg));
    assert_eq!(count(&svg, "<polyline"), 4);

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&files.summary_json).unwrap()).unwrap();
    assert_eq!(json["version"], 1);
    assert_eq!(json["global"]["npl"], r.samples.iter().filter(|s| s.leak).count());

    let before: Vec<Vec<u8>> = [&files.samples_csv, &files.summary_json, &files.ecdf_csv, &files.ecdf_svg]
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
    let again = privet(&train, Some(&test), &three, &PipelineConfig::default()).unwrap();
    let files = emit_report(&again, dir.path()).unwrap();
    let after: Vec<Vec<u8>> = [&files.samples_csv, &files.summary_json, &files.ecdf_csv, &files.ecdf_svg]
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn no_test_mode_is_overfitting_only() {
    let (train, _, synth) = population_split(&small_spec(), 300, 15).unwrap();
    let s = with_copies(&synth, &train, 10);
    let r = privet(&train, None, &s, &PipelineConfig::default()).unwrap();
    assert!(!r.privacy_scores);
    assert!(r.d_ste.is_none());
    assert!(r.samples.iter().all(|x| x.delta_pi.is_none()));
    assert!(r.regime_evidence.offset_test.is_none());
    assert!(r.global.n_overfit_curve.iter().any(|&n| n >= 10));
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&r, dir.path()).unwrap();
    let json = std::fs::read_to_string(files.summary_json).unwrap();
    assert!(json.contains(NO_TEST_BANNER));
}

#[test]
fn membership_ranks_copied_row_first() {
    let (train, test, synth) = population_split(&small_spec(), 400, 16).unwrap();
    let s = with_copies(&synth, &train, 1);
    let reference = train.vstack(&test).unwrap();
    let labels: Vec<bool> = (0..reference.n_rows()).map(|i| i < train.n_rows()).collect();
    let res = membership_attack(&reference, Some(&labels), &s, &MembershipConfig::default()).unwrap();
    assert_eq!(res.ranks[0], 1, "copied reference row should rank first");
    let best = (0..res.scores.len())
        .min_by(|&a, &b| res.scores[a].total_cmp(&res.scores[b]))
        .unwrap();
    assert_eq!(best, 0);
}

#[test]
fn membership_on_null_split_is_at_chance() {
    let (train, test, synth) = population_split(&small_spec(), 500, 17).unwrap();
    let reference = train.vstack(&test).unwrap();
    let labels: Vec<bool> = (0..reference.n_rows()).map(|i| i < train.n_rows()).collect();
    let res = membership_attack(&reference, Some(&labels), &synth, &MembershipConfig::default()).unwrap();
    let auc = res.pr.unwrap().auc.unwrap();
    assert!((auc - 0.5).abs() < 0.1, "AUC-PR {auc} vs prevalence 0.5");
}

#[test]
fn stored_sets_match_report_sizes() {
    let (train, test, synth) = population_split(&small_spec(), 200, 18).unwrap();
    let r = privet(&train, Some(&test), &synth, &PipelineConfig::default()).unwrap();
    let sets: [&NNDistanceSet; 2] = [&r.d_trtr, &r.d_str];
    assert_eq!(sets[0].len(), train.n_rows());
    assert_eq!(sets[1].len(), synth.n_rows());
    assert_eq!(r.samples.len(), synth.n_rows());
    assert_eq!(r.sizes.n_features, 1024);
}
