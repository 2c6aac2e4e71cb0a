use privet::data::SplitSpec;
use privet::experiments::{generate_population, run_grid, GridResult, GridSpec, PopulationSpec, Scorer};
use privet::knn::Metric;
use privet::orderstats::FlagScore;
use privet::pipeline::{PipelineConfig, DEFAULT_TAU_DELTA_P};

/// Rank-corrected flagging at the default threshold, no decimation.
fn delta_p_grid(f_fake: Vec<f64>, f_copy: Vec<f64>, seed: u64, scorers: Vec<Scorer>) -> GridResult {
    let pop = generate_population(&PopulationSpec::default(), 4500, seed).unwrap();
    let pipeline = PipelineConfig {
        flag: FlagScore::DeltaP,
        tau_delta_p: DEFAULT_TAU_DELTA_P,
        decimation: false,
        ..PipelineConfig::default()
    };
    run_grid(
        &pop,
        &GridSpec {
            f_fake,
            f_copy,
            split: SplitSpec { seed, n_train: 1500, n_test: 1500, n_synth: 1500 },
            seed,
            metric: Metric::Hamming,
            pipeline,
            scorers,
        },
    )
    .unwrap()
}

#[test]
fn delta_p_recall_does_not_track_leak_count() {
    for seed in [1, 2] {
        let g = delta_p_grid(vec![0.1, 0.2, 0.3], vec![0.3], seed, vec![Scorer::Privet]);
        let recall: Vec<f64> = (0..3)
            .map(|i| g.cell(i, 0).outcome("privet").unwrap().confusion.recall().unwrap())
            .collect();
        let spread = recall.iter().cloned().fold(f64::MIN, f64::max) - recall.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 0.05, "seed {seed}: recall {recall:?}");
    }
}

// The default threshold is the implicit-decimation operating point: flags
// land near the authenticity baseline's, trading precision for recall in
// the low-copy corner.
#[test]
fn default_delta_p_threshold_sits_near_authenticity() {
    let g = delta_p_grid(vec![0.1, 0.3], vec![0.02, 0.3], 1, vec![Scorer::Privet, Scorer::Authenticity]);
    for c in &g.cells {
        let ours = &c.outcome("privet").unwrap().confusion;
        let auth = &c.outcome("authenticity").unwrap().confusion;
        let (r, ra) = (ours.recall().unwrap(), auth.recall().unwrap());
        let (p, pa) = (ours.precision().unwrap(), auth.precision().unwrap());
        assert!((r - ra).abs() <= 0.2, "({}, {}): recall {r} vs {ra}", c.f_fake, c.f_copy);
        assert!((p - pa).abs() <= 0.2, "({}, {}): precision {p} vs {pa}", c.f_fake, c.f_copy);
    }
}
