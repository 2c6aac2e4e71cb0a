//! Score a synthetic set with planted leaks and write the report files.
//!
//! cargo run --release --example score

use privet::experiments::{inject_leaks, population_split, LeakSpec, PopulationSpec};
use privet::knn::Metric;
use privet::pipeline::{emit_report, privet, PipelineConfig};

fn main() -> privet::Result<()> {
    let (train, test, synth) = population_split(&PopulationSpec::default(), 1500, 1)?;
    let spec = LeakSpec {
        f_fake: 0.1,
        f_copy: 0.25,
        seed: 1,
    };
    let inj = inject_leaks(&train, &synth, &spec, Metric::Hamming)?;

    let report = privet(&train, Some(&test), &inj.synth, &PipelineConfig::default())?;
    let flagged: Vec<usize> = report
        .samples
        .iter()
        .filter(|s| s.leak)
        .map(|s| s.synth_row)
        .collect();
    let hits = flagged.iter().filter(|&&i| inj.truth.leak[i]).count();

    println!("fit: {:?} shape {:.2}", report.fit.family, report.fit.shape);
    println!("regime: {}", report.regime.name());
    println!(
        "npl {} (before decimation {}), planted {}, correctly flagged {}",
        report.global.npl,
        report.npl_before_decimation,
        inj.truth.n_leaks(),
        hits
    );

    let out = std::env::temp_dir().join("privet-example-score");
    let files = emit_report(&report, &out)?;
    println!("wrote {}", files.summary_json.display());
    Ok(())
}
