//! eCDFs of the three 1-NN distance sets with the fitted tail, on log-log
//! axes, for a well-fitted and an overfitted synthetic set.
//!
//! cargo run --release --example ecdf

use privet::experiments::{inject_leaks, population_split, LeakSpec, PopulationSpec};
use privet::knn::Metric;
use privet::pipeline::{curves_csv, ecdf_curves, ecdf_svg, privet, PipelineConfig};

fn main() -> privet::Result<()> {
    let (train, test, synth) = population_split(&PopulationSpec::default(), 1000, 12)?;
    let leaky = inject_leaks(
        &train,
        &synth,
        &LeakSpec {
            f_fake: 0.3,
            f_copy: 0.2,
            seed: 12,
        },
        Metric::Hamming,
    )?
    .synth;
    let out = std::env::temp_dir().join("privet-example-ecdf");
    std::fs::create_dir_all(&out).expect("temp dir");
    for (name, s) in [("null", &synth), ("leaky", &leaky)] {
        let report = privet(&train, Some(&test), s, &PipelineConfig::default())?;
        let curves = ecdf_curves(&report);
        std::fs::write(out.join(format!("{name}.csv")), curves_csv(&curves)).expect("write");
        std::fs::write(out.join(format!("{name}.svg")), ecdf_svg(&curves, name)).expect("write");
        let ev = &report.regime_evidence;
        println!(
            "{name}: regime {} (offset train {:+.4}, test {:+.4})",
            report.regime.name(),
            ev.offset_train,
            ev.offset_test.unwrap_or(f64::NAN)
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
