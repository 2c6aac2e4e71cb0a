//! Generate a population and plant leaks: partial copies of train rows that
//! replace a fraction of the synthetic rows.
//!
//! cargo run --release --example leakgen

use privet::data::{save_matrix, split, Format, SplitSpec};
use privet::experiments::{generate_population, inject_leaks, LeakSpec, PopulationSpec};
use privet::knn::{row_distance, Metric};

fn main() -> privet::Result<()> {
    let spec = PopulationSpec {
        n_features: 2048,
        ..Default::default()
    };
    let pop = generate_population(&spec, 1200, 9)?;
    let (train, _test, synth) = split(
        &pop,
        &SplitSpec {
            seed: 9,
            n_train: 400,
            n_test: 400,
            n_synth: 400,
        },
    )?;

    for f_copy in [0.02, 0.1, 0.3] {
        let leak = LeakSpec {
            f_fake: 0.2,
            f_copy,
            seed: 9,
        };
        let inj = inject_leaks(&train, &synth, &leak, Metric::Hamming)?;
        // Distance of each leaked row to the train row it copies from.
        let (mut before, mut after) = (0.0, 0.0);
        for (i, src) in inj.truth.source.iter().enumerate() {
            if let Some(t) = *src {
                before += row_distance(&synth, i, &train, t, Metric::Hamming);
                after += row_distance(&inj.synth, i, &train, t, Metric::Hamming);
            }
        }
        let n = inj.truth.n_leaks() as f64;
        println!(
            "f_copy {f_copy:>4}: {} leaks, mean distance to source {:.0} -> {:.0}",
            inj.truth.n_leaks(),
            before / n,
            after / n
        );
    }

    let out = std::env::temp_dir().join("privet-example-leakgen");
    std::fs::create_dir_all(&out).expect("temp dir");
    save_matrix(&train, out.join("train.csv"), Format::Csv)?;
    save_matrix(&synth, out.join("synth.bin"), Format::DenseBinary)?;
    println!("wrote {}", out.display());
    Ok(())
}
