//! Authenticity and adversarial-accuracy privacy loss on a clean and a
//! leaky synthetic set.
//!
//! cargo run --release --example baselines

use privet::baselines::{aats_privacy_loss, authenticity_flags};
use privet::experiments::{inject_leaks, population_split, LeakSpec, PopulationSpec};
use privet::knn::Metric;

fn main() -> privet::Result<()> {
    let spec = PopulationSpec {
        n_features: 2048,
        ..Default::default()
    };
    let (train, test, synth) = population_split(&spec, 800, 6)?;
    let leaky = inject_leaks(
        &train,
        &synth,
        &LeakSpec {
            f_fake: 0.3,
            f_copy: 0.3,
            seed: 6,
        },
        Metric::Hamming,
    )?
    .synth;

    for (name, s) in [("clean", &synth), ("leaky", &leaky)] {
        let auth = authenticity_flags(&train, s, Metric::Hamming)?;
        let pl = aats_privacy_loss(&train, &test, s, Metric::Hamming, None)?;
        println!(
            "{name}: inauthentic {:>3}/{}  AA_train {:.3}  AA_test {:.3}  loss {:+.3}",
            auth.in_auth,
            s.n_rows(),
            pl.aa_train.aa,
            pl.aa_test.aa,
            pl.loss
        );
    }
    Ok(())
}
