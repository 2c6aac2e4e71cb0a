//! Membership attack: which reference rows (train and held-out merged) did
//! the generator see? Scores every reference row against the synthetic set.
//!
//! cargo run --release --example attack

use std::collections::HashSet;

use privet::experiments::{
    ideal_pr_curve, inject_leaks, pr_knee, population_split, LeakSpec, PopulationSpec,
};
use privet::knn::Metric;
use privet::pipeline::{membership_attack, MembershipConfig};

fn main() -> privet::Result<()> {
    let (train, heldout, synth) = population_split(&PopulationSpec::default(), 1500, 2)?;
    let spec = LeakSpec {
        f_fake: 0.3,
        f_copy: 0.3,
        seed: 2,
    };
    let inj = inject_leaks(&train, &synth, &spec, Metric::Hamming)?;
    let memorized: HashSet<usize> = inj.truth.source.iter().flatten().copied().collect();

    let reference = train.vstack(&heldout)?;
    let labels: Vec<bool> = (0..reference.n_rows()).map(|i| i < train.n_rows()).collect();
    let res = membership_attack(&reference, Some(&labels), &inj.synth, &MembershipConfig::default())?;
    let pr = res.pr.as_ref().expect("labels given");

    println!(
        "{} distinct train rows copied; AUC-PR {:.3} (prevalence {:.2})",
        memorized.len(),
        pr.auc.unwrap_or(f64::NAN),
        pr.prevalence
    );
    if let Some(k) = pr_knee(pr) {
        println!("knee: recall {:.3}, precision {:.3}", k.recall, k.precision);
    }
    let ideal = ideal_pr_curve(pr.n_total, pr.n_positive, memorized.len(), 5);
    println!("ideal classifier: {ideal:.3?}");
    Ok(())
}
