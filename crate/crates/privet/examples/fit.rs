//! Fit both tail families to simulated minima and to real 1-NN distances.
//!
//! cargo run --release --example fit

use privet::evt::{fit_both, fit_family, Family, TailWindow};
use privet::experiments::{generate_population, PopulationSpec};
use privet::knn::{pairwise_min_profile, Metric, NNDistanceSet};
use privet::rng;

fn main() -> privet::Result<()> {
    let window = TailWindow::default();

    // Weibull minima with A = 1, alpha = 5: H(u) = u^5.
    let mut g = rng::stream(3, "fit-example");
    let n = 10_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| (-rng::open_unit(&mut g).ln()).powf(1.0 / 5.0))
        .collect();
    let sim = NNDistanceSet::from_values(&draws, n);
    let (best, alt) = fit_both(&sim, &window)?;
    println!(
        "simulated: {:?} shape {:.3} ln A {:.3} (m = {} window points)",
        best.family, best.shape, best.ln_a, best.m
    );
    if let Some(a) = alt {
        println!("  rejected {:?}, nll {:.2} vs {:.2}", a.family, a.nll_censored, best.nll_censored);
    }

    // Within-set distances of a generated SNP-like cohort.
    let pop = generate_population(&PopulationSpec::default(), 1500, 3)?;
    let d = pairwise_min_profile(&pop, Metric::Hamming)?;
    let w = fit_family(&d.distances, &window, Family::Weibull, d.effective_reference())?;
    let gb = fit_family(&d.distances, &window, Family::Gumbel, d.effective_reference())?;
    println!("cohort: window [{}, {}] with {} points", w.lower, w.upper, w.m);
    println!("  weibull alpha {:.2}  nll {:.2}", w.shape, w.nll_censored);
    println!("  gumbel  B     {:.4} nll {:.2}", gb.shape, gb.nll_censored);
    for q in [0.01, 0.05, 0.1, 0.2] {
        println!("  F^-1({q}) = {:.1}", w.quantile(q)?);
    }
    Ok(())
}
