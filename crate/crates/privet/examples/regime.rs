//! The three regime archetypes built directly from distance sets.
//!
//! cargo run --release --example regime

use privet::knn::NNDistanceSet;
use privet::pipeline::classify_regime;
use privet::rng;

fn weibull(seed: u64, n: usize, scale: f64) -> NNDistanceSet {
    let mut g = rng::stream(seed, "regime");
    let v: Vec<f64> = (0..n)
        .map(|_| scale * (-rng::open_unit(&mut g).ln()).powf(1.0 / 20.0))
        .collect();
    NNDistanceSet::from_values(&v, n)
}

fn main() -> privet::Result<()> {
    let trtr = weibull(1, 2000, 1.0);
    for (name, s_tr, s_te) in [
        ("under", 1.3, 1.3),
        ("well", 1.0, 1.0),
        ("over", 0.7, 1.0),
    ] {
        let str_ = weibull(2, 2000, s_tr);
        let ste = weibull(3, 2000, s_te);
        let (regime, ev) = classify_regime(&trtr, &str_, Some(&ste), 0.05)?;
        println!(
            "{name:>5}: {:<12} offsets {:+.3} / {:+.3}",
            regime.name(),
            ev.offset_train,
            ev.offset_test.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
