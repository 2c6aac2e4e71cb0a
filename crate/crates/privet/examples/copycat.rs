//! Copycat mixtures on continuous embeddings: the first beta N synthetic rows
//! are exact train rows. Euclidean distances throughout.
//!
//! cargo run --release --example copycat

use rand_distr::{Distribution, StandardNormal};

use privet::data::DataMatrix;
use privet::experiments::{copycat_mix, Confusion, COPYCAT_BETAS};
use privet::pipeline::{privet, PipelineConfig};
use privet::rng;

fn gaussian(n: usize, d: usize, name: &str) -> privet::Result<DataMatrix> {
    let mut g = rng::stream(8, name);
    let v: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut g)).collect();
    DataMatrix::from_f64(n, d, v)
}

fn main() -> privet::Result<()> {
    let (n, d) = (1000, 32);
    let train = gaussian(n, d, "train")?;
    let test = gaussian(n, d, "test")?;
    let synth = gaussian(n, d, "synth")?;
    println!("beta   npl  precision recall");
    for beta in COPYCAT_BETAS {
        if beta == 1.0 {
            continue;
        }
        let (mixed, truth) = copycat_mix(&train, &synth, beta)?;
        let report = privet(&train, Some(&test), &mixed, &PipelineConfig::default())?;
        let mut flags = vec![false; n];
        for s in &report.samples {
            flags[s.synth_row] = s.leak;
        }
        let c = Confusion::from_flags(&flags, &truth.leak);
        let fmt = |v: Option<f64>| v.map_or("  -  ".into(), |x| format!("{x:.3}"));
        println!(
            "{beta:<5} {:>4}  {:>9} {:>6}",
            report.global.npl,
            fmt(c.precision()),
            fmt(c.recall())
        );
    }
    Ok(())
}
