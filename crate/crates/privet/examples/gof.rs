//! Goodness-of-fit of the tail law: PIT, bootstrap KS band, P-P ribbon over
//! the window size and consistency across random half splits.
//!
//! cargo run --release --example gof

use privet::evt::{fit_both, TailWindow};
use privet::experiments::{generate_population, PopulationSpec};
use privet::gof::{bootstrap_ks_band, pit, pp_csv, pp_curves, pp_ribbon, pp_svg, split_consistency};
use privet::knn::{pairwise_min_profile, Metric};

fn main() -> privet::Result<()> {
    let window = TailWindow::default();
    let data = generate_population(&PopulationSpec::default(), 1500, 5)?;
    let d = pairwise_min_profile(&data, Metric::Hamming)?;
    let (fit, _) = fit_both(&d, &window)?;

    let reference = pit(&fit, &d, &window)?;
    let band = bootstrap_ks_band(&fit, &d, &window, 200, 5)?;
    println!(
        "KS {:.4} on m = {}; 95% critical value {:.4}; Monte Carlo p = {:.3}",
        reference.ks_stat, reference.m, band.critical_value, band.mc_p_value
    );

    let ribbon = pp_ribbon(&d, window.a_frac, (0.1, 0.3), 9)?;
    println!(
        "ribbon over q in [0.1, 0.3]: max width {:.4}, diagonal covered {:.0}%",
        ribbon.max_width,
        100.0 * ribbon.diagonal_coverage
    );

    let split = split_consistency(&data, Metric::Hamming, &window, 10, 5)?;
    println!(
        "half splits: max width {:.4}, median off the diagonal by {:.4}",
        split.max_width, split.median_max_deviation
    );

    let curves = pp_curves(&reference, Some(&ribbon), Some(&band), Some(&split));
    let out = std::env::temp_dir().join("privet-example-gof");
    std::fs::create_dir_all(&out).expect("temp dir");
    std::fs::write(out.join("pp.csv"), pp_csv(&curves)).expect("write");
    std::fs::write(out.join("pp.svg"), pp_svg(&curves, "P-P plot")).expect("write");
    println!("wrote {}", out.display());
    Ok(())
}
