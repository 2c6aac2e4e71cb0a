//! A small (f_fake, f_copy) sweep with privacy maps per scorer, including an
//! external scorer read from per-cell CSV files.
//!
//! cargo run --release --example grid

use std::fmt::Write as _;

use privet::baselines::authenticity_flags;
use privet::data::{split, SplitSpec};
use privet::experiments::{
    cell_seed, emit_grid, generate_population, inject_leaks, run_grid, ExternalScorer, GridSpec,
    LeakSpec, PopulationSpec, Scorer,
};
use privet::knn::{nearest, Metric};
use privet::pipeline::PipelineConfig;

fn main() -> privet::Result<()> {
    let out = std::env::temp_dir().join("privet-example-grid");
    let n = 600;
    let source = generate_population(
        &PopulationSpec {
            n_features: 2048,
            ..Default::default()
        },
        3 * n,
        4,
    )?;
    let split_spec = SplitSpec {
        seed: 4,
        n_train: n,
        n_test: n,
        n_synth: n,
    };
    let f_fake = vec![0.05, 0.2, 0.4];
    let f_copy = vec![0.02, 0.1, 0.3];

    // An external method scores each pseudo-synthetic set; here it is the
    // raw distance to the train set, written as `cell_i_j.csv`.
    let ext_dir = out.join("external");
    std::fs::create_dir_all(&ext_dir).expect("temp dir");
    let (train, _, synth) = split(&source, &split_spec)?;
    for (i, &ff) in f_fake.iter().enumerate() {
        for (j, &fc) in f_copy.iter().enumerate() {
            let leak = LeakSpec {
                f_fake: ff,
                f_copy: fc,
                seed: cell_seed(4, i, j),
            };
            let inj = inject_leaks(&train, &synth, &leak, Metric::Hamming)?;
            let nn = nearest(&inj.synth, &train, Metric::Hamming, false)?;
            let mut s = String::from("synth_row,score\n");
            for (r, nb) in nn.iter().enumerate() {
                let _ = writeln!(s, "{r},{}", nb.dist);
            }
            std::fs::write(ext_dir.join(format!("cell_{i}_{j}.csv")), s).expect("write");
        }
    }
    let tt = nearest(&train, &train, Metric::Hamming, true)?;
    let mut d: Vec<f64> = tt.iter().map(|n| n.dist).collect();
    d.sort_by(f64::total_cmp);
    let tau = d[d.len() / 100];

    let spec = GridSpec {
        f_fake,
        f_copy,
        split: split_spec,
        seed: 4,
        metric: Metric::Hamming,
        pipeline: PipelineConfig::default(),
        scorers: vec![
            Scorer::Privet,
            Scorer::PrivetPre,
            Scorer::Authenticity,
            Scorer::External(ExternalScorer {
                name: "nn_distance".into(),
                dir: ext_dir,
                tau,
            }),
        ],
    };
    let grid = run_grid(&source, &spec)?;
    println!("npl / recall per cell (privet | authenticity | nn_distance):");
    for c in &grid.cells {
        let show = |name: &str| {
            c.outcome(name).map_or("-".to_string(), |o| {
                format!("{:>3}/{:.2}", o.npl, o.confusion.recall().unwrap_or(f64::NAN))
            })
        };
        println!(
            "  f_fake {:.2} f_copy {:.2} leaks {:>3}: {} | {} | {}",
            c.f_fake,
            c.f_copy,
            c.n_leaks,
            show("privet"),
            show("authenticity"),
            show("nn_distance")
        );
    }
    let files = emit_grid(&grid, &out)?;
    println!("wrote {} files under {}", files.len(), out.display());

    // Authenticity on the clean split, for scale.
    let auth = authenticity_flags(&train, &synth, Metric::Hamming)?;
    println!("authenticity flags {} of {} clean synthetic rows", auth.in_auth, n);
    Ok(())
}
