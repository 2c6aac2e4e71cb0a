//! Goodness of fit of the tail models: probability integral transforms,
//! P-P ribbons across the window quantile, a parametric-bootstrap KS band and
//! a split-half consistency check.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{invalid, PrivetError, Result};
use crate::evt::{fit_both, fit_censored, lattice_floor, TailFit, TailWindow, MIN_WINDOW_POINTS};
use crate::knn::{pairwise_min_profile, Metric, NNDistanceSet};
use crate::pipeline::fmt_f64;
use crate::plot::{Band, LineChart, Scale, Series};
use crate::rng;

fn pit_stream() -> rng::Rng {
    rng::stream(0, "pit")
}

/// Points of the common x grid used for P-P curves.
pub const PP_GRID: usize = 101;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitResult {
    pub q_frac: f64,
    /// Sorted transformed values.
    pub pit_values: Vec<f64>,
    /// eCDF of the transformed values on the common grid.
    pub ecdf: Vec<(f64, f64)>,
    pub ks_stat: f64,
    pub m: usize,
    pub lower: f64,
    pub upper: f64,
}

/// `sup |G_m(v) - v|` of a sorted sample of `[0, 1]` values, over all jumps.
pub fn ks_uniform(sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / m - v).max(v - i as f64 / m))
        .fold(0.0, f64::max)
}

/// eCDF of a sorted sample evaluated on `n` evenly spaced points of `[0, 1]`.
pub fn ecdf_on_grid(sorted: &[f64], n: usize) -> Vec<(f64, f64)> {
    let m = sorted.len() as f64;
    (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1) as f64;
            (x, sorted.partition_point(|&v| v <= x) as f64 / m)
        })
        .collect()
}

fn pit_between(
    fit: &TailFit,
    values: &[f64],
    lower: f64,
    upper: f64,
    q_frac: f64,
    g: &mut rng::Rng,
) -> Result<PitResult> {
    let v = if fit.discrete {
        let lo = lattice_floor(lower);
        values
            .iter()
            .map(|&d| {
                let a = fit.truncated_cdf(lo, upper, d - 1.0);
                let b = fit.truncated_cdf(lo, upper, d);
                a + rng::unit(g) * (b - a)
            })
            .collect()
    } else {
        values.iter().map(|&d| fit.truncated_cdf(lower, upper, d)).collect()
    };
    pit_result(v, lower, upper, q_frac)
}

fn pit_result(mut v: Vec<f64>, lower: f64, upper: f64, q_frac: f64) -> Result<PitResult> {
    if v.is_empty() {
        return invalid("empty window: nothing to transform");
    }
    v.sort_by(f64::total_cmp);
    Ok(PitResult {
        q_frac,
        ks_stat: ks_uniform(&v),
        ecdf: ecdf_on_grid(&v, PP_GRID),
        m: v.len(),
        pit_values: v,
        lower,
        upper,
    })
}

/// Transform the in-window distances by the fitted law truncated to the
/// window. A lattice fit spreads each integer `d` uniformly over its cell
/// `(d - 1, d]` in probability (randomized PIT, fixed substream), which is
/// exactly uniform under the model.
pub fn pit(fit: &TailFit, distances: &NNDistanceSet, window: &TailWindow) -> Result<PitResult> {
    let sorted = &distances.distances;
    let w = window.resolve(sorted)?;
    pit_between(fit, &sorted[w.start..w.end], w.lower, w.upper, window.q_frac, &mut pit_stream())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpRibbon {
    pub q_values: Vec<f64>,
    pub curves: Vec<PitResult>,
    /// Pointwise envelope on the common grid.
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
    /// Fraction of grid points where the envelope contains the diagonal.
    pub diagonal_coverage: f64,
    pub max_width: f64,
}

fn envelope(curves: &[Vec<(f64, f64)>]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let n = curves[0].len();
    let lo = (0..n)
        .map(|i| (curves[0][i].0, curves.iter().map(|c| c[i].1).fold(f64::INFINITY, f64::min)))
        .collect();
    let hi = (0..n)
        .map(|i| (curves[0][i].0, curves.iter().map(|c| c[i].1).fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    (lo, hi)
}

fn coverage(lo: &[(f64, f64)], hi: &[(f64, f64)]) -> f64 {
    let hit = lo
        .iter()
        .zip(hi)
        .filter(|(l, h)| l.1 <= l.0 + 1e-12 && l.0 <= h.1 + 1e-12)
        .count();
    hit as f64 / lo.len() as f64
}

/// Refit at `n_q` window quantiles evenly spaced over `q_range` and
/// transform each window by its own fit.
pub fn pp_ribbon(distances: &NNDistanceSet, a_frac: f64, q_range: (f64, f64), n_q: usize) -> Result<PpRibbon> {
    if n_q == 0 {
        return invalid("ribbon needs at least one q value");
    }
    let (q0, q1) = q_range;
    if !(q0 > a_frac && q0 <= q1 && q1 <= 1.0) {
        return invalid(format!("q range ({q0}, {q1}) must lie above a_frac = {a_frac} and in (0, 1]"));
    }
    let q_values: Vec<f64> = (0..n_q)
        .map(|i| if n_q == 1 { q0 } else { q0 + (q1 - q0) * i as f64 / (n_q - 1) as f64 })
        .collect();
    let curves: Vec<PitResult> = q_values
        .par_iter()
        .map(|&q| {
            let w = TailWindow::new(a_frac, q)?;
            let (fit, _) = fit_both(distances, &w)?;
            pit(&fit, distances, &w)
        })
        .collect::<Result<_>>()?;
    let grids: Vec<Vec<(f64, f64)>> = curves.iter().map(|c| c.ecdf.clone()).collect();
    let (lower, upper) = envelope(&grids);
    let max_width = lower.iter().zip(&upper).map(|(l, h)| h.1 - l.1).fold(0.0, f64::max);
    Ok(PpRibbon {
        q_values,
        diagonal_coverage: coverage(&lower, &upper),
        curves,
        lower,
        upper,
        max_width,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    pub n_bootstrap: usize,
    /// 95th percentile of the replicate KS statistics.
    pub critical_value: f64,
    /// `(1 + #{D_j >= D_obs}) / (n + 1)` over successful replicates.
    pub mc_p_value: f64,
    pub observed: f64,
    pub stats: Vec<f64>,
    pub failures: usize,
    pub m: usize,
}

/// Nearest-rank percentile of an ascending sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Parametric bootstrap of the PIT KS statistic. Each replicate draws the
/// in-window values from the fit truncated to the window (same counts below
/// and above as the data), refits the same family and recomputes the KS
/// statistic under its own refit. Integer-valued data get integer draws.
pub fn bootstrap_ks_band(
    fit: &TailFit,
    distances: &NNDistanceSet,
    window: &TailWindow,
    n_bootstrap: usize,
    seed: u64,
) -> Result<BootstrapBand> {
    if n_bootstrap == 0 {
        return invalid("n_bootstrap must be at least 1");
    }
    let sorted = &distances.distances;
    let w = window.resolve(sorted)?;
    if w.m < MIN_WINDOW_POINTS {
        return Err(PrivetError::WindowTooSmall {
            m: w.m,
            min: MIN_WINDOW_POINTS,
        });
    }
    let observed =
        pit_between(fit, &sorted[w.start..w.end], w.lower, w.upper, window.q_frac, &mut pit_stream())?.ks_stat;
    // A lattice fit is replayed on its own scale: U from the law on
    // (lower - 1, upper], reported as ceil(U).
    let lo = if fit.discrete { lattice_floor(w.lower) } else { w.lower };
    let reps: Vec<Option<f64>> = (0..n_bootstrap)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::indexed_stream(seed, "bootstrap", j as u64);
            let mut x: Vec<f64> = (0..w.m)
                .map(|_| {
                    let u = fit.truncated_quantile(lo, w.upper, rng::open_unit(&mut g));
                    if fit.discrete {
                        u.ceil().clamp(if w.lower == 0.0 { 1.0 } else { w.lower }, w.upper)
                    } else {
                        u
                    }
                })
                .filter(|&u| w.lower != 0.0 || u > 0.0)
                .collect();
            x.sort_by(f64::total_cmp);
            let refit = fit_censored(
                fit.family,
                window,
                &x,
                w.lower,
                w.upper,
                w.below,
                w.above,
                fit.n_reference,
            )
            .ok()?;
            pit_between(&refit, &x, w.lower, w.upper, window.q_frac, &mut g).ok().map(|p| p.ks_stat)
        })
        .collect();
    let failures = reps.iter().filter(|r| r.is_none()).count();
    if failures * 20 >= n_bootstrap {
        return Err(PrivetError::NoConvergence(format!(
            "{failures} of {n_bootstrap} bootstrap refits failed"
        )));
    }
    let stats: Vec<f64> = reps.into_iter().flatten().collect();
    let mut s = stats.clone();
    s.sort_by(f64::total_cmp);
    let exceed = stats.iter().filter(|&&d| d >= observed).count();
    Ok(BootstrapBand {
        n_bootstrap,
        critical_value: percentile(&s, 0.95),
        mc_p_value: (1 + exceed) as f64 / (stats.len() + 1) as f64,
        observed,
        stats,
        failures,
        m: w.m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConsistency {
    pub curves: Vec<PitResult>,
    pub median: Vec<(f64, f64)>,
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
    pub max_width: f64,
    /// Largest distance of the median curve from the diagonal.
    pub median_max_deviation: f64,
}

/// Repeatedly split the train set into halves, fit on the first half's
/// within-half distances and transform the second half's within-half
/// distances by that frozen fit, restricted to its window bounds.
pub fn split_consistency(
    train: &DataMatrix,
    metric: Metric,
    window: &TailWindow,
    n_splits: usize,
    seed: u64,
) -> Result<SplitConsistency> {
    if n_splits == 0 {
        return invalid("n_splits must be at least 1");
    }
    let half = train.n_rows() / 2;
    let min_rows = ((MIN_WINDOW_POINTS as f64 / (window.q_frac - window.a_frac)).ceil() as usize).max(2);
    if half < min_rows {
        return invalid(format!(
            "{} train rows: each half needs at least {min_rows}",
            train.n_rows()
        ));
    }
    let curves: Vec<PitResult> = (0..n_splits)
        .into_par_iter()
        .map(|s| {
            let mut g = rng::indexed_stream(seed, "split-consistency", s as u64);
            let mut idx: Vec<usize> = (0..train.n_rows()).collect();
            rng::shuffle(&mut g, &mut idx);
            let a = train.select_rows(&idx[..half]);
            let b = train.select_rows(&idx[half..2 * half]);
            let (da, db) = rayon::join(|| pairwise_min_profile(&a, metric), || pairwise_min_profile(&b, metric));
            let (fit, _) = fit_both(&da?, window)?;
            let db = db?;
            let inside: Vec<f64> = db
                .distances
                .iter()
                .cloned()
                .filter(|&d| d >= fit.lower && d <= fit.upper && d > 0.0)
                .collect();
            pit_between(&fit, &inside, fit.lower, fit.upper, window.q_frac, &mut g)
        })
        .collect::<Result<_>>()?;
    let grids: Vec<Vec<(f64, f64)>> = curves.iter().map(|c| c.ecdf.clone()).collect();
    let (lower, upper) = envelope(&grids);
    let median: Vec<(f64, f64)> = (0..PP_GRID)
        .map(|i| {
            let mut ys: Vec<f64> = grids.iter().map(|c| c[i].1).collect();
            ys.sort_by(f64::total_cmp);
            let n = ys.len();
            let med = if n % 2 == 1 { ys[n / 2] } else { 0.5 * (ys[n / 2 - 1] + ys[n / 2]) };
            (grids[0][i].0, med)
        })
        .collect();
    let max_width = lower.iter().zip(&upper).map(|(l, h)| h.1 - l.1).fold(0.0, f64::max);
    let median_max_deviation = median.iter().map(|(x, y)| (y - x).abs()).fold(0.0, f64::max);
    Ok(SplitConsistency {
        curves,
        median,
        lower,
        upper,
        max_width,
        median_max_deviation,
    })
}

/// Curves of the P-P figure as `(curve id, points)`.
pub fn pp_curves(
    reference: &PitResult,
    ribbon: Option<&PpRibbon>,
    band: Option<&BootstrapBand>,
    split: Option<&SplitConsistency>,
) -> Vec<(String, Vec<(f64, f64)>)> {
    let grid: Vec<f64> = (0..PP_GRID).map(|i| i as f64 / (PP_GRID - 1) as f64).collect();
    let mut c = vec![("diagonal".to_string(), grid.iter().map(|&x| (x, x)).collect())];
    c.push((format!("pit_q{}", reference.q_frac), reference.ecdf.clone()));
    if let Some(r) = ribbon {
        c.push(("ribbon_lower".into(), r.lower.clone()));
        c.push(("ribbon_upper".into(), r.upper.clone()));
    }
    if let Some(b) = band {
        let d = b.critical_value;
        c.push(("band_lower".into(), grid.iter().map(|&x| (x, (x - d).max(0.0))).collect()));
        c.push(("band_upper".into(), grid.iter().map(|&x| (x, (x + d).min(1.0))).collect()));
    }
    if let Some(s) = split {
        c.push(("split_median".into(), s.median.clone()));
        c.push(("split_lower".into(), s.lower.clone()));
        c.push(("split_upper".into(), s.upper.clone()));
    }
    c
}

pub fn pp_csv(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::from("curve,x,y\n");
    for (id, pts) in curves {
        for (x, y) in pts {
            let _ = writeln!(s, "{id},{},{}", fmt_f64(*x), fmt_f64(*y));
        }
    }
    s
}

/// P-P chart: diagonal, reference PIT curve, KS band edges as dashed lines,
/// and the ribbons as filled bands.
pub fn pp_svg(curves: &[(String, Vec<(f64, f64)>)], title: &str) -> String {
    let mut chart = LineChart::new(title, "v", "eCDF of PIT values", Scale::Linear, Scale::Linear);
    let get = |id: &str| curves.iter().find(|c| c.0 == id).map(|c| c.1.clone());
    if let (Some(l), Some(u)) = (get("ribbon_lower"), get("ribbon_upper")) {
        chart.bands.push(Band {
            label: "q ribbon".into(),
            lower: l,
            upper: u,
        });
    }
    if let (Some(l), Some(u)) = (get("split_lower"), get("split_upper")) {
        chart.bands.push(Band {
            label: "split ribbon".into(),
            lower: l,
            upper: u,
        });
    }
    for (id, pts) in curves {
        if id.starts_with("ribbon_") || id == "split_lower" || id == "split_upper" {
            continue;
        }
        let s = Series::new(id, pts.clone());
        chart.series.push(if id.starts_with("band_") { s.dashed() } else { s });
    }
    chart.to_svg()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_perfect_grid() {
        let v: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert!((ks_uniform(&v) - 0.05).abs() < 1e-15);
        assert_eq!(ks_uniform(&[0.5]), 0.5);
    }

    #[test]
    fn percentile_nearest_rank() {
        let s: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        assert_eq!(percentile(&s, 0.95), 190.0);
    }
}
