//! End-to-end scoring of a synthetic set against its train and test sets,
//! the fitting-regime classifier, the membership attack, and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_compatible, DataMatrix};
use crate::error::{invalid, PrivetError, Result};
use crate::evt::{fit_both, TailFit, TailWindow};
use crate::experiments::{pr_curve, PrCurve};
use crate::knn::{nn_distances_labeled, pairwise_min_profile, Metric, NNDistanceSet};
use crate::orderstats::{
    binomial_tails, decimate, excess_curves, expected_rank, pi_scores, score_samples, DecimationMode, FlagScore,
    Reference, SampleScore, SideFits,
};
use crate::plot::{LineChart, Scale, Series};

/// Version of the JSON summary layout.
pub const REPORT_VERSION: u32 = 1;

/// Default threshold for the rank-corrected score.
pub const DEFAULT_TAU_DELTA_P: f64 = -0.00115;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// `None` picks the metric matching the data type.
    pub metric: Option<Metric>,
    pub window: TailWindow,
    /// Threshold on `delta_pi`.
    pub tau: f64,
    /// Threshold on `delta_p`.
    pub tau_delta_p: f64,
    pub flag: FlagScore,
    pub decimation: bool,
    pub decimation_mode: DecimationMode,
    pub rescale: bool,
    /// log10-distance offset beyond which a regime is declared.
    pub regime_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            metric: None,
            window: TailWindow::default(),
            tau: -3.0,
            tau_delta_p: DEFAULT_TAU_DELTA_P,
            flag: FlagScore::DeltaPi,
            decimation: true,
            decimation_mode: DecimationMode::Sequential,
            rescale: true,
            regime_tolerance: 0.05,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !self.tau.is_finite() || !self.tau_delta_p.is_finite() {
            return invalid("thresholds must be finite");
        }
        if !(self.regime_tolerance >= 0.0 && self.regime_tolerance.is_finite()) {
            return invalid("regime tolerance must be a nonnegative number");
        }
        Ok(())
    }

    /// Threshold of the selected flag score.
    pub fn threshold(&self) -> f64 {
        match self.flag {
            FlagScore::DeltaPi => self.tau,
            FlagScore::DeltaP => self.tau_delta_p,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Underfitting,
    WellFitted,
    Overfitting,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Underfitting => "underfitting",
            Regime::WellFitted => "well-fitted",
            Regime::Overfitting => "overfitting",
        }
    }
}

/// Median log10 distance offsets of the synthetic curves against the
/// train-to-train curve, over quantile levels spread across the tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeEvidence {
    pub offset_train: f64,
    /// `None` without a test set.
    pub offset_test: Option<f64>,
    pub levels: Vec<f64>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalIndices {
    /// Mean of the finite `delta_pi` values of the undecimated pass.
    pub mean_delta_pi: Option<f64>,
    pub n_finite_delta_pi: usize,
    pub n_infinite_delta_pi: usize,
    pub n_undefined_delta_pi: usize,
    pub npl: usize,
    pub n_overfit_curve: Vec<i64>,
    pub n_pleaks_curve: Vec<i64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub nn_seconds: f64,
    pub fit_seconds: f64,
    pub score_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub n_train: usize,
    pub n_test: Option<usize>,
    pub n_synth: usize,
    pub n_features: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub version: u32,
    pub config: PipelineConfig,
    pub metric: Metric,
    pub sizes: Sizes,
    pub fit: TailFit,
    pub alternative_fit: Option<TailFit>,
    pub side_fits: SideFits,
    pub regime: Regime,
    pub regime_evidence: RegimeEvidence,
    pub warnings: Vec<String>,
    /// False in overfitting-only mode (no test set).
    pub privacy_scores: bool,
    pub samples: Vec<SampleScore>,
    pub global: GlobalIndices,
    pub npl_before_decimation: usize,
    pub decimation_rounds: usize,
    pub d_trtr: NNDistanceSet,
    pub d_str: NNDistanceSet,
    pub d_ste: Option<NNDistanceSet>,
    /// Wall-clock timings. Not part of the deterministic report files.
    #[serde(skip)]
    pub timing: Timing,
}

pub const NO_TEST_BANNER: &str =
    "no test set: overfitting-only mode, no privacy score (delta_pi needs a test reference)";

fn ecdf_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let k = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

fn log_offset(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a.log10() - b.log10()
    }
}

fn median_offset(curve: &[f64], base: &[f64], levels: &[f64]) -> f64 {
    let mut o: Vec<f64> = levels
        .iter()
        .map(|&l| log_offset(ecdf_quantile(curve, l), ecdf_quantile(base, l)))
        .collect();
    o.sort_by(f64::total_cmp);
    o[(o.len() - 1) / 2]
}

/// Quantile levels used by [`classify_regime`]: 20 points across the default
/// tail window.
pub fn regime_levels() -> Vec<f64> {
    let w = TailWindow::default();
    (0..20)
        .map(|i| w.a_frac + (w.q_frac - w.a_frac) * i as f64 / 19.0)
        .collect()
}

/// Place the synthetic eCDFs relative to the train-to-train eCDF.
pub fn classify_regime(
    d_trtr: &NNDistanceSet,
    d_str: &NNDistanceSet,
    d_ste: Option<&NNDistanceSet>,
    tolerance: f64,
) -> Result<(Regime, RegimeEvidence)> {
    if d_trtr.is_empty() || d_str.is_empty() || d_ste.is_some_and(|d| d.is_empty()) {
        return invalid("regime classification needs nonempty distance sets");
    }
    let levels = regime_levels();
    let off_tr = median_offset(&d_str.distances, &d_trtr.distances, &levels);
    let off_te = d_ste.map(|d| median_offset(&d.distances, &d_trtr.distances, &levels));
    let regime = if off_tr < -tolerance {
        Regime::Overfitting
    } else if off_tr > tolerance && off_te.is_none_or(|o| o > tolerance) {
        Regime::Underfitting
    } else {
        Regime::WellFitted
    };
    Ok((
        regime,
        RegimeEvidence {
            offset_train: off_tr,
            offset_test: off_te,
            levels,
            tolerance,
        },
    ))
}

fn ls_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope-break check on the Weibull plot `ln(-ln(1 - F_n))` against `ln u`
/// of the fit window: a ratio of half-window slopes above 2 suggests the
/// window straddles two modes of the eCDF.
pub fn window_slope_break(sorted: &[f64], window: &TailWindow) -> Option<String> {
    let w = window.resolve(sorted).ok()?;
    let n = sorted.len() as f64;
    let pts: Vec<(f64, f64)> = (w.start..w.end)
        .map(|k| {
            let f = (k + 1) as f64 / (n + 1.0);
            (sorted[k].ln(), (-(-f).ln_1p()).ln())
        })
        .collect();
    if pts.len() < 20 {
        return None;
    }
    let (lo, hi) = pts.split_at(pts.len() / 2);
    let (a, b) = (ls_slope(lo)?, ls_slope(hi)?);
    if a <= 0.0 || b <= 0.0 {
        return None;
    }
    let ratio = a.max(b) / a.min(b);
    (ratio > 2.0).then(|| {
        format!(
            "fit window may straddle several eCDF modes: log-log slopes {a:.3} and {b:.3} on its two halves"
        )
    })
}

fn check_sizes(train: &DataMatrix, test: Option<&DataMatrix>, synth: &DataMatrix) -> Result<()> {
    check_compatible(train, synth)?;
    if let Some(t) = test {
        check_compatible(train, t)?;
    }
    if train.n_rows() < 2 {
        return invalid("train set needs at least two rows");
    }
    Ok(())
}

/// Score every synthetic row. With `test = None` the report is
/// overfitting-only: train-side probabilities and `n_overfit` only.
pub fn privet(
    train: &DataMatrix,
    test: Option<&DataMatrix>,
    synth: &DataMatrix,
    config: &PipelineConfig,
) -> Result<PrivacyReport> {
    config.validate()?;
    check_sizes(train, test, synth)?;
    let metric = config.metric.unwrap_or_else(|| Metric::for_dtype(train.dtype()));
    let t0 = Instant::now();
    let (d_trtr, (d_str, d_ste)) = rayon::join(
        || pairwise_min_profile(train, metric).map(|mut d| {
            d.query_label = "train".into();
            d.reference_label = "train".into();
            d
        }),
        || {
            rayon::join(
                || nn_distances_labeled(synth, train, metric, false, "synth", "train"),
                || test.map(|t| nn_distances_labeled(synth, t, metric, false, "synth", "test")),
            )
        },
    );
    let (d_trtr, d_str) = (d_trtr?, d_str?);
    let d_ste = d_ste.transpose()?;
    let t_nn = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let (fit, alternative_fit) = fit_both(&d_trtr, &config.window)?;
    let t_fit = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut warnings = Vec::new();
    if let Some(w) = window_slope_break(&d_trtr.distances, &config.window) {
        warnings.push(w);
    }
    let (regime, regime_evidence) =
        classify_regime(&d_trtr, &d_str, d_ste.as_ref(), config.regime_tolerance)?;
    let n_test = test.map_or(train.n_rows(), |t| t.n_rows());
    let side_fits = SideFits::new(&fit, train.n_rows(), n_test, config.rescale);
    let tau = config.threshold();

    let (samples, global, npl_before, rounds) = match &d_ste {
        Some(d_ste) => {
            let pre = score_samples(&side_fits, &d_str, d_ste, config.flag, tau)?;
            let npl_before = pre.iter().filter(|s| s.leak).count();
            let (samples, rounds) = if config.decimation {
                let dec = decimate(&side_fits, &d_str, d_ste, config.flag, tau, config.decimation_mode)?;
                (dec.scores, dec.rounds)
            } else {
                (pre.clone(), 0)
            };
            let (n_overfit, n_pleaks) = excess_curves(&side_fits, &d_str, d_ste)?;
            let global = globals(&pre, &samples, n_overfit, n_pleaks);
            (samples, global, npl_before, rounds)
        }
        None => {
            warnings.push(NO_TEST_BANNER.to_string());
            let m = d_str.len();
            let probs = pi_scores(&side_fits.train, &d_str, m, Reference::Train)?;
            let rows = d_str.row_distances();
            let ranks = d_str.ranks();
            let samples: Vec<SampleScore> = (0..m)
                .map(|i| SampleScore {
                    synth_row: i,
                    nn_dist_train: rows[i],
                    nn_dist_test: f64::NAN,
                    rank_train: ranks[i] + 1,
                    rank_test: 0,
                    log10_pi_train: probs[ranks[i]].log10_pi(),
                    log10_pi_test: f64::NAN,
                    delta_pi: None,
                    delta_pi_bar: None,
                    delta_p: None,
                    leak: false,
                    decimated_round: None,
                })
                .collect();
            let n_overfit = d_str
                .distances
                .iter()
                .enumerate()
                .map(|(k, &u)| (k + 1) as i64 - expected_rank(&side_fits.train, u, m).round() as i64)
                .collect();
            let global = GlobalIndices {
                mean_delta_pi: None,
                n_finite_delta_pi: 0,
                n_infinite_delta_pi: 0,
                n_undefined_delta_pi: m,
                npl: 0,
                n_overfit_curve: n_overfit,
                n_pleaks_curve: Vec::new(),
            };
            (samples, global, 0, 0)
        }
    };
    let t_score = t2.elapsed().as_secs_f64();

    Ok(PrivacyReport {
        version: REPORT_VERSION,
        config: config.clone(),
        metric,
        sizes: Sizes {
            n_train: train.n_rows(),
            n_test: test.map(|t| t.n_rows()),
            n_synth: synth.n_rows(),
            n_features: train.n_cols(),
        },
        fit,
        alternative_fit,
        side_fits,
        regime,
        regime_evidence,
        warnings,
        privacy_scores: d_ste.is_some(),
        samples,
        global,
        npl_before_decimation: npl_before,
        decimation_rounds: rounds,
        d_trtr,
        d_str,
        d_ste,
        timing: Timing {
            nn_seconds: t_nn,
            fit_seconds: t_fit,
            score_seconds: t_score,
            total_seconds: t0.elapsed().as_secs_f64(),
        },
    })
}

fn globals(pre: &[SampleScore], fin: &[SampleScore], n_overfit: Vec<i64>, n_pleaks: Vec<i64>) -> GlobalIndices {
    let mut sum = 0.0;
    let (mut nf, mut ni, mut nu) = (0, 0, 0);
    for s in pre {
        match s.delta_pi {
            Some(v) if v.is_finite() => {
                sum += v;
                nf += 1;
            }
            Some(_) => ni += 1,
            None => nu += 1,
        }
    }
    GlobalIndices {
        mean_delta_pi: (nf > 0).then(|| sum / nf as f64),
        n_finite_delta_pi: nf,
        n_infinite_delta_pi: ni,
        n_undefined_delta_pi: nu,
        npl: fin.iter().filter(|s| s.leak).count(),
        n_overfit_curve: n_overfit,
        n_pleaks_curve: n_pleaks,
    }
}

/// Scores of the reference rows in a membership attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipResult {
    /// `log10 pi` per reference row; lower means more likely a member.
    pub scores: Vec<f64>,
    pub nn_dist: Vec<f64>,
    /// Rank of each reference row's distance to the synthetic set: the
    /// number of reference rows at or below that distance.
    pub ranks: Vec<usize>,
    pub labels: Option<Vec<bool>>,
    pub pr: Option<PrCurve>,
    pub fit: TailFit,
    pub scoring_fit: TailFit,
    pub n_reference: usize,
    pub n_members: Option<usize>,
    pub n_synth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipConfig {
    pub metric: Option<Metric>,
    pub window: TailWindow,
    pub rescale: bool,
}

impl Default for MembershipConfig {
    fn default() -> Self {
        MembershipConfig {
            metric: None,
            window: TailWindow::default(),
            rescale: true,
        }
    }
}

/// Score each reference row (train and validation merged) by how anomalous
/// its distance to the synthetic set is under the reference-to-reference
/// tail law. The law is fitted with `|reference| - 1` competitors per query
/// and moved to `|synth|` competitors; the binomial runs over the
/// `|reference|` ranked rows.
pub fn membership_attack(
    reference: &DataMatrix,
    labels: Option<&[bool]>,
    synth: &DataMatrix,
    config: &MembershipConfig,
) -> Result<MembershipResult> {
    check_compatible(reference, synth)?;
    if let Some(l) = labels {
        if l.len() != reference.n_rows() {
            return invalid(format!(
                "{} membership labels for {} reference rows",
                l.len(),
                reference.n_rows()
            ));
        }
    }
    let metric = config.metric.unwrap_or_else(|| Metric::for_dtype(reference.dtype()));
    let (d_rr, d_rs) = rayon::join(
        || pairwise_min_profile(reference, metric),
        || nn_distances_labeled(reference, synth, metric, false, "reference", "synth"),
    );
    let (d_rr, d_rs) = (d_rr?, d_rs?);
    let (fit, _) = fit_both(&d_rr, &config.window)?;
    let scoring_fit = if config.rescale {
        fit.rescale(synth.n_rows())
    } else {
        fit.clone()
    };
    let m = d_rs.len();
    // Tied distances share one rank, the number of rows at or below the
    // distance, so that row order cannot separate them.
    let sorted = &d_rs.distances;
    let by_rank: Vec<f64> = sorted
        .par_iter()
        .with_min_len(64)
        .map(|&u| {
            let r = sorted.partition_point(|&x| x <= u);
            binomial_tails(m as u64, r as u64, scoring_fit.ln_cdf(u), scoring_fit.ln_sf(u)).ln_upper
                / std::f64::consts::LN_10
        })
        .collect();
    let ranks0 = d_rs.ranks();
    let scores: Vec<f64> = ranks0.iter().map(|&k| by_rank[k]).collect();
    let pr = match labels {
        Some(l) => Some(pr_curve(&scores, l)?),
        None => None,
    };
    Ok(MembershipResult {
        nn_dist: d_rs.row_distances(),
        ranks: ranks0
            .iter()
            .map(|&k| sorted.partition_point(|&x| x <= sorted[k]))
            .collect(),
        scores,
        labels: labels.map(|l| l.to_vec()),
        pr,
        fit,
        scoring_fit,
        n_reference: reference.n_rows(),
        n_members: labels.map(|l| l.iter().filter(|&&b| b).count()),
        n_synth: synth.n_rows(),
    })
}

/// Text rendering of a float for report tables: shortest round-trip form,
/// `nan` for NaN, `-inf` / `inf` for infinities.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("undefined".into(), fmt_f64)
}

pub const SAMPLE_COLUMNS: [&str; 12] = [
    "synth_row",
    "nn_dist_train",
    "nn_dist_test",
    "rank_train",
    "rank_test",
    "log10_pi_train",
    "log10_pi_test",
    "delta_pi",
    "delta_pi_bar",
    "delta_p",
    "leak",
    "decimated_round",
];

/// Per-sample table, one row per synthetic sample in row order.
pub fn samples_csv(report: &PrivacyReport) -> String {
    let mut s = SAMPLE_COLUMNS.join(",");
    s.push('\n');
    for r in &report.samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.synth_row,
            fmt_f64(r.nn_dist_train),
            fmt_f64(r.nn_dist_test),
            r.rank_train,
            r.rank_test,
            fmt_f64(r.log10_pi_train),
            fmt_f64(r.log10_pi_test),
            fmt_opt(r.delta_pi),
            fmt_opt(r.delta_pi_bar),
            fmt_opt(r.delta_p),
            u8::from(r.leak),
            r.decimated_round.map_or(String::new(), |k| k.to_string()),
        );
    }
    s
}

#[derive(Serialize)]
struct Summary<'a> {
    version: u32,
    banner: Option<&'a str>,
    config: &'a PipelineConfig,
    metric: Metric,
    sizes: &'a Sizes,
    fit: &'a TailFit,
    alternative_fit: &'a Option<TailFit>,
    side_fits: &'a SideFits,
    regime: Regime,
    regime_evidence: &'a RegimeEvidence,
    warnings: &'a [String],
    global: &'a GlobalIndices,
    npl_before_decimation: usize,
    decimation_rounds: usize,
}

/// JSON summary: everything but the per-sample table, the raw distances and
/// the timings.
pub fn summary_json(report: &PrivacyReport) -> String {
    let s = Summary {
        version: report.version,
        banner: (!report.privacy_scores).then_some(NO_TEST_BANNER),
        config: &report.config,
        metric: report.metric,
        sizes: &report.sizes,
        fit: &report.fit,
        alternative_fit: &report.alternative_fit,
        side_fits: &report.side_fits,
        regime: report.regime,
        regime_evidence: &report.regime_evidence,
        warnings: &report.warnings,
        global: &report.global,
        npl_before_decimation: report.npl_before_decimation,
        decimation_rounds: report.decimation_rounds,
    };
    let mut out = serde_json::to_string_pretty(&s).expect("summary serializes");
    out.push('\n');
    out
}

/// Step points `(x, F_n(x))` of an eCDF, one per distinct value.
pub fn ecdf_points(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (k, &x) in sorted.iter().enumerate() {
        let y = (k + 1) as f64 / n;
        match pts.last_mut() {
            Some(p) if p.0 == x => p.1 = y,
            _ => pts.push((x, y)),
        }
    }
    pts
}

/// Fitted CDF on a log-spaced grid over the positive range of `sorted`.
pub fn fit_curve(fit: &TailFit, sorted: &[f64], n: usize) -> Vec<(f64, f64)> {
    let lo = sorted.iter().cloned().find(|&x| x > 0.0);
    let hi = sorted.last().cloned();
    match (lo, hi) {
        (Some(lo), Some(hi)) if hi > lo => (0..n)
            .map(|i| {
                let x = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp();
                (x, fit.cdf(x))
            })
            .filter(|p| p.1 > 0.0)
            .collect(),
        _ => Vec::new(),
    }
}

/// Plot data of the eCDF figure: `(curve id, points)`.
pub fn ecdf_curves(report: &PrivacyReport) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut c = vec![
        ("d_trtr".to_string(), ecdf_points(&report.d_trtr.distances)),
        ("d_str".to_string(), ecdf_points(&report.d_str.distances)),
    ];
    if let Some(d) = &report.d_ste {
        c.push(("d_ste".to_string(), ecdf_points(&d.distances)));
    }
    c.push(("fit".to_string(), fit_curve(&report.fit, &report.d_trtr.distances, 200)));
    c
}

pub fn curves_csv(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::from("curve,x,y\n");
    for (id, pts) in curves {
        for (x, y) in pts {
            let _ = writeln!(s, "{id},{},{}", fmt_f64(*x), fmt_f64(*y));
        }
    }
    s
}

pub fn ecdf_svg(curves: &[(String, Vec<(f64, f64)>)], title: &str) -> String {
    let mut chart = LineChart::new(title, "NN distance", "eCDF", Scale::Log10, Scale::Log10);
    for (id, pts) in curves {
        let s = Series::new(id, pts.clone());
        chart.series.push(if id == "fit" { s.dashed() } else { s });
    }
    chart.to_svg()
}

/// Paths written by [`emit_report`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub samples_csv: PathBuf,
    pub summary_json: PathBuf,
    pub ecdf_csv: PathBuf,
    pub ecdf_svg: PathBuf,
}

pub(crate) fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| PrivetError::io(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PrivetError::io(dir, e))
}

/// Write `samples.csv`, `summary.json`, `ecdf.csv` and `ecdf.svg` into
/// `out_dir`. The content depends only on the report's deterministic fields.
pub fn emit_report(report: &PrivacyReport, out_dir: &Path) -> Result<ReportFiles> {
    ensure_dir(out_dir)?;
    let files = ReportFiles {
        samples_csv: out_dir.join("samples.csv"),
        summary_json: out_dir.join("summary.json"),
        ecdf_csv: out_dir.join("ecdf.csv"),
        ecdf_svg: out_dir.join("ecdf.svg"),
    };
    let curves = ecdf_curves(report);
    write_file(&files.samples_csv, &samples_csv(report))?;
    write_file(&files.summary_json, &summary_json(report))?;
    write_file(&files.ecdf_csv, &curves_csv(&curves))?;
    write_file(
        &files.ecdf_svg,
        &ecdf_svg(&curves, &format!("1-NN distances ({})", report.regime.name())),
    )?;
    Ok(files)
}

/// `timing.json` next to the report files.
pub fn emit_timing(report: &PrivacyReport, out_dir: &Path) -> Result<PathBuf> {
    ensure_dir(out_dir)?;
    let p = out_dir.join("timing.json");
    let mut s = serde_json::to_string_pretty(&report.timing).expect("timing serializes");
    s.push('\n');
    write_file(&p, &s)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[f64]) -> NNDistanceSet {
        NNDistanceSet::from_values(v, 100)
    }

    #[test]
    fn regime_archetypes() {
        let base: Vec<f64> = (1..=200).map(|i| 10.0 + i as f64 * 0.1).collect();
        let d = set(&base);
        let doubled: Vec<f64> = base.iter().map(|x| 2.0 * x).collect();
        let (r, ev) = classify_regime(&d, &set(&doubled), Some(&set(&doubled)), 0.05).unwrap();
        assert_eq!(r, Regime::Underfitting);
        assert!((ev.offset_train - 2f64.log10()).abs() < 1e-12);
        let mut zeros = vec![0.0; 40];
        zeros.extend_from_slice(&base[..160]);
        let (r, _) = classify_regime(&d, &set(&zeros), Some(&d), 0.05).unwrap();
        assert_eq!(r, Regime::Overfitting);
        let (r, ev) = classify_regime(&d, &d, Some(&d), 0.05).unwrap();
        assert_eq!(r, Regime::WellFitted);
        assert_eq!(ev.offset_train, 0.0);
    }

    #[test]
    fn ecdf_steps_merge_ties() {
        let p = ecdf_points(&[1.0, 1.0, 2.0, 3.0]);
        assert_eq!(p, vec![(1.0, 0.5), (2.0, 0.75), (3.0, 1.0)]);
    }

    #[test]
    fn float_text() {
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(0.1), "0.1");
    }
}
