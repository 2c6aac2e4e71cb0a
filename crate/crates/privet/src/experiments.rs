//! Ground-truth scenarios and their scoring: a synthetic SNP-like
//! population, controlled leak injection, copycat mixing, parameter grids
//! and precision/recall summaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand_distr::{Beta, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::authenticity_flags;
use crate::data::{check_compatible, split, DataMatrix, Dtype, SplitSpec};
use crate::error::{invalid, PrivetError, Result};
use crate::knn::{nearest, Metric};
use crate::pipeline::{ensure_dir, fmt_f64, privet, write_file, PipelineConfig};
use crate::plot::heatmap_svg;
use crate::rng;

/// Blockwise-correlated binary population. Features come in blocks of
/// `block_len` linked sites; each block has `n_templates` haplotype
/// templates whose sites are Bernoulli draws with Beta-distributed allele
/// frequencies. An individual copies one template per block, chosen with
/// Dirichlet weights of its subpopulation, then flips each bit with its own
/// rate drawn uniformly from `flip_rate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_features: usize,
    pub block_len: usize,
    pub n_templates: usize,
    pub flip_rate: (f64, f64),
    pub n_subpops: usize,
    pub concentration: f64,
    /// Beta parameters of the per-site template frequency.
    pub freq_beta: (f64, f64),
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            n_features: 4096,
            block_len: 32,
            n_templates: 6,
            flip_rate: (0.01, 0.01),
            n_subpops: 1,
            concentration: 0.7,
            freq_beta: (0.5, 2.0),
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.flip_rate;
        if self.n_features == 0 || self.block_len == 0 || self.n_templates == 0 || self.n_subpops == 0 {
            return invalid("population sizes must be positive");
        }
        if !(0.0 <= lo && lo <= hi && hi <= 0.5) {
            return invalid(format!("flip rate range ({lo}, {hi}) must lie in [0, 0.5]"));
        }
        if !(self.concentration > 0.0 && self.freq_beta.0 > 0.0 && self.freq_beta.1 > 0.0) {
            return invalid("concentration and Beta parameters must be positive");
        }
        Ok(())
    }
}

/// The fixed structure of a population: templates and template weights.
#[derive(Clone, Debug)]
pub struct Population {
    pub spec: PopulationSpec,
    seed: u64,
    /// `templates[b][h]` holds the sites of template `h` of block `b`.
    templates: Vec<Vec<Vec<u8>>>,
    /// `cum_weights[k][b]`: cumulative template weights.
    cum_weights: Vec<Vec<Vec<f64>>>,
}

impl Population {
    pub fn new(spec: &PopulationSpec, seed: u64) -> Result<Population> {
        spec.validate()?;
        let mut g = rng::stream(seed, "population");
        let nb = spec.n_features.div_ceil(spec.block_len);
        let beta = Beta::new(spec.freq_beta.0, spec.freq_beta.1)
            .map_err(|e| PrivetError::Invalid(e.to_string()))?;
        let gamma =
            Gamma::new(spec.concentration, 1.0).map_err(|e| PrivetError::Invalid(e.to_string()))?;
        let mut templates = Vec::with_capacity(nb);
        for b in 0..nb {
            let len = spec.block_len.min(spec.n_features - b * spec.block_len);
            let p: Vec<f64> = (0..len).map(|_| beta.sample(&mut g)).collect();
            let t: Vec<Vec<u8>> = (0..spec.n_templates)
                .map(|_| p.iter().map(|&pi| u8::from(rng::unit(&mut g) < pi)).collect())
                .collect();
            templates.push(t);
        }
        let cum_weights = (0..spec.n_subpops)
            .map(|_| {
                (0..nb)
                    .map(|_| {
                        let w: Vec<f64> = (0..spec.n_templates).map(|_| gamma.sample(&mut g)).collect();
                        let s: f64 = w.iter().sum();
                        let mut acc = 0.0;
                        w.iter()
                            .map(|x| {
                                acc += x / s;
                                acc
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Population {
            spec: spec.clone(),
            seed,
            templates,
            cum_weights,
        })
    }

    fn individual(&self, index: u64, out: &mut [u8]) {
        let mut g = rng::indexed_stream(self.seed, "individual", index);
        let k = rng::below(&mut g, self.spec.n_subpops);
        let (lo, hi) = self.spec.flip_rate;
        let e = lo + (hi - lo) * rng::unit(&mut g);
        let mut pos = 0;
        for (b, t) in self.templates.iter().enumerate() {
            let u = rng::unit(&mut g);
            let c = self.cum_weights[k][b]
                .iter()
                .position(|&w| u < w)
                .unwrap_or(self.spec.n_templates - 1);
            let row = &t[c];
            out[pos..pos + row.len()].copy_from_slice(row);
            pos += row.len();
        }
        if e > 0.0 {
            for v in out.iter_mut() {
                if rng::unit(&mut g) < e {
                    *v ^= 1;
                }
            }
        }
    }

    /// Individuals `first..first + n` as a binary matrix.
    pub fn sample(&self, first: u64, n: usize) -> Result<DataMatrix> {
        if n == 0 {
            return invalid("cannot sample zero individuals");
        }
        let d = self.spec.n_features;
        let mut v = vec![0u8; n * d];
        v.par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, row)| self.individual(first + i as u64, row));
        DataMatrix::from_binary(n, d, &v)
    }
}

/// `n` individuals of the population defined by `spec` and `seed`.
pub fn generate_population(spec: &PopulationSpec, n: usize, seed: u64) -> Result<DataMatrix> {
    Population::new(spec, seed)?.sample(0, n)
}

/// Replace a `fraction` of rows by noisy copies of other rows (each bit of
/// the copy flipped with probability `flip`), producing close relatives.
pub fn plant_kin_pairs(m: &DataMatrix, fraction: f64, flip: f64, seed: u64) -> Result<DataMatrix> {
    if m.dtype() != Dtype::Binary {
        return invalid("kin pairs are planted in binary matrices");
    }
    if !(0.0..=0.5).contains(&fraction) || !(0.0..=0.5).contains(&flip) {
        return invalid("kin fraction and flip rate must lie in [0, 0.5]");
    }
    let n = m.n_rows();
    let k = (fraction * n as f64).floor() as usize;
    let mut g = rng::stream(seed, "kin");
    let idx = rng::sample_indices(&mut g, n, 2 * k);
    let mut out = m.clone();
    for p in idx.chunks_exact(2) {
        let (dst, src) = (p[0], p[1]);
        out.copy_row_from(dst, m, src);
        for j in 0..m.n_cols() {
            if rng::unit(&mut g) < flip {
                let b = out.bit(dst, j);
                out.set_bit(dst, j, !b);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakSpec {
    pub f_fake: f64,
    pub f_copy: f64,
    pub seed: u64,
}

impl LeakSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.f_fake) || !(0.0..=1.0).contains(&self.f_copy) {
            return invalid(format!(
                "f_fake = {} and f_copy = {} must lie in [0, 1]",
                self.f_fake, self.f_copy
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub leak: Vec<bool>,
    /// Train row each leaked row copied from.
    pub source: Vec<Option<usize>>,
}

impl GroundTruth {
    pub fn n_leaks(&self) -> usize {
        self.leak.iter().filter(|&&b| b).count()
    }
}

/// Outcome of [`inject_leaks`].
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub synth: DataMatrix,
    pub truth: GroundTruth,
    /// Set when `f_copy * n_cols < 1` turned the injection into a no-op.
    pub warning: Option<String>,
}

/// Copy `floor(f_copy * n_cols)` random positions of each selected synthetic
/// row's train nearest neighbor into it. `floor(f_fake * M)` rows are
/// selected. Positions count whether or not the values already agreed.
pub fn inject_leaks(
    train: &DataMatrix,
    synth: &DataMatrix,
    spec: &LeakSpec,
    metric: Metric,
) -> Result<Injection> {
    spec.validate()?;
    check_compatible(train, synth)?;
    if train.dtype() != Dtype::Binary {
        return invalid("leak injection copies bits and needs binary matrices");
    }
    let m = synth.n_rows();
    let d = synth.n_cols();
    let n_fake = (spec.f_fake * m as f64).floor() as usize;
    let n_copy = (spec.f_copy * d as f64).floor() as usize;
    let mut g = rng::stream(spec.seed, "inject");
    let rows = rng::sample_indices(&mut g, m, n_fake);
    let warning = (n_fake > 0 && n_copy == 0)
        .then(|| format!("f_copy * n_cols = {} < 1: injection changes nothing", spec.f_copy * d as f64));
    let mut out = synth.clone();
    let mut truth = GroundTruth {
        leak: vec![false; m],
        source: vec![None; m],
    };
    if n_fake == 0 {
        return Ok(Injection {
            synth: out,
            truth,
            warning,
        });
    }
    let chosen = synth.select_rows(&rows);
    let nn = nearest(&chosen, train, metric, false)?;
    for (k, &row) in rows.iter().enumerate() {
        let src = nn[k].index;
        for j in rng::sample_indices(&mut g, d, n_copy) {
            out.set_bit(row, j, train.bit(src, j));
        }
        truth.leak[row] = true;
        truth.source[row] = Some(src);
    }
    Ok(Injection {
        synth: out,
        truth,
        warning,
    })
}

/// First `floor(beta N)` train rows followed by the first
/// `N - floor(beta N)` synthetic rows, `N = |synth|`.
pub fn copycat_mix(train: &DataMatrix, synth: &DataMatrix, beta: f64) -> Result<(DataMatrix, GroundTruth)> {
    check_compatible(train, synth)?;
    if !(0.0..=1.0).contains(&beta) {
        return invalid(format!("beta = {beta} must lie in [0, 1]"));
    }
    let n = synth.n_rows();
    let k = (beta * n as f64).floor() as usize;
    if k > train.n_rows() {
        return invalid(format!("beta N = {k} exceeds the {} train rows", train.n_rows()));
    }
    let mut out = synth.clone();
    for i in 0..k {
        out.copy_row_from(i, train, i);
    }
    let truth = GroundTruth {
        leak: (0..n).map(|i| i < k).collect(),
        source: (0..n).map(|i| (i < k).then_some(i)).collect(),
    };
    Ok((out, truth))
}

/// The copycat fractions used in the image experiments.
pub const COPYCAT_BETAS: [f64; 12] = [0.0, 0.001, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// Ascending thresholds; a sample is predicted positive when its score is
    /// at or below the threshold.
    pub points: Vec<PrPoint>,
    /// Average precision; `None` when the truth has a single class.
    pub auc: Option<f64>,
    pub prevalence: f64,
    pub n_positive: usize,
    pub n_total: usize,
}

/// Precision/recall over all thresholds of `scores`, lower scores ranked as
/// more suspicious. Tied scores enter together. NaN scores rank last.
pub fn pr_curve(scores: &[f64], truth: &[bool]) -> Result<PrCurve> {
    if scores.len() != truth.len() {
        return invalid(format!("{} scores for {} labels", scores.len(), truth.len()));
    }
    if scores.is_empty() {
        return invalid("empty score list");
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| key(scores[a]).total_cmp(&key(scores[b])));
    let mut points = Vec::new();
    let (mut tp, mut k) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut last_recall = 0.0;
    while k < order.len() {
        let t = key(scores[order[k]]);
        while k < order.len() && key(scores[order[k]]) == t {
            tp += usize::from(truth[order[k]]);
            k += 1;
        }
        let precision = tp as f64 / k as f64;
        let recall = if n_pos > 0 { tp as f64 / n_pos as f64 } else { 0.0 };
        ap += (recall - last_recall) * precision;
        last_recall = recall;
        points.push(PrPoint {
            threshold: t,
            precision,
            recall,
        });
    }
    Ok(PrCurve {
        points,
        auc: (n_pos > 0 && n_pos < scores.len()).then_some(ap),
        prevalence: n_pos as f64 / scores.len() as f64,
        n_positive: n_pos,
        n_total: scores.len(),
    })
}

/// The classifier that first picks every memorized positive and then picks
/// uniformly at random: `(recall, precision)` at `n_points` depths.
pub fn ideal_pr_curve(n_total: usize, n_positive: usize, n_memorized: usize, n_points: usize) -> Vec<(f64, f64)> {
    assert!(n_memorized <= n_positive && n_positive <= n_total && n_positive > 0);
    let mut out = Vec::with_capacity(n_points + 1);
    let p = n_positive as f64;
    let km = n_memorized as f64;
    let rest = (n_total - n_memorized) as f64;
    let rho = if rest > 0.0 { (p - km) / rest } else { 0.0 };
    for i in 1..=n_points {
        let depth = n_total as f64 * i as f64 / n_points as f64;
        let (hits, picked) = if depth <= km {
            (depth, depth)
        } else {
            (km + (depth - km) * rho, depth)
        };
        out.push((hits / p, hits / picked));
    }
    out
}

/// Knee of a PR curve: the point farthest above the chord from
/// `(0, 1)` to `(1, prevalence)`.
pub fn pr_knee(curve: &PrCurve) -> Option<PrPoint> {
    let (x1, y1) = (1.0, curve.prevalence);
    let (dx, dy) = (x1 - 0.0, y1 - 1.0);
    let norm = (dx * dx + dy * dy).sqrt();
    curve
        .points
        .iter()
        .map(|p| (p, (dx * (p.precision - 1.0) - dy * p.recall) / norm))
        .filter(|(_, d)| *d > 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| *p)
}

pub fn pr_csv(curve: &PrCurve) -> String {
    let mut s = String::from("threshold,precision,recall\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", fmt_f64(p.threshold), fmt_f64(p.precision), fmt_f64(p.recall));
    }
    s
}

/// Confusion counts of predicted flags against the truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_flags(flags: &[bool], truth: &[bool]) -> Confusion {
        let mut c = Confusion::default();
        for (&f, &t) in flags.iter().zip(truth) {
            match (f, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// `None` when nothing is predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when there are no positives.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }

    pub fn predicted(&self) -> usize {
        self.tp + self.fp
    }
}

/// Per-sample scores produced outside this crate, read from a
/// `synth_row,score` CSV; rows with a score below `tau` are flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalScorer {
    pub name: String,
    /// Directory holding `cell_<i>_<j>.csv` for grid cell `(i, j)`.
    pub dir: PathBuf,
    pub tau: f64,
}

pub fn read_external_scores(path: &Path, n_rows: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| PrivetError::io(path, e))?;
    let mut out = vec![f64::NAN; n_rows];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("synth_row")) {
            continue;
        }
        let perr = |msg: String| PrivetError::Parse {
            path: path.to_path_buf(),
            line: ln + 1,
            msg,
        };
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| perr("expected synth_row,score".into()))?;
        let row: usize = a.trim().parse().map_err(|_| perr(format!("bad row {a:?}")))?;
        let v: f64 = b.trim().parse().map_err(|_| perr(format!("bad score {b:?}")))?;
        if row >= n_rows {
            return Err(perr(format!("row {row} out of range 0..{n_rows}")));
        }
        out[row] = v;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Scorer {
    /// Leak flags of the pipeline as configured (decimation per config).
    Privet,
    /// Flags of the undecimated pass.
    PrivetPre,
    Authenticity,
    External(ExternalScorer),
}

impl Scorer {
    pub fn name(&self) -> String {
        match self {
            Scorer::Privet => "privet".into(),
            Scorer::PrivetPre => "privet_pre".into(),
            Scorer::Authenticity => "authenticity".into(),
            Scorer::External(e) => e.name.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub f_fake: Vec<f64>,
    pub f_copy: Vec<f64>,
    pub split: SplitSpec,
    /// Leak-injection seed of cell `(i, j)` is derived from this one.
    pub seed: u64,
    pub metric: Metric,
    pub pipeline: PipelineConfig,
    pub scorers: Vec<Scorer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerOutcome {
    pub scorer: String,
    pub npl: usize,
    pub confusion: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub i: usize,
    pub j: usize,
    pub f_fake: f64,
    pub f_copy: f64,
    pub n_leaks: usize,
    pub outcomes: Vec<ScorerOutcome>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn outcome(&self, scorer: &str) -> Option<&ScorerOutcome> {
        self.outcomes.iter().find(|o| o.scorer == scorer)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub spec: GridSpec,
    /// Row-major over `(f_fake, f_copy)`.
    pub cells: Vec<CellResult>,
}

impl GridResult {
    pub fn cell(&self, i: usize, j: usize) -> &CellResult {
        &self.cells[i * self.spec.f_copy.len() + j]
    }
}

/// Seed of the leak injection in cell `(i, j)`.
pub fn cell_seed(master: u64, i: usize, j: usize) -> u64 {
    use rand_core::RngCore;
    rng::indexed_stream(master, "grid-cell", ((i as u64) << 32) | j as u64).next_u64()
}

fn run_cell(
    spec: &GridSpec,
    train: &DataMatrix,
    test: &DataMatrix,
    synth: &DataMatrix,
    i: usize,
    j: usize,
) -> Result<(usize, Vec<ScorerOutcome>)> {
    let leak = LeakSpec {
        f_fake: spec.f_fake[i],
        f_copy: spec.f_copy[j],
        seed: cell_seed(spec.seed, i, j),
    };
    let inj = inject_leaks(train, synth, &leak, spec.metric)?;
    let truth = &inj.truth.leak;
    let mut outcomes = Vec::new();
    let needs_privet = spec
        .scorers
        .iter()
        .any(|s| matches!(s, Scorer::Privet | Scorer::PrivetPre));
    let report = if needs_privet {
        let mut cfg = spec.pipeline.clone();
        cfg.metric = Some(spec.metric);
        Some(privet(train, Some(test), &inj.synth, &cfg)?)
    } else {
        None
    };
    for s in &spec.scorers {
        let flags: Vec<bool> = match s {
            Scorer::Privet => report.as_ref().unwrap().samples.iter().map(|x| x.leak).collect(),
            Scorer::PrivetPre => {
                let r = report.as_ref().unwrap();
                let tau = r.config.threshold();
                crate::orderstats::score_samples(
                    &r.side_fits,
                    &r.d_str,
                    r.d_ste.as_ref().unwrap(),
                    r.config.flag,
                    tau,
                )?
                .iter()
                .map(|x| x.leak)
                .collect()
            }
            Scorer::Authenticity => authenticity_flags(train, &inj.synth, spec.metric)?.flags,
            Scorer::External(e) => {
                let p = e.dir.join(format!("cell_{i}_{j}.csv"));
                read_external_scores(&p, synth.n_rows())?
                    .iter()
                    .map(|&v| v < e.tau)
                    .collect()
            }
        };
        let confusion = Confusion::from_flags(&flags, truth);
        outcomes.push(ScorerOutcome {
            scorer: s.name(),
            npl: confusion.predicted(),
            confusion,
        });
    }
    Ok((inj.truth.n_leaks(), outcomes))
}

/// Split once, then inject and score every `(f_fake, f_copy)` cell. Cell
/// failures are recorded in the result.
pub fn run_grid(source: &DataMatrix, spec: &GridSpec) -> Result<GridResult> {
    if spec.f_fake.is_empty() || spec.f_copy.is_empty() {
        return invalid("grid needs at least one f_fake and one f_copy value");
    }
    for &f in spec.f_fake.iter().chain(&spec.f_copy) {
        if !(0.0..=1.0).contains(&f) {
            return invalid(format!("grid fraction {f} outside [0, 1]"));
        }
    }
    spec.pipeline.validate()?;
    let (train, test, synth) = split(source, &spec.split)?;
    let nc = spec.f_copy.len();
    let cells = (0..spec.f_fake.len() * nc)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / nc, c % nc);
            let (n_leaks, outcomes, error) = match run_cell(spec, &train, &test, &synth, i, j) {
                Ok((n, o)) => (n, o, None),
                Err(e) => (0, Vec::new(), Some(e.to_string())),
            };
            CellResult {
                i,
                j,
                f_fake: spec.f_fake[i],
                f_copy: spec.f_copy[j],
                n_leaks,
                outcomes,
                error,
            }
        })
        .collect();
    Ok(GridResult {
        spec: spec.clone(),
        cells,
    })
}

/// Map names written per scorer.
pub const MAP_METRICS: [&str; 8] = ["npl", "precision", "recall", "f1", "tp", "fp", "tn", "fn"];

fn map_value(o: &ScorerOutcome, metric: &str) -> Option<f64> {
    let c = &o.confusion;
    match metric {
        "npl" => Some(o.npl as f64),
        "precision" => c.precision(),
        "recall" => c.recall(),
        "f1" => c.f1(),
        "tp" => Some(c.tp as f64),
        "fp" => Some(c.fp as f64),
        "tn" => Some(c.tn as f64),
        "fn" => Some(c.fn_ as f64),
        _ => None,
    }
}

/// `f_fake,f_copy,metric,value` table of one scorer and metric.
pub fn map_csv(grid: &GridResult, scorer: &str, metric: &str) -> String {
    let mut s = String::from("f_fake,f_copy,metric,value\n");
    for c in &grid.cells {
        let v = c.outcome(scorer).and_then(|o| map_value(o, metric));
        let _ = writeln!(
            s,
            "{},{},{metric},{}",
            fmt_f64(c.f_fake),
            fmt_f64(c.f_copy),
            v.map_or("nan".into(), fmt_f64)
        );
    }
    s
}

/// Write `maps/<scorer>_<metric>.csv` and `.svg` for every scorer and
/// metric, plus `cells.json`. Returns the written paths.
pub fn emit_grid(grid: &GridResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let maps = out_dir.join("maps");
    ensure_dir(&maps)?;
    let mut written = Vec::new();
    for sc in &grid.spec.scorers {
        let name = sc.name();
        for metric in MAP_METRICS {
            let csv = maps.join(format!("{name}_{metric}.csv"));
            write_file(&csv, &map_csv(grid, &name, metric))?;
            let values: Vec<Vec<Option<f64>>> = (0..grid.spec.f_fake.len())
                .map(|i| {
                    (0..grid.spec.f_copy.len())
                        .map(|j| grid.cell(i, j).outcome(&name).and_then(|o| map_value(o, metric)))
                        .collect()
                })
                .collect();
            let svg = maps.join(format!("{name}_{metric}.svg"));
            write_file(
                &svg,
                &heatmap_svg(
                    &format!("{name} {metric}"),
                    "f_fake",
                    "f_copy",
                    &grid.spec.f_fake,
                    &grid.spec.f_copy,
                    &values,
                ),
            )?;
            written.push(csv);
            written.push(svg);
        }
    }
    let cells = out_dir.join("cells.json");
    let mut js = serde_json::to_string_pretty(&grid.cells).expect("cells serialize");
    js.push('\n');
    write_file(&cells, &js)?;
    written.push(cells);
    Ok(written)
}

/// Helper for examples and tests: the standard three-way split of a fresh
/// population of `3 n` individuals.
pub fn population_split(spec: &PopulationSpec, n: usize, seed: u64) -> Result<(DataMatrix, DataMatrix, DataMatrix)> {
    let pop = generate_population(spec, 3 * n, seed)?;
    split(
        &pop,
        &SplitSpec {
            seed,
            n_train: n,
            n_test: n,
            n_synth: n,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_is_deterministic_and_binary() {
        let spec = PopulationSpec {
            n_features: 100,
            ..Default::default()
        };
        let a = generate_population(&spec, 20, 3).unwrap();
        let b = generate_population(&spec, 20, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_cols(), 100);
        let c = generate_population(&spec, 20, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pr_curve_basics() {
        let c = pr_curve(&[0.0, 1.0, 2.0, 3.0], &[true, true, false, false]).unwrap();
        assert_eq!(c.auc, Some(1.0));
        assert_eq!(c.points[1].recall, 1.0);
        let c = pr_curve(&[0.0, 1.0], &[false, false]).unwrap();
        assert_eq!(c.auc, None);
        // ties enter together
        let c = pr_curve(&[1.0, 1.0, 2.0], &[true, false, true]).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.points[0].precision, 0.5);
    }

    #[test]
    fn ideal_curve_has_a_corner_at_memorized_fraction() {
        let c = ideal_pr_curve(3000, 1500, 450, 3000);
        let corner = c.iter().filter(|p| p.1 == 1.0).map(|p| p.0).fold(0.0, f64::max);
        assert!((corner - 0.3).abs() < 1e-9);
        assert!((c.last().unwrap().0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn confusion_undefined_statuses() {
        let c = Confusion::from_flags(&[false, false], &[false, true]);
        assert_eq!(c.precision(), None);
        assert_eq!(c.recall(), Some(0.0));
        assert_eq!(c.f1(), None);
    }
}
