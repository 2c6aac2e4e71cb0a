//! Binomial order statistics and the per-sample scores built on them.
//!
//! With `M` synthetic samples and a fitted per-sample CDF `F`, the chance
//! that at least `r` of them have a nearest-neighbor distance at or below `u`
//! is
//!
//! ```text
//! P(u, r) = P[Bin(M, F(u)) >= r] = 1 - sum_{q=0}^{r-1} C(M,q) F^q (1-F)^(M-q)
//!         = I_F(r, M - r + 1)
//! ```
//!
//! For `r = 1` this is `1 - (1 - F)^M`, the law of the sample minimum.
//! Everything is carried as natural logs and converted to base 10 only when
//! a score is reported; scores routinely reach `10^-300` and below.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::evt::TailFit;
use crate::knn::NNDistanceSet;

const LN_10: f64 = std::f64::consts::LN_10;

/// `ln(1 - e^x)` for `x <= 0`.
#[inline]
pub fn ln1m_exp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    if n <= 1000 {
        // Exact integers while below 2^53, then one rounding per step.
        let mut c = 1.0f64;
        for i in 1..=k {
            c = c * (n - k + i) as f64 / i as f64;
        }
        return c.ln();
    }
    libm::lgamma((n + 1) as f64) - libm::lgamma((k + 1) as f64) - libm::lgamma((n - k + 1) as f64)
}

/// Lentz continued fraction for the incomplete beta function; returns
/// `ln` of the fraction factor `h` in `I_x(a,b) = x^a (1-x)^b h / (a B(a,b))`.
fn ln_beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..100_000u64 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h.ln()
}

/// Both tails of `Bin(m, p)` split at `r`, as natural logs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailPair {
    /// `ln P[Bin >= r]`
    pub ln_upper: f64,
    /// `ln P[Bin < r]`
    pub ln_lower: f64,
}

/// Binomial tails from `ln p` and `ln(1 - p)` supplied separately, so that
/// neither loses precision when `p` is tiny or close to one.
pub fn binomial_tails(m: u64, r: u64, ln_p: f64, ln_q: f64) -> TailPair {
    let ninf = f64::NEG_INFINITY;
    if r == 0 {
        return TailPair {
            ln_upper: 0.0,
            ln_lower: ninf,
        };
    }
    if r > m || ln_p == ninf {
        return TailPair {
            ln_upper: ninf,
            ln_lower: 0.0,
        };
    }
    if ln_q == ninf {
        return TailPair {
            ln_upper: 0.0,
            ln_lower: ninf,
        };
    }
    let a = r as f64;
    let b = (m - r + 1) as f64;
    let p = ln_p.exp();
    let q = ln_q.exp();
    if p < (a + 1.0) / (a + b + 2.0) {
        // I_p(a, b) = C(m, r) p^r q^(m-r+1) h
        let lu = ln_choose(m, r) + a * ln_p + b * ln_q + ln_beta_cf(a, b, p);
        let lu = lu.min(0.0);
        TailPair {
            ln_upper: lu,
            ln_lower: ln1m_exp(lu),
        }
    } else {
        // 1 - I_p(a, b) = I_q(b, a) = C(m, r-1) q^(m-r+1) p^r h
        let ll = ln_choose(m, r - 1) + b * ln_q + a * ln_p + ln_beta_cf(b, a, q);
        let ll = ll.min(0.0);
        TailPair {
            ln_upper: ln1m_exp(ll),
            ln_lower: ll,
        }
    }
}

/// `ln P[Bin(m, p) >= r]` from `ln p`.
pub fn log_binomial_tail(m: usize, r: usize, log_p: f64) -> Result<f64> {
    if r < 1 || r > m {
        return invalid(format!("rank {r} outside 1..={m}"));
    }
    if log_p.is_nan() || log_p > 0.0 {
        return invalid(format!("log probability {log_p} must be <= 0"));
    }
    Ok(binomial_tails(m as u64, r as u64, log_p, ln1m_exp(log_p)).ln_upper)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Train,
    Test,
}

/// Order-statistic probability of one rank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankProbability {
    /// 1-based rank.
    pub rank: usize,
    pub u: f64,
    /// `ln pi_r`
    pub ln_pi: f64,
    /// `ln(1 - pi_r)`
    pub ln_one_minus_pi: f64,
    pub reference: Reference,
}

impl RankProbability {
    pub fn log10_pi(&self) -> f64 {
        self.ln_pi / LN_10
    }
}

fn tails_at(fit: &TailFit, m: usize, r: usize, u: f64) -> TailPair {
    binomial_tails(m as u64, r as u64, fit.ln_cdf(u), fit.ln_sf(u))
}

/// `pi_r` for every rank of a sorted distance set of size `m`.
pub fn pi_scores(
    fit: &TailFit,
    distances: &NNDistanceSet,
    m: usize,
    reference: Reference,
) -> Result<Vec<RankProbability>> {
    if m != distances.len() {
        return invalid(format!(
            "M = {m} but the distance set has {} entries",
            distances.len()
        ));
    }
    Ok(distances
        .distances
        .par_iter()
        .enumerate()
        .with_min_len(64)
        .map(|(k, &u)| {
            let t = tails_at(fit, m, k + 1, u);
            RankProbability {
                rank: k + 1,
                u,
                ln_pi: t.ln_upper,
                ln_one_minus_pi: t.ln_lower,
                reference,
            }
        })
        .collect())
}

/// `log10(pi_train / pi_test)` from the two log10 values. `None` when both are
/// `-inf` (both sides exact duplicates): the ratio is undefined.
pub fn delta_pi(log10_pi_train: f64, log10_pi_test: f64) -> Option<f64> {
    if log10_pi_train == f64::NEG_INFINITY && log10_pi_test == f64::NEG_INFINITY {
        return None;
    }
    let d = log10_pi_train - log10_pi_test;
    (!d.is_nan()).then_some(d)
}

/// `log10((1 - pi_test) / (1 - pi_train))` from the natural logs of the two
/// complements. `None` when both probabilities are exactly one.
pub fn delta_pi_bar(ln_1m_pi_train: f64, ln_1m_pi_test: f64) -> Option<f64> {
    if ln_1m_pi_train == f64::NEG_INFINITY && ln_1m_pi_test == f64::NEG_INFINITY {
        return None;
    }
    let d = (ln_1m_pi_test - ln_1m_pi_train) / LN_10;
    (!d.is_nan()).then_some(d)
}

/// `M F(u)`, the expected number of the `M` samples at or below `u`.
pub fn expected_rank(fit: &TailFit, u: f64, m: usize) -> f64 {
    m as f64 * fit.cdf(u)
}

/// The rank `r` at which `P(u, r)` crosses one half: the largest `r` with
/// `P[Bin(M, F(u)) >= r] >= 1/2` (a binomial median), found by bisection.
pub fn median_rank(fit: &TailFit, u: f64, m: usize) -> usize {
    let (lp, lq) = (fit.ln_cdf(u), fit.ln_sf(u));
    let half = 0.5f64.ln();
    let ok = |r: usize| binomial_tails(m as u64, r as u64, lp, lq).ln_upper >= half;
    let (mut lo, mut hi) = (0usize, m + 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The fitted law placed on each reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideFits {
    pub train: TailFit,
    pub test: TailFit,
}

impl SideFits {
    /// `fit` comes from train-to-train distances. With `rescale`, the train
    /// side is moved to `n_train` reference points and the test side to
    /// `n_test`; without it both sides use `fit` unchanged.
    pub fn new(fit: &TailFit, n_train: usize, n_test: usize, rescale: bool) -> SideFits {
        if rescale {
            SideFits {
                train: fit.rescale(n_train),
                test: fit.rescale(n_test),
            }
        } else {
            SideFits {
                train: fit.clone(),
                test: fit.clone(),
            }
        }
    }

    pub fn same(fit: &TailFit) -> SideFits {
        SideFits {
            train: fit.clone(),
            test: fit.clone(),
        }
    }
}

/// Which score decides the leak flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagScore {
    DeltaPi,
    DeltaP,
}

impl std::str::FromStr for FlagScore {
    type Err = crate::error::PrivetError;
    fn from_str(s: &str) -> Result<FlagScore> {
        match s {
            "delta_pi" => Ok(FlagScore::DeltaPi),
            "delta_p" => Ok(FlagScore::DeltaP),
            _ => invalid(format!("unknown flag score {s:?} (delta_pi|delta_p)")),
        }
    }
}

/// How flagged samples are removed during decimation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecimationMode {
    /// Remove the single most negative flagged sample, rescore, repeat.
    Sequential,
    /// Remove every flagged sample at once, rescore, repeat.
    Batch,
}

/// Scores of one synthetic sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub synth_row: usize,
    pub nn_dist_train: f64,
    pub nn_dist_test: f64,
    /// 1-based ranks in the synthetic-to-train and synthetic-to-test orders.
    pub rank_train: usize,
    pub rank_test: usize,
    pub log10_pi_train: f64,
    pub log10_pi_test: f64,
    /// `None` marks an undefined 0/0 score.
    pub delta_pi: Option<f64>,
    pub delta_pi_bar: Option<f64>,
    pub delta_p: Option<f64>,
    pub leak: bool,
    /// Round (1-based) at which decimation removed the sample.
    pub decimated_round: Option<usize>,
}

impl SampleScore {
    pub fn flag_value(&self, flag: FlagScore) -> Option<f64> {
        match flag {
            FlagScore::DeltaPi => self.delta_pi,
            FlagScore::DeltaP => self.delta_p,
        }
    }
}

/// Scoring state over a subset of the synthetic rows.
struct Engine<'a> {
    fits: &'a SideFits,
    dtr: Vec<f64>,
    dte: Vec<f64>,
}

/// Score tables of one pass, indexed by position in `alive`.
struct Pass {
    alive: Vec<usize>,
    rank_tr: Vec<usize>,
    rank_te: Vec<usize>,
    /// By train rank (0-based): tails at `u_r^train` on the train fit.
    tr: Vec<TailPair>,
    /// By test rank (0-based): tails at `u_r^test` on the test fit, rank r.
    te: Vec<TailPair>,
    u_tr: Vec<f64>,
    u_te: Vec<f64>,
}

fn order_of(alive: &[usize], d: &[f64]) -> Vec<usize> {
    let mut o: Vec<usize> = (0..alive.len()).collect();
    o.sort_by(|&a, &b| {
        d[alive[a]]
            .total_cmp(&d[alive[b]])
            .then(alive[a].cmp(&alive[b]))
    });
    o
}

impl<'a> Engine<'a> {
    fn new(fits: &'a SideFits, d_str: &NNDistanceSet, d_ste: &NNDistanceSet) -> Result<Engine<'a>> {
        if d_str.len() != d_ste.len() {
            return invalid(format!(
                "{} synthetic-to-train vs {} synthetic-to-test distances",
                d_str.len(),
                d_ste.len()
            ));
        }
        Ok(Engine {
            fits,
            dtr: d_str.row_distances(),
            dte: d_ste.row_distances(),
        })
    }

    fn pass(&self, alive: Vec<usize>) -> Pass {
        let m = alive.len();
        let otr = order_of(&alive, &self.dtr);
        let ote = order_of(&alive, &self.dte);
        let mut rank_tr = vec![0; m];
        let mut rank_te = vec![0; m];
        for (k, &i) in otr.iter().enumerate() {
            rank_tr[i] = k + 1;
        }
        for (k, &i) in ote.iter().enumerate() {
            rank_te[i] = k + 1;
        }
        let u_tr: Vec<f64> = otr.iter().map(|&i| self.dtr[alive[i]]).collect();
        let u_te: Vec<f64> = ote.iter().map(|&i| self.dte[alive[i]]).collect();
        let tr = u_tr
            .par_iter()
            .enumerate()
            .with_min_len(64)
            .map(|(k, &u)| tails_at(&self.fits.train, m, k + 1, u))
            .collect();
        let te = u_te
            .par_iter()
            .enumerate()
            .with_min_len(64)
            .map(|(k, &u)| tails_at(&self.fits.test, m, k + 1, u))
            .collect();
        Pass {
            alive,
            rank_tr,
            rank_te,
            tr,
            te,
            u_tr,
            u_te,
        }
    }

    /// `delta_pi` of the sample at position `i` of the pass.
    fn delta_pi(p: &Pass, i: usize) -> Option<f64> {
        let r = p.rank_tr[i] - 1;
        delta_pi(p.tr[r].ln_upper / LN_10, p.te[r].ln_upper / LN_10)
    }

    fn excess(&self, p: &Pass) -> (Vec<i64>, Vec<i64>) {
        let m = p.alive.len();
        let rt: Vec<i64> = p
            .u_tr
            .iter()
            .map(|&u| expected_rank(&self.fits.train, u, m).round() as i64)
            .collect();
        let re: Vec<i64> = p
            .u_te
            .iter()
            .map(|&u| expected_rank(&self.fits.test, u, m).round() as i64)
            .collect();
        (rt, re)
    }

    /// Rank-corrected `ln p` for both sides, indexed by pass position.
    fn corrected(&self, p: &Pass) -> (Vec<f64>, Vec<f64>) {
        let m = p.alive.len();
        let (rt, re) = self.excess(p);
        let corr = |r: usize, exp: &[i64]| -> usize {
            // n_excess(r-1) = (r-1) - r[u_{r-1}], zero for r = 1
            let ex = if r == 1 { 0 } else { (r as i64 - 1) - exp[r - 2] };
            (r as i64 - ex).clamp(1, m as i64) as usize
        };
        let lp_tr = (0..m)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let r = p.rank_tr[i];
                tails_at(&self.fits.train, m, corr(r, &rt), p.u_tr[r - 1]).ln_upper
            })
            .collect();
        let lp_te = (0..m)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let r = p.rank_te[i];
                tails_at(&self.fits.test, m, corr(r, &re), p.u_te[r - 1]).ln_upper
            })
            .collect();
        (lp_tr, lp_te)
    }

    fn full_scores(&self, p: &Pass, flag: FlagScore, tau: f64) -> Vec<SampleScore> {
        let (lp_tr, lp_te) = self.corrected(p);
        (0..p.alive.len())
            .map(|i| {
                let rt = p.rank_tr[i];
                let tr = p.tr[rt - 1];
                let te = p.te[rt - 1];
                let s = SampleScore {
                    synth_row: p.alive[i],
                    nn_dist_train: self.dtr[p.alive[i]],
                    nn_dist_test: self.dte[p.alive[i]],
                    rank_train: rt,
                    rank_test: p.rank_te[i],
                    log10_pi_train: tr.ln_upper / LN_10,
                    log10_pi_test: te.ln_upper / LN_10,
                    delta_pi: delta_pi(tr.ln_upper / LN_10, te.ln_upper / LN_10),
                    delta_pi_bar: delta_pi_bar(tr.ln_lower, te.ln_lower),
                    delta_p: delta_pi(lp_tr[i] / LN_10, lp_te[i] / LN_10),
                    leak: false,
                    decimated_round: None,
                };
                let leak = s.flag_value(flag).is_some_and(|v| v < tau);
                SampleScore { leak, ..s }
            })
            .collect()
    }
}

/// Scores for every synthetic row, in row order, without decimation.
pub fn score_samples(
    fits: &SideFits,
    d_str: &NNDistanceSet,
    d_ste: &NNDistanceSet,
    flag: FlagScore,
    tau: f64,
) -> Result<Vec<SampleScore>> {
    let e = Engine::new(fits, d_str, d_ste)?;
    let p = e.pass((0..d_str.len()).collect());
    Ok(e.full_scores(&p, flag, tau))
}

/// `n_overfit(r)` and `n_pleaks(r)` for `r = 1..=M`.
pub fn excess_curves(
    fits: &SideFits,
    d_str: &NNDistanceSet,
    d_ste: &NNDistanceSet,
) -> Result<(Vec<i64>, Vec<i64>)> {
    let e = Engine::new(fits, d_str, d_ste)?;
    let m = d_str.len();
    let rt: Vec<i64> = d_str
        .distances
        .iter()
        .map(|&u| expected_rank(&e.fits.train, u, m).round() as i64)
        .collect();
    let re: Vec<i64> = d_ste
        .distances
        .iter()
        .map(|&u| expected_rank(&e.fits.test, u, m).round() as i64)
        .collect();
    let overfit = rt.iter().enumerate().map(|(k, &x)| (k + 1) as i64 - x).collect();
    let pleaks = re.iter().zip(&rt).map(|(a, b)| a - b).collect();
    Ok((overfit, pleaks))
}

/// Rank-corrected scores for each synthetic row (row order):
/// `(log10 p_train, delta_p)`.
pub fn corrected_scores(
    fits: &SideFits,
    d_str: &NNDistanceSet,
    d_ste: &NNDistanceSet,
) -> Result<Vec<(f64, Option<f64>)>> {
    let e = Engine::new(fits, d_str, d_ste)?;
    let p = e.pass((0..d_str.len()).collect());
    let (lp_tr, lp_te) = e.corrected(&p);
    Ok(lp_tr
        .iter()
        .zip(&lp_te)
        .map(|(&a, &b)| (a / LN_10, delta_pi(a / LN_10, b / LN_10)))
        .collect())
}

/// Outcome of decimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decimation {
    /// Row order. Removed rows keep the scores they had when removed.
    pub scores: Vec<SampleScore>,
    pub rounds: usize,
    /// Rows in removal order.
    pub removed: Vec<usize>,
}

/// Remove flagged samples and rescore the survivors until none is flagged.
pub fn decimate(
    fits: &SideFits,
    d_str: &NNDistanceSet,
    d_ste: &NNDistanceSet,
    flag: FlagScore,
    tau: f64,
    mode: DecimationMode,
) -> Result<Decimation> {
    let e = Engine::new(fits, d_str, d_ste)?;
    let n = d_str.len();
    let mut scores: Vec<Option<SampleScore>> = vec![None; n];
    let mut alive: Vec<usize> = (0..n).collect();
    let mut removed = Vec::new();
    let mut rounds = 0;
    loop {
        let p = e.pass(alive.clone());
        let flagged: Vec<(usize, f64)> = match flag {
            FlagScore::DeltaPi => (0..p.alive.len())
                .filter_map(|i| Engine::delta_pi(&p, i).filter(|&v| v < tau).map(|v| (i, v)))
                .collect(),
            FlagScore::DeltaP => {
                let full = e.full_scores(&p, flag, tau);
                full.iter()
                    .enumerate()
                    .filter_map(|(i, s)| s.delta_p.filter(|&v| v < tau).map(|v| (i, v)))
                    .collect()
            }
        };
        if flagged.is_empty() {
            for s in e.full_scores(&p, flag, tau) {
                let row = s.synth_row;
                scores[row] = Some(s);
            }
            break;
        }
        rounds += 1;
        let chosen: Vec<usize> = match mode {
            DecimationMode::Sequential => {
                let best = flagged
                    .iter()
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(p.alive[a.0].cmp(&p.alive[b.0])))
                    .unwrap();
                vec![best.0]
            }
            DecimationMode::Batch => flagged.iter().map(|f| f.0).collect(),
        };
        let full = e.full_scores(&p, flag, tau);
        let mut gone = vec![false; p.alive.len()];
        for &i in &chosen {
            let mut s = full[i].clone();
            s.leak = true;
            s.decimated_round = Some(rounds);
            let row = s.synth_row;
            removed.push(row);
            scores[row] = Some(s);
            gone[i] = true;
        }
        alive = p
            .alive
            .iter()
            .enumerate()
            .filter(|(i, _)| !gone[*i])
            .map(|(_, &r)| r)
            .collect();
        if alive.is_empty() {
            break;
        }
    }
    Ok(Decimation {
        scores: scores.into_iter().map(|s| s.unwrap()).collect(),
        rounds,
        removed,
    })
}
