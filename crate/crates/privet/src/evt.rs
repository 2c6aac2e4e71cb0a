//! Extreme-value tail models for nearest-neighbor distances.
//!
//! Both families are written through the cumulative hazard `H(u)`:
//!
//! ```text
//! Weibull:  F(u) = 1 - exp(-H(u)),  H(u) = A u^alpha
//! Gumbel:   F(u) = 1 - exp(-H(u)),  H(u) = A exp(B u)
//! ```
//!
//! `F(u)` is the probability that a single query's 1-NN distance falls below
//! `u`. `A` is carried as `ln A` because realistic fits put `A` far below the
//! smallest double (a Weibull shape of 50 on distances near 1000 gives
//! `ln A` around -345).
//!
//! Fits use the sorted distances between the window bounds `[a, b]` (order
//! statistics `floor(a_frac N)` and `floor(q_frac N)`). The objective is the
//! likelihood of the in-window values together with the counts that fall
//! below `a` and above `b`:
//!
//! ```text
//! -sum_i ln f(d_i) - k_below ln F(a) - k_above ln S(b)
//! ```
//!
//! Conditioning only on the values inside `[a, b]` leaves the overall level
//! of `F` weakly identified on short windows (the optimum can drift towards
//! `A -> 0` with a steeper shape), while the scorer needs `F` itself to be
//! right in absolute terms. The counts pin that level. The purely truncated
//! negative log-likelihood `-sum ln f(d_i) + m ln(F(b) - F(a))` is still
//! reported in [`TailFit::nll`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PrivetError, Result};
use crate::knn::NNDistanceSet;
use crate::optim::{self, Local};

pub const MIN_WINDOW_POINTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Weibull,
    Gumbel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailWindow {
    pub a_frac: f64,
    pub q_frac: f64,
}

impl Default for TailWindow {
    fn default() -> Self {
        TailWindow {
            a_frac: 0.01,
            q_frac: 0.20,
        }
    }
}

/// A window applied to a concrete sorted sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedWindow {
    pub lower: f64,
    pub upper: f64,
    /// Sample size the window was resolved on.
    pub n: usize,
    /// Points with `lower <= d <= upper` and `d > 0`.
    pub m: usize,
    /// Points strictly below `lower` (only when `lower > 0`).
    pub below: usize,
    /// Points strictly above `upper`.
    pub above: usize,
    /// Zero distances dropped because the window starts at 0.
    pub zeros: usize,
    /// Index range of the in-window points in the sorted sample.
    pub start: usize,
    pub end: usize,
}

impl TailWindow {
    pub fn new(a_frac: f64, q_frac: f64) -> Result<TailWindow> {
        let w = TailWindow { a_frac, q_frac };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_frac >= 0.0 && self.a_frac < self.q_frac && self.q_frac <= 1.0) {
            return invalid(format!(
                "window needs 0 <= a_frac < q_frac <= 1, got ({}, {})",
                self.a_frac, self.q_frac
            ));
        }
        Ok(())
    }

    /// Bounds and counts on an ascending sample.
    pub fn resolve(&self, sorted: &[f64]) -> Result<ResolvedWindow> {
        self.validate()?;
        let n = sorted.len();
        if n == 0 {
            return Err(PrivetError::WindowTooSmall {
                m: 0,
                min: MIN_WINDOW_POINTS,
            });
        }
        let ka = (self.a_frac * n as f64).floor() as usize;
        let kq = ((self.q_frac * n as f64).floor() as usize).clamp(1, n);
        // Values on a real line (simulated Gumbel minima) may be negative;
        // a zero lower bound only arises for distances.
        let lower = if ka == 0 { sorted[0].min(0.0) } else { sorted[ka - 1] };
        let upper = sorted[kq - 1];
        if !(lower < upper) {
            return Err(PrivetError::Degenerate(format!(
                "window bounds coincide at {lower}"
            )));
        }
        let start = if lower != 0.0 {
            sorted.partition_point(|&d| d < lower)
        } else {
            sorted.partition_point(|&d| d <= 0.0)
        };
        let end = sorted.partition_point(|&d| d <= upper);
        let (below, zeros) = if lower != 0.0 { (start, 0) } else { (0, start) };
        Ok(ResolvedWindow {
            lower,
            upper,
            n,
            m: end - start,
            below,
            above: n - end,
            zeros,
            start,
            end,
        })
    }
}

/// A fitted tail law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub family: Family,
    /// Natural log of the scale parameter `A`.
    pub ln_a: f64,
    /// `alpha` for Weibull, `B` for Gumbel.
    pub shape: f64,
    pub window: TailWindow,
    pub lower: f64,
    pub upper: f64,
    /// Integer-valued window: each distance `d` was fitted as the cell
    /// `(d - 1, d]`, so `F(d)` is `P(D <= d)`.
    #[serde(default)]
    pub discrete: bool,
    /// Size of the reference set the distances were measured against.
    pub n_reference: usize,
    /// Distances in the fitted sample.
    pub n_sample: usize,
    /// Points inside the window.
    pub m: usize,
    /// Truncated negative log-likelihood of the window values.
    pub nll: f64,
    /// Objective actually minimized (window values plus outside counts).
    pub nll_censored: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

#[inline]
fn ln_f_from_ln_h(ln_h: f64) -> f64 {
    if ln_h == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if ln_h < -30.0 {
        let h = ln_h.exp();
        return ln_h - 0.5 * h;
    }
    let h = ln_h.exp();
    if h <= std::f64::consts::LN_2 {
        (-(-h).exp_m1()).ln()
    } else {
        (-(-h).exp()).ln_1p()
    }
}

impl TailFit {
    /// Fit from explicit parameters, for callers that already know the law.
    pub fn from_params(family: Family, ln_a: f64, shape: f64, n_reference: usize) -> Result<TailFit> {
        if !ln_a.is_finite() || !(shape > 0.0 && shape.is_finite()) {
            return invalid(format!("bad tail parameters ln_a={ln_a} shape={shape}"));
        }
        Ok(TailFit {
            family,
            ln_a,
            shape,
            window: TailWindow::default(),
            lower: 0.0,
            upper: f64::INFINITY,
            discrete: false,
            n_reference,
            n_sample: 0,
            m: 0,
            nll: f64::NAN,
            nll_censored: f64::NAN,
            grad_norm: 0.0,
            iterations: 0,
        })
    }

    pub fn a_hat(&self) -> f64 {
        self.ln_a.exp()
    }

    /// `ln H(u)`.
    #[inline]
    pub fn ln_hazard(&self, u: f64) -> f64 {
        match self.family {
            Family::Weibull => {
                if u <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    self.ln_a + self.shape * u.ln()
                }
            }
            Family::Gumbel => self.ln_a + self.shape * u,
        }
    }

    /// `F(u)` clamped to `[0, 1]`.
    pub fn cdf(&self, u: f64) -> f64 {
        let h = self.ln_hazard(u).exp();
        (-(-h).exp_m1()).clamp(0.0, 1.0)
    }

    /// `ln F(u)`, finite as long as `H(u)` is representable in log form.
    #[inline]
    pub fn ln_cdf(&self, u: f64) -> f64 {
        ln_f_from_ln_h(self.ln_hazard(u))
    }

    /// `ln(1 - F(u)) = -H(u)`.
    #[inline]
    pub fn ln_sf(&self, u: f64) -> f64 {
        -self.ln_hazard(u).exp()
    }

    /// `ln f(u)`.
    pub fn ln_density(&self, u: f64) -> f64 {
        let lh = self.ln_hazard(u);
        match self.family {
            Family::Weibull => {
                if u <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                lh + self.shape.ln() - u.ln() - lh.exp()
            }
            Family::Gumbel => lh + self.shape.ln() - lh.exp(),
        }
    }

    pub fn density(&self, u: f64) -> f64 {
        self.ln_density(u).exp()
    }

    /// Inverse of [`TailFit::cdf`] for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return invalid(format!("quantile needs 0 < p < 1, got {p}"));
        }
        Ok(self.u_from_ln_h((-(-p).ln_1p()).ln()))
    }

    fn u_from_ln_h(&self, ln_h: f64) -> f64 {
        match self.family {
            Family::Weibull => ((ln_h - self.ln_a) / self.shape).exp(),
            Family::Gumbel => (ln_h - self.ln_a) / self.shape,
        }
    }

    /// Inverse-transform draw from the law truncated to `[lo, hi]`, given a
    /// uniform `v` in `[0, 1]`.
    pub fn truncated_quantile(&self, lo: f64, hi: f64, v: f64) -> f64 {
        let fl = self.cdf(lo);
        let fh = self.cdf(hi);
        let u = if fl < 0.5 {
            let ft = fl + v * (fh - fl);
            self.u_from_ln_h((-(-ft).ln_1p()).ln())
        } else {
            let sl = (self.ln_sf(lo)).exp();
            let sh = (self.ln_sf(hi)).exp();
            let st = sl - v * (sl - sh);
            self.u_from_ln_h((-st.ln()).ln())
        };
        u.clamp(lo, hi)
    }

    /// Probability transform under the law truncated to `[lo, hi]`.
    pub fn truncated_cdf(&self, lo: f64, hi: f64, u: f64) -> f64 {
        let fl = self.cdf(lo);
        let fh = self.cdf(hi);
        let v = if fl < 0.5 {
            (self.cdf(u) - fl) / (fh - fl)
        } else {
            let sl = self.ln_sf(lo).exp();
            let sh = self.ln_sf(hi).exp();
            (sl - self.ln_sf(u).exp()) / (sl - sh)
        };
        v.clamp(0.0, 1.0)
    }

    /// Same law, moved to a reference set of size `n_target`: the expected
    /// number of reference points within distance `u` scales with the set
    /// size, so `A` scales by `n_target / n_reference`.
    pub fn rescale(&self, n_target: usize) -> TailFit {
        assert!(n_target >= 1 && self.n_reference >= 1);
        let mut f = self.clone();
        f.ln_a += (n_target as f64 / self.n_reference as f64).ln();
        f.n_reference = n_target;
        f
    }

    /// Factor by which distances measured against `n_target` reference points
    /// are divided to be read on this (Weibull) fit directly.
    pub fn distance_rescale_factor(&self, n_target: usize) -> f64 {
        match self.family {
            Family::Weibull => {
                (self.n_reference as f64 / n_target as f64).powf(1.0 / self.shape)
            }
            Family::Gumbel => f64::NAN,
        }
    }
}

pub fn rescale_fit(fit: &TailFit, n_target: usize) -> TailFit {
    fit.rescale(n_target)
}

pub fn tail_cdf(fit: &TailFit, u: f64) -> f64 {
    fit.cdf(u)
}

pub fn tail_quantile(fit: &TailFit, p: f64) -> Result<f64> {
    fit.quantile(p)
}

/// Whether a window holds only integer values (Hamming counts).
pub fn is_lattice(points: &[f64], lower: f64, upper: f64) -> bool {
    lower >= 0.0 && lower.fract() == 0.0 && upper.fract() == 0.0 && points.iter().all(|d| d.fract() == 0.0)
}

/// Left end of the lattice cell below `lower`: `lower - 1`, or 0 when zeros
/// were excluded.
pub fn lattice_floor(lower: f64) -> f64 {
    if lower == 0.0 {
        0.0
    } else {
        lower - 1.0
    }
}

fn ln_point(fit: &TailFit, d: f64) -> f64 {
    if fit.discrete {
        window_ln_mass(fit, d - 1.0, d)
    } else {
        fit.ln_density(d)
    }
}

/// Truncated negative log-likelihood of the values of `sorted` inside
/// `[lower, upper]`, evaluated directly in distance units.
pub fn truncated_nll(fit: &TailFit, sorted: &[f64], w: &ResolvedWindow) -> f64 {
    let pts = &sorted[w.start..w.end];
    let lo = if fit.discrete { lattice_floor(w.lower) } else { w.lower };
    let ln_mass = window_ln_mass(fit, lo, w.upper);
    -pts.iter().map(|&d| ln_point(fit, d)).sum::<f64>() + w.m as f64 * ln_mass
}

/// Objective minimized by the fit, in distance units.
pub fn censored_nll(fit: &TailFit, sorted: &[f64], w: &ResolvedWindow) -> f64 {
    let pts = &sorted[w.start..w.end];
    let mut s = -pts.iter().map(|&d| ln_point(fit, d)).sum::<f64>();
    if let Some(b) = below_bound(fit.family, fit.discrete, w) {
        s -= w.below as f64 * fit.ln_cdf(b);
    }
    if w.above > 0 {
        s -= w.above as f64 * fit.ln_sf(w.upper);
    }
    s
}

/// Point at which the count below the window is censored. On a lattice
/// that is `lower - 1`; a Weibull law puts no mass there when it reaches 0,
/// and those values (duplicates) are left out like zeros.
fn below_bound(family: Family, discrete: bool, w: &ResolvedWindow) -> Option<f64> {
    if w.below == 0 {
        return None;
    }
    if !discrete {
        return Some(w.lower);
    }
    let b = w.lower - 1.0;
    (family == Family::Gumbel || b > 0.0).then_some(b)
}

/// `ln(F(upper) - F(lower))`.
fn window_ln_mass(fit: &TailFit, lower: f64, upper: f64) -> f64 {
    let hl = fit.ln_hazard(lower).exp();
    let hu = fit.ln_hazard(upper).exp();
    if hu - hl <= 0.0 {
        return f64::NEG_INFINITY;
    }
    // S(lower) - S(upper) = exp(-hl) (1 - exp(-(hu - hl)))
    let d = hu - hl;
    let tail = if d <= std::f64::consts::LN_2 {
        (-(-d).exp_m1()).ln()
    } else {
        (-(-d).exp()).ln_1p()
    };
    -hl + tail
}

/// Window data in normalized coordinates: `H = exp(lambda + s * v)` with
/// `v = ln(u / scale)` (Weibull) or `v = (u - center) / scale` (Gumbel).
struct Prepared {
    v: Vec<f64>,
    /// Lattice cells `(a, b]` as `(v_a, v_b, count)`; `v_a = None` when the
    /// cell starts where `H = 0`.
    cells: Option<Vec<(Option<f64>, f64, f64)>>,
    v_lo: Option<f64>,
    v_hi: Option<f64>,
    k_lo: f64,
    k_hi: f64,
    center: f64,
    scale: f64,
}

impl Prepared {
    fn new(family: Family, sorted: &[f64], w: &ResolvedWindow) -> Result<Prepared> {
        let pts = &sorted[w.start..w.end];
        if family == Family::Weibull && (pts[0] <= 0.0 || w.lower < 0.0) {
            return Err(PrivetError::Degenerate("Weibull tail needs positive values".into()));
        }
        let med = pts[pts.len() / 2];
        let (center, scale) = match family {
            Family::Weibull => (0.0, med),
            Family::Gumbel => {
                let mean = pts.iter().sum::<f64>() / pts.len() as f64;
                let var = pts.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / pts.len() as f64;
                (med, var.sqrt())
            }
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(PrivetError::Degenerate("window values have no spread".into()));
        }
        let tr = |u: f64| match family {
            Family::Weibull => (u / scale).ln(),
            Family::Gumbel => (u - center) / scale,
        };
        let discrete = is_lattice(pts, w.lower, w.upper);
        let cells = discrete.then(|| {
            let mut c: Vec<(Option<f64>, f64, f64)> = Vec::new();
            for (i, &d) in pts.iter().enumerate() {
                if i > 0 && pts[i - 1] == d {
                    c.last_mut().expect("previous cell").2 += 1.0;
                    continue;
                }
                let a = d - 1.0;
                let va = (family == Family::Gumbel || a > 0.0).then(|| tr(a));
                c.push((va, tr(d), 1.0));
            }
            c
        });
        let below = below_bound(family, discrete, w);
        Ok(Prepared {
            v: pts.iter().map(|&d| tr(d)).collect(),
            cells,
            v_lo: below.map(tr),
            v_hi: (w.above > 0).then(|| tr(w.upper)),
            k_lo: if below.is_some() { w.below as f64 } else { 0.0 },
            k_hi: w.above as f64,
            center,
            scale,
        })
    }

    /// Censored objective up to parameter-free constants.
    fn value(&self, x: [f64; 2]) -> f64 {
        let (lam, kap) = (x[0], x[1]);
        let s = kap.exp();
        let mut f = 0.0;
        if let Some(cells) = &self.cells {
            for &(va, vb, c) in cells {
                let ha = va.map_or(0.0, |v| (lam + s * v).exp());
                let dh = (lam + s * vb).exp() - ha;
                if !(dh > 0.0) {
                    return f64::INFINITY;
                }
                f -= c * (-ha + (-(-dh).exp_m1()).ln());
            }
        } else {
            for &v in &self.v {
                let t = lam + s * v;
                f -= t + kap - t.exp();
            }
        }
        if let Some(vl) = self.v_lo {
            f -= self.k_lo * ln_f_from_ln_h(lam + s * vl);
        }
        if let Some(vh) = self.v_hi {
            f += self.k_hi * (lam + s * vh).exp();
        }
        f
    }

    fn local(&self, x: [f64; 2]) -> Local {
        let (lam, kap) = (x[0], x[1]);
        let s = kap.exp();
        let m = self.v.len() as f64;
        let (mut f, mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        if let Some(cells) = &self.cells {
            // Cell term -c [-H_a + ln(1 - exp(-(H_b - H_a)))], with
            // dH/dlam = H, dH/dkap = H w, w = s v.
            let grads = |v: Option<f64>| -> (f64, [f64; 2], [f64; 3]) {
                match v {
                    None => (0.0, [0.0; 2], [0.0; 3]),
                    Some(v) => {
                        let w = s * v;
                        let h = (lam + w).exp();
                        (h, [h, h * w], [h, h * w, h * (w * w + w)])
                    }
                }
            };
            for &(va, vb, c) in cells {
                let (ha, ga, qa) = grads(va);
                let (hb, gb, qb) = grads(Some(vb));
                let dh = hb - ha;
                let em = dh.exp_m1();
                let (r, rp) = if dh > 700.0 { (0.0, 0.0) } else { (1.0 / em, -dh.exp() / (em * em)) };
                let gd = [gb[0] - ga[0], gb[1] - ga[1]];
                f -= c * (-ha + (-(-dh).exp_m1()).ln());
                g0 -= c * (-ga[0] + r * gd[0]);
                g1 -= c * (-ga[1] + r * gd[1]);
                h00 -= c * (-qa[0] + r * (qb[0] - qa[0]) + rp * gd[0] * gd[0]);
                h01 -= c * (-qa[1] + r * (qb[1] - qa[1]) + rp * gd[0] * gd[1]);
                h11 -= c * (-qa[2] + r * (qb[2] - qa[2]) + rp * gd[1] * gd[1]);
            }
        } else {
            let mut sum_w = 0.0;
            for &v in &self.v {
                let w = s * v;
                let t = lam + w;
                let h = t.exp();
                f -= t + kap - h;
                sum_w += w;
                g0 += h;
                g1 += h * w;
                h00 += h;
                h01 += h * w;
                h11 += h * w * w + h * w;
            }
            g0 -= m;
            g1 -= m + sum_w;
            h11 -= sum_w;
        }
        if let Some(vl) = self.v_lo {
            // -k ln F(H): phi'(H) = -1/expm1(H), phi''(H) = e^H / expm1(H)^2
            let w = s * vl;
            let lh = lam + w;
            let h = lh.exp();
            let em = h.exp_m1();
            f -= self.k_lo * ln_f_from_ln_h(lh);
            // d1 = H phi'(H), d2 = H^2 phi''(H)
            let (d1, d2) = if h < 1e-8 {
                (-(1.0 - 0.5 * h), 1.0)
            } else if h > 700.0 {
                (0.0, 0.0)
            } else {
                (-h / em, h * h * h.exp() / (em * em))
            };
            let k = self.k_lo;
            g0 += k * d1;
            g1 += k * d1 * w;
            h00 += k * (d2 + d1);
            h01 += k * (d2 * w + d1 * w);
            h11 += k * (d2 * w * w + d1 * (w * w + w));
        }
        if let Some(vh) = self.v_hi {
            let w = s * vh;
            let h = (lam + w).exp();
            let k = self.k_hi;
            f += k * h;
            g0 += k * h;
            g1 += k * h * w;
            h00 += k * h;
            h01 += k * h * w;
            h11 += k * (h * w * w + h * w);
        }
        Local {
            f,
            g: [g0, g1],
            h: [[h00, h01], [h01, h11]],
        }
    }

    /// Least-squares line through `ln(-ln(1 - k/(n+1)))` against `v`, using
    /// each window point's rank `k` in the full sample.
    fn regression_start(&self, w: &ResolvedWindow) -> (f64, f64) {
        let n = w.n as f64;
        let pts: Vec<(f64, f64)> = self
            .v
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let k = (w.start + i + 1) as f64;
                (v, (-(-k / (n + 1.0)).ln_1p()).ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let mut slope = sxy / sxx;
        if !(slope > 0.0 && slope.is_finite()) {
            slope = 1.0;
        }
        (slope, my - slope * mx)
    }
}

/// Fit one family on an ascending sample.
pub fn fit_family(
    sorted: &[f64],
    window: &TailWindow,
    family: Family,
    n_reference: usize,
) -> Result<TailFit> {
    let w = window.resolve(sorted)?;
    fit_family_resolved(sorted, window, &w, family, n_reference)
}

/// Fit one family to censored data given directly: ascending in-window
/// values in `[lower, upper]` plus the counts that fell below `lower` and
/// above `upper`.
#[allow(clippy::too_many_arguments)]
pub fn fit_censored(
    family: Family,
    window: &TailWindow,
    points: &[f64],
    lower: f64,
    upper: f64,
    below: usize,
    above: usize,
    n_reference: usize,
) -> Result<TailFit> {
    if !(lower < upper) || points.iter().any(|&d| d < lower || d > upper || d <= 0.0) {
        return invalid("censored fit needs positive points inside [lower, upper]");
    }
    let w = ResolvedWindow {
        lower,
        upper,
        n: points.len() + below + above,
        m: points.len(),
        below: if lower > 0.0 { below } else { 0 },
        above,
        zeros: 0,
        start: 0,
        end: points.len(),
    };
    fit_family_resolved(points, window, &w, family, n_reference)
}

fn fit_family_resolved(
    sorted: &[f64],
    window: &TailWindow,
    w: &ResolvedWindow,
    family: Family,
    n_reference: usize,
) -> Result<TailFit> {
    if w.m < MIN_WINDOW_POINTS {
        return Err(PrivetError::WindowTooSmall {
            m: w.m,
            min: MIN_WINDOW_POINTS,
        });
    }
    let prep = Prepared::new(family, sorted, w)?;
    let (slope, icpt) = prep.regression_start(w);
    let (mx, my) = {
        let mx = prep.v.iter().sum::<f64>() / prep.v.len() as f64;
        (mx, icpt + slope * mx)
    };
    let obj = |x: [f64; 2]| prep.value(x);
    let mut best: Option<([f64; 2], f64)> = None;
    for mult in [1.0, 0.7, 1.4] {
        let s = slope * mult;
        let x0 = [my - s * mx, s.ln()];
        let (x, fx) = optim::nelder_mead(&obj, x0, [0.5, 0.2], 600, 1e-12);
        if fx.is_finite() && best.is_none_or(|b| fx < b.1) {
            best = Some((x, fx));
        }
    }
    let (x0, _) = best.ok_or_else(|| {
        PrivetError::NoConvergence(format!("{family:?}: no finite objective from any start"))
    })?;
    let out = optim::newton(&|x| prep.local(x), x0, 200, 1e-8, 1e-10);
    if !out.converged || !out.f.is_finite() {
        return Err(PrivetError::NoConvergence(format!(
            "{family:?}: gradient norm {:.3e} after {} Newton steps",
            out.grad_norm, out.iterations
        )));
    }
    let (lam, kap) = (out.x[0], out.x[1]);
    let s = kap.exp();
    let (ln_a, shape) = match family {
        Family::Weibull => (lam - s * prep.scale.ln(), s),
        Family::Gumbel => (lam - s * prep.center / prep.scale, s / prep.scale),
    };
    if !ln_a.is_finite() || !(shape > 0.0 && shape.is_finite()) {
        return Err(PrivetError::Numerical(format!(
            "{family:?}: non-finite parameters ln_a={ln_a} shape={shape}"
        )));
    }
    let mut fit = TailFit {
        family,
        ln_a,
        shape,
        window: *window,
        lower: w.lower,
        upper: w.upper,
        discrete: prep.cells.is_some(),
        n_reference,
        n_sample: w.n,
        m: w.m,
        nll: 0.0,
        nll_censored: 0.0,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
    };
    fit.nll = truncated_nll(&fit, sorted, w);
    fit.nll_censored = censored_nll(&fit, sorted, w);
    if !fit.nll.is_finite() {
        return Err(PrivetError::Numerical(format!(
            "{family:?}: non-finite likelihood at the optimum"
        )));
    }
    Ok(fit)
}

/// Both fitted families; the selected one first.
pub fn fit_both(distances: &NNDistanceSet, window: &TailWindow) -> Result<(TailFit, Option<TailFit>)> {
    let sorted = &distances.distances;
    let w = window.resolve(sorted)?;
    let n_ref = distances.effective_reference();
    let wb = fit_family_resolved(sorted, window, &w, Family::Weibull, n_ref);
    let gb = fit_family_resolved(sorted, window, &w, Family::Gumbel, n_ref);
    match (wb, gb) {
        (Ok(a), Ok(b)) => {
            if a.nll_censored <= b.nll_censored {
                Ok((a, Some(b)))
            } else {
                Ok((b, Some(a)))
            }
        }
        (Ok(a), Err(_)) => Ok((a, None)),
        (Err(_), Ok(b)) => Ok((b, None)),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Fit both families and keep the more likely one.
pub fn fit_tail(distances: &NNDistanceSet, window: &TailWindow) -> Result<TailFit> {
    fit_both(distances, window).map(|p| p.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weib(a: f64, alpha: f64) -> TailFit {
        TailFit::from_params(Family::Weibull, a.ln(), alpha, 100).unwrap()
    }

    #[test]
    fn closed_forms() {
        let f = weib(1.0, 2.0);
        assert_eq!(f.cdf(0.0), 0.0);
        assert!((f.cdf(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let u = f.quantile(1.0 - (-1.0f64).exp()).unwrap();
        assert!((u - 1.0).abs() < 1e-14);
        assert!(f.quantile(0.0).is_err());
        assert!(f.quantile(1.0).is_err());
    }

    #[test]
    fn log_cdf_deep_tail_is_finite() {
        let f = weib(1.0, 2.0);
        // F(u) ~ u^2 = 1e-300
        let l = f.ln_cdf(1e-150);
        assert!(l.is_finite());
        assert!((l - (-300.0 * std::f64::consts::LN_10)).abs() < 1e-9);
    }

    #[test]
    fn rescale_round_trip() {
        let f = weib(0.3, 25.0);
        let g = f.rescale(200).rescale(100);
        assert!((g.ln_a - f.ln_a).abs() < 1e-12);
        let h = weib(1.0, 25.0);
        let h = TailFit {
            n_reference: 500,
            ..h
        };
        assert!((h.distance_rescale_factor(100) - 5f64.powf(1.0 / 25.0)).abs() < 1e-15);
    }

    #[test]
    fn window_resolution() {
        let d: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let w = TailWindow::default().resolve(&d).unwrap();
        assert_eq!(w.lower, 0.0);
        assert_eq!(w.upper, 19.0);
        assert_eq!(w.zeros, 1);
        assert_eq!(w.m, 19);
        assert_eq!(w.above, 80);
        let w = TailWindow::new(0.05, 0.5).unwrap().resolve(&d).unwrap();
        assert_eq!((w.lower, w.upper, w.below, w.m, w.above), (4.0, 49.0, 4, 46, 50));
        assert!(TailWindow::new(0.3, 0.2).is_err());
    }

    #[test]
    fn tiny_window_errors() {
        let d: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let s = NNDistanceSet::from_values(&d, 30);
        assert!(matches!(
            fit_tail(&s, &TailWindow::default()),
            Err(PrivetError::WindowTooSmall { m: 6, .. })
        ));
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let d: Vec<f64> = (1..=400).map(|i| (i as f64 / 401.0).powf(0.2)).collect();
        let w = TailWindow::new(0.05, 0.3).unwrap().resolve(&d).unwrap();
        for fam in [Family::Weibull, Family::Gumbel] {
            let p = Prepared::new(fam, &d, &w).unwrap();
            let x = [-0.7, 0.9];
            let l = p.local(x);
            let h = 1e-6;
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let gd = (p.value(xp) - p.value(xm)) / (2.0 * h);
                assert!((gd - l.g[k]).abs() < 1e-5 * (1.0 + gd.abs()), "{fam:?} g{k}");
                let lp = p.local(xp);
                let lm = p.local(xm);
                for j in 0..2 {
                    let hd = (lp.g[j] - lm.g[j]) / (2.0 * h);
                    assert!((hd - l.h[k][j]).abs() < 1e-4 * (1.0 + hd.abs()), "{fam:?} h{k}{j}");
                }
                assert!((l.f - p.value(x)).abs() < 1e-9 * (1.0 + l.f.abs()));
            }
        }
    }
}
