//! Nearest-neighbor baselines: authenticity flags and the adversarial
//! accuracy privacy loss, reimplemented from their usual definitions.

use serde::{Deserialize, Serialize};

use crate::data::{check_compatible, DataMatrix};
use crate::error::{invalid, Result};
use crate::knn::{nearest, Metric};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthenticityResult {
    /// True when the synthetic row is closer to its train neighbor than that
    /// neighbor is to the rest of the train set.
    pub flags: Vec<bool>,
    pub in_auth: usize,
}

/// `flag_s = d(s, t) < d(t, NN_train\{t}(t))` with `t` the train neighbor of
/// `s`.
pub fn authenticity_flags(train: &DataMatrix, synth: &DataMatrix, metric: Metric) -> Result<AuthenticityResult> {
    check_compatible(train, synth)?;
    if train.n_rows() < 2 {
        return invalid("authenticity needs at least two train rows");
    }
    let (tt, st) = rayon::join(
        || nearest(train, train, metric, true),
        || nearest(synth, train, metric, false),
    );
    let (tt, st) = (tt?, st?);
    let flags: Vec<bool> = st.iter().map(|n| n.dist < tt[n.index].dist).collect();
    let in_auth = flags.iter().filter(|&&f| f).count();
    Ok(AuthenticityResult { flags, in_auth })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaScore {
    /// Fraction of real rows whose synthetic neighbor is farther than their
    /// real neighbor.
    pub real_side: f64,
    pub synth_side: f64,
    pub aa: f64,
}

/// `AA(R, S) = (mean[d_RS > d_RR] + mean[d_SR > d_SS]) / 2`, strict
/// inequalities, self excluded within a set. Sizes must match.
pub fn adversarial_accuracy(real: &DataMatrix, synth: &DataMatrix, metric: Metric) -> Result<AaScore> {
    check_compatible(real, synth)?;
    if real.n_rows() != synth.n_rows() {
        return invalid(format!(
            "adversarial accuracy needs equal sizes, got {} and {}",
            real.n_rows(),
            synth.n_rows()
        ));
    }
    if real.n_rows() < 2 {
        return invalid("adversarial accuracy needs at least two rows per set");
    }
    let ((rs, rr), (sr, ss)) = rayon::join(
        || {
            rayon::join(
                || nearest(real, synth, metric, false),
                || nearest(real, real, metric, true),
            )
        },
        || {
            rayon::join(
                || nearest(synth, real, metric, false),
                || nearest(synth, synth, metric, true),
            )
        },
    );
    let frac = |a: Vec<crate::knn::Neighbor>, b: Vec<crate::knn::Neighbor>| {
        let n = a.len() as f64;
        a.iter().zip(&b).filter(|(x, y)| x.dist > y.dist).count() as f64 / n
    };
    let real_side = frac(rs?, rr?);
    let synth_side = frac(sr?, ss?);
    Ok(AaScore {
        real_side,
        synth_side,
        aa: 0.5 * (real_side + synth_side),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLoss {
    pub aa_train: AaScore,
    pub aa_test: AaScore,
    /// `AA(test, synth) - AA(train, synth)`.
    pub loss: f64,
    pub n_used: usize,
}

/// Generalization gap of the adversarial accuracy. Unequal sizes are an
/// error unless `subsample_seed` is given, in which case every set is cut to
/// the smallest size by a seeded draw.
pub fn aats_privacy_loss(
    train: &DataMatrix,
    test: &DataMatrix,
    synth: &DataMatrix,
    metric: Metric,
    subsample_seed: Option<u64>,
) -> Result<PrivacyLoss> {
    check_compatible(train, synth)?;
    check_compatible(test, synth)?;
    let n = train.n_rows().min(test.n_rows()).min(synth.n_rows());
    let equal = train.n_rows() == n && test.n_rows() == n && synth.n_rows() == n;
    let (tr, te, sy);
    let (train, test, synth) = if equal {
        (train, test, synth)
    } else {
        let Some(seed) = subsample_seed else {
            return invalid(format!(
                "privacy loss needs equal sizes ({}, {}, {}); enable subsampling",
                train.n_rows(),
                test.n_rows(),
                synth.n_rows()
            ));
        };
        let cut = |m: &DataMatrix, name: &str| {
            let mut g = rng::stream(seed, name);
            let mut idx = rng::sample_indices(&mut g, m.n_rows(), n);
            idx.sort_unstable();
            m.select_rows(&idx)
        };
        tr = cut(train, "subsample-train");
        te = cut(test, "subsample-test");
        sy = cut(synth, "subsample-synth");
        (&tr, &te, &sy)
    };
    let (a_tr, a_te) = rayon::join(
        || adversarial_accuracy(train, synth, metric),
        || adversarial_accuracy(test, synth, metric),
    );
    let (a_tr, a_te) = (a_tr?, a_te?);
    Ok(PrivacyLoss {
        loss: a_te.aa - a_tr.aa,
        aa_train: a_tr,
        aa_test: a_te,
        n_used: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(rows: &[&[u8]]) -> DataMatrix {
        let v: Vec<u8> = rows.iter().flat_map(|r| r.iter().cloned()).collect();
        DataMatrix::from_binary(rows.len(), rows[0].len(), &v).unwrap()
    }

    #[test]
    fn duplicate_is_inauthentic() {
        let train = bin(&[&[0, 0, 0, 0], &[1, 1, 1, 1], &[1, 1, 0, 0]]);
        let synth = bin(&[&[1, 1, 1, 1], &[0, 1, 0, 1]]);
        let r = authenticity_flags(&train, &synth, Metric::Hamming).unwrap();
        assert_eq!(r.flags, vec![true, false]);
        assert_eq!(r.in_auth, 1);
    }

    #[test]
    fn unequal_sizes_need_opt_in() {
        let a = bin(&[&[0, 0], &[1, 1], &[0, 1]]);
        let b = bin(&[&[0, 0], &[1, 1]]);
        assert!(aats_privacy_loss(&a, &b, &b, Metric::Hamming, None).is_err());
        assert!(aats_privacy_loss(&a, &b, &b, Metric::Hamming, Some(1)).is_ok());
    }
}
