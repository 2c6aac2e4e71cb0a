//! Exact 1-nearest-neighbor distances.
//!
//! Hamming distances run on the packed words with XOR + popcount, a small
//! block of query rows sharing each reference row while it sits in L1, and
//! an early exit once a partial count can no longer beat the current best.
//!
//! Euclidean distances use the expansion `|x|^2 + |y|^2 - 2<x,y>` computed
//! tile by tile with single-precision GEMM. That value is only a filter: every
//! reference row whose approximate squared distance lies within a rigorous
//! rounding bound of the best one is kept as a candidate and its distance is
//! recomputed directly in double precision. The reported distance is therefore
//! exactly what a naive double loop over `sum (x_k - y_k)^2` returns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_compatible, DataMatrix, Dtype};
use crate::error::{invalid, PrivetError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Hamming,
    Euclidean,
}

impl Metric {
    pub fn dtype(self) -> Dtype {
        match self {
            Metric::Hamming => Dtype::Binary,
            Metric::Euclidean => Dtype::Float64,
        }
    }

    pub fn for_dtype(d: Dtype) -> Metric {
        match d {
            Dtype::Binary => Metric::Hamming,
            Dtype::Float64 => Metric::Euclidean,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Hamming => "hamming",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = PrivetError;
    fn from_str(s: &str) -> Result<Metric> {
        match s.to_ascii_lowercase().as_str() {
            "hamming" => Ok(Metric::Hamming),
            "euclidean" => Ok(Metric::Euclidean),
            _ => invalid(format!("unknown metric {s:?} (hamming|euclidean)")),
        }
    }
}

/// Nearest reference row of one query row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist: f64,
}

/// Sorted 1-NN distances of a query set against a reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NNDistanceSet {
    /// Ascending distances; position is the 0-based rank.
    pub distances: Vec<f64>,
    /// `permutation[k]` is the query row holding rank `k`.
    pub permutation: Vec<usize>,
    pub query_label: String,
    pub reference_label: String,
    pub exclude_self: bool,
    pub n_query: usize,
    pub n_reference: usize,
}

impl NNDistanceSet {
    /// Sort per-row distances, ties broken by row index.
    pub fn from_row_distances(
        row_dist: &[f64],
        query_label: &str,
        reference_label: &str,
        exclude_self: bool,
        n_reference: usize,
    ) -> NNDistanceSet {
        let mut perm: Vec<usize> = (0..row_dist.len()).collect();
        perm.sort_by(|&a, &b| row_dist[a].total_cmp(&row_dist[b]).then(a.cmp(&b)));
        NNDistanceSet {
            distances: perm.iter().map(|&i| row_dist[i]).collect(),
            permutation: perm,
            query_label: query_label.to_string(),
            reference_label: reference_label.to_string(),
            exclude_self,
            n_query: row_dist.len(),
            n_reference,
        }
    }

    /// Bare sorted sample with identity provenance, mostly for tests and fits
    /// on simulated values.
    pub fn from_values(values: &[f64], n_reference: usize) -> NNDistanceSet {
        Self::from_row_distances(values, "query", "reference", false, n_reference)
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    /// Reference points a query actually competes against: one fewer when
    /// the query's own row is excluded.
    pub fn effective_reference(&self) -> usize {
        self.n_reference - usize::from(self.exclude_self)
    }

    /// 0-based rank of every query row.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.permutation.len()];
        for (k, &i) in self.permutation.iter().enumerate() {
            r[i] = k;
        }
        r
    }

    /// Distances indexed by query row.
    pub fn row_distances(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.permutation.len()];
        for (k, &i) in self.permutation.iter().enumerate() {
            d[i] = self.distances[k];
        }
        d
    }
}

fn same_matrix(a: &DataMatrix, b: &DataMatrix) -> bool {
    std::ptr::eq(a, b) || a == b
}

fn validate(
    query: &DataMatrix,
    reference: &DataMatrix,
    metric: Metric,
    exclude_self: bool,
) -> Result<()> {
    check_compatible(query, reference)?;
    if query.dtype() != metric.dtype() {
        return invalid(format!(
            "{} metric needs {:?} data, got {:?}",
            metric.name(),
            metric.dtype(),
            query.dtype()
        ));
    }
    if exclude_self {
        if !same_matrix(query, reference) {
            return invalid("exclude_self requires query and reference to be the same set");
        }
        if reference.n_rows() < 2 {
            return invalid("exclude_self needs at least two rows");
        }
    }
    Ok(())
}

/// Nearest reference row for every query row, in query order. Among equally
/// close reference rows the smallest index is returned.
pub fn nearest(
    query: &DataMatrix,
    reference: &DataMatrix,
    metric: Metric,
    exclude_self: bool,
) -> Result<Vec<Neighbor>> {
    validate(query, reference, metric, exclude_self)?;
    Ok(match metric {
        Metric::Hamming => hamming_nearest(query, reference, exclude_self),
        Metric::Euclidean => euclidean_nearest(query, reference, exclude_self),
    })
}

pub fn nn_distances(
    query: &DataMatrix,
    reference: &DataMatrix,
    metric: Metric,
    exclude_self: bool,
) -> Result<NNDistanceSet> {
    nn_distances_labeled(query, reference, metric, exclude_self, "query", "reference")
}

pub fn nn_distances_labeled(
    query: &DataMatrix,
    reference: &DataMatrix,
    metric: Metric,
    exclude_self: bool,
    query_label: &str,
    reference_label: &str,
) -> Result<NNDistanceSet> {
    let nb = nearest(query, reference, metric, exclude_self)?;
    let d: Vec<f64> = nb.iter().map(|n| n.dist).collect();
    Ok(NNDistanceSet::from_row_distances(
        &d,
        query_label,
        reference_label,
        exclude_self,
        reference.n_rows(),
    ))
}

/// Within-set 1-NN distances, each row's own zero excluded.
pub fn pairwise_min_profile(set: &DataMatrix, metric: Metric) -> Result<NNDistanceSet> {
    nn_distances_labeled(set, set, metric, true, "set", "set")
}

/// Direct distance between two rows of possibly different matrices.
pub fn row_distance(a: &DataMatrix, i: usize, b: &DataMatrix, j: usize, metric: Metric) -> f64 {
    match metric {
        Metric::Hamming => a
            .row_words(i)
            .iter()
            .zip(b.row_words(j))
            .map(|(x, y)| (x ^ y).count_ones())
            .sum::<u32>() as f64,
        Metric::Euclidean => sq_dist(a.row_f64(i), b.row_f64(j)).sqrt(),
    }
}

// ---------------------------------------------------------------- Hamming

const HAMMING_QUERY_BLOCK: usize = 8;
const HAMMING_CHUNK: usize = 16;

#[inline(always)]
fn popcount_bounded(a: &[u64], b: &[u64], bound: u32) -> u32 {
    let mut acc = 0u32;
    for (ca, cb) in a.chunks(HAMMING_CHUNK).zip(b.chunks(HAMMING_CHUNK)) {
        for (x, y) in ca.iter().zip(cb) {
            acc += (x ^ y).count_ones();
        }
        if acc >= bound {
            return acc;
        }
    }
    acc
}

#[inline(always)]
fn hamming_block_generic(
    query: &DataMatrix,
    reference: &DataMatrix,
    q0: usize,
    out: &mut [(u32, usize)],
    exclude_self: bool,
) {
    let qrows: Vec<&[u64]> = (0..out.len()).map(|k| query.row_words(q0 + k)).collect();
    for j in 0..reference.n_rows() {
        let r = reference.row_words(j);
        for (k, q) in qrows.iter().enumerate() {
            if exclude_self && q0 + k == j {
                continue;
            }
            let best = &mut out[k];
            let d = popcount_bounded(q, r, best.0);
            if d < best.0 {
                *best = (d, j);
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn hamming_block_popcnt(
    query: &DataMatrix,
    reference: &DataMatrix,
    q0: usize,
    out: &mut [(u32, usize)],
    exclude_self: bool,
) {
    hamming_block_generic(query, reference, q0, out, exclude_self)
}

fn hamming_block(
    query: &DataMatrix,
    reference: &DataMatrix,
    q0: usize,
    out: &mut [(u32, usize)],
    exclude_self: bool,
) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("popcnt") {
            // SAFETY: the CPU supports popcnt, checked just above.
            unsafe { hamming_block_popcnt(query, reference, q0, out, exclude_self) };
            return;
        }
    }
    hamming_block_generic(query, reference, q0, out, exclude_self)
}

fn hamming_nearest(query: &DataMatrix, reference: &DataMatrix, exclude_self: bool) -> Vec<Neighbor> {
    let mut best = vec![(u32::MAX, usize::MAX); query.n_rows()];
    best.par_chunks_mut(HAMMING_QUERY_BLOCK)
        .enumerate()
        .for_each(|(b, out)| {
            hamming_block(query, reference, b * HAMMING_QUERY_BLOCK, out, exclude_self)
        });
    best.into_iter()
        .map(|(d, j)| Neighbor {
            index: j,
            dist: d as f64,
        })
        .collect()
}

// -------------------------------------------------------------- Euclidean

const EUCLID_QUERY_BLOCK: usize = 128;
const EUCLID_REF_BLOCK: usize = 2048;
/// Above this magnitude single precision could overflow; such data takes the
/// direct double-precision path.
const F32_SAFE: f64 = 1e15;

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

fn sq_norms(v: &[f32], d: usize) -> Vec<f64> {
    v.chunks_exact(d)
        .map(|r| r.iter().map(|&x| (x as f64) * (x as f64)).sum())
        .collect()
}

fn euclidean_direct(query: &DataMatrix, reference: &DataMatrix, exclude_self: bool) -> Vec<Neighbor> {
    (0..query.n_rows())
        .into_par_iter()
        .map(|i| {
            let q = query.row_f64(i);
            let mut best = (f64::INFINITY, usize::MAX);
            for j in 0..reference.n_rows() {
                if exclude_self && i == j {
                    continue;
                }
                let d = sq_dist(q, reference.row_f64(j));
                if d < best.0 {
                    best = (d, j);
                }
            }
            Neighbor {
                index: best.1,
                dist: best.0.sqrt(),
            }
        })
        .collect()
}

fn euclidean_nearest(query: &DataMatrix, reference: &DataMatrix, exclude_self: bool) -> Vec<Neighbor> {
    let too_big = |m: &DataMatrix| m.values().iter().any(|v| v.abs() > F32_SAFE);
    if too_big(query) || too_big(reference) {
        return euclidean_direct(query, reference, exclude_self);
    }
    let d = query.n_cols();
    let qf: Vec<f32> = query.values().iter().map(|&x| x as f32).collect();
    let rf_owned;
    let rf: &[f32] = if std::ptr::eq(query, reference) || exclude_self {
        &qf
    } else {
        rf_owned = reference.values().iter().map(|&x| x as f32).collect::<Vec<f32>>();
        &rf_owned
    };
    let qn = sq_norms(&qf, d);
    let rn = if std::ptr::eq(rf.as_ptr(), qf.as_ptr()) {
        qn.clone()
    } else {
        sq_norms(rf, d)
    };
    let rn_max = rn.iter().cloned().fold(0.0, f64::max);
    // Worst-case forward error of the single-precision expansion relative to
    // the exact squared distance, per unit of |x|^2 + max|y|^2: dot product
    // accumulation (gamma_d), conversion of inputs to f32 and the final sums.
    let u = f32::EPSILON as f64 * 0.5;
    let gamma = (d as f64 + 2.0) * u / (1.0 - (d as f64 + 2.0) * u);
    let coef = 1.5 * (gamma + 8.0 * u) + 4.0 * f64::EPSILON;

    let n_ref = reference.n_rows();
    let blocks: Vec<usize> = (0..query.n_rows()).step_by(EUCLID_QUERY_BLOCK).collect();
    let per_block: Vec<Vec<Neighbor>> = blocks
        .par_iter()
        .map(|&q0| {
            let qb = EUCLID_QUERY_BLOCK.min(query.n_rows() - q0);
            let margin: Vec<f64> = (0..qb).map(|k| 2.0 * coef * (qn[q0 + k] + rn_max)).collect();
            let mut best = vec![f64::INFINITY; qb];
            let mut cand: Vec<Vec<(u32, f64)>> = vec![Vec::new(); qb];
            let mut tile = vec![0f32; qb * EUCLID_REF_BLOCK];
            let mut tile_min = vec![f64::INFINITY; qb];
            for r0 in (0..n_ref).step_by(EUCLID_REF_BLOCK) {
                let rb = EUCLID_REF_BLOCK.min(n_ref - r0);
                // SAFETY: the slices cover qb x d, rb x d and qb x rb elements
                // with the strides given.
                unsafe {
                    matrixmultiply::sgemm(
                        qb,
                        d,
                        rb,
                        1.0,
                        qf[q0 * d..].as_ptr(),
                        d as isize,
                        1,
                        rf[r0 * d..].as_ptr(),
                        1,
                        d as isize,
                        0.0,
                        tile.as_mut_ptr(),
                        rb as isize,
                        1,
                    );
                }
                for k in 0..qb {
                    let row = &tile[k * rb..(k + 1) * rb];
                    let qi = q0 + k;
                    let mut m = f64::INFINITY;
                    for (t, &g) in row.iter().enumerate() {
                        let j = r0 + t;
                        if exclude_self && j == qi {
                            continue;
                        }
                        let a = qn[qi] + rn[j] - 2.0 * g as f64;
                        if a < m {
                            m = a;
                        }
                    }
                    tile_min[k] = m;
                }
                for k in 0..qb {
                    if tile_min[k] < best[k] {
                        best[k] = tile_min[k];
                    }
                    let thr = best[k] + margin[k];
                    if tile_min[k] > thr {
                        continue;
                    }
                    let row = &tile[k * rb..(k + 1) * rb];
                    let qi = q0 + k;
                    let list = &mut cand[k];
                    for (t, &g) in row.iter().enumerate() {
                        let j = r0 + t;
                        if exclude_self && j == qi {
                            continue;
                        }
                        let a = qn[qi] + rn[j] - 2.0 * g as f64;
                        if a <= thr {
                            list.push((j as u32, a));
                        }
                    }
                    if list.len() > 64 {
                        list.retain(|&(_, a)| a <= thr);
                    }
                }
            }
            (0..qb)
                .map(|k| {
                    let qi = q0 + k;
                    let thr = best[k] + margin[k];
                    let q = query.row_f64(qi);
                    let mut out = (f64::INFINITY, usize::MAX);
                    for &(j, a) in &cand[k] {
                        if a > thr {
                            continue;
                        }
                        let j = j as usize;
                        let e = sq_dist(q, reference.row_f64(j));
                        if e < out.0 || (e == out.0 && j < out.1) {
                            out = (e, j);
                        }
                    }
                    Neighbor {
                        index: out.1,
                        dist: out.0.sqrt(),
                    }
                })
                .collect()
        })
        .collect();
    per_block.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(rows: &[&[u8]]) -> DataMatrix {
        let n = rows[0].len();
        let v: Vec<u8> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DataMatrix::from_binary(rows.len(), n, &v).unwrap()
    }

    #[test]
    fn hand_checked_hamming() {
        let q = bin(&[&[0, 0], &[1, 1]]);
        let r = bin(&[&[0, 0], &[0, 1]]);
        let s = nn_distances(&q, &r, Metric::Hamming, false).unwrap();
        assert_eq!(s.distances, vec![0.0, 1.0]);
        assert_eq!(s.permutation, vec![0, 1]);
    }

    #[test]
    fn duplicates_and_profiles() {
        let m = bin(&[&[1, 0, 1], &[1, 0, 1], &[1, 0, 1]]);
        assert_eq!(
            pairwise_min_profile(&m, Metric::Hamming).unwrap().distances,
            vec![0.0; 3]
        );
        let m = bin(&[&[1, 1, 1, 1, 1, 0], &[0, 0, 0, 0, 0, 0]]);
        assert_eq!(
            pairwise_min_profile(&m, Metric::Hamming).unwrap().distances,
            vec![5.0, 5.0]
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = bin(&[&[0, 1]]);
        let f = DataMatrix::from_f64(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(nearest(&b, &f, Metric::Hamming, false).is_err());
        assert!(nearest(&f, &f, Metric::Hamming, false).is_err());
        let b2 = bin(&[&[1, 1]]);
        assert!(nearest(&b, &b2, Metric::Hamming, true).is_err());
    }

    #[test]
    fn euclidean_small() {
        let r = DataMatrix::from_f64(3, 2, vec![0.0, 0.0, 3.0, 4.0, 10.0, 0.0]).unwrap();
        let q = DataMatrix::from_f64(1, 2, vec![3.0, 0.0]).unwrap();
        let nb = nearest(&q, &r, Metric::Euclidean, false).unwrap();
        assert_eq!(nb[0].index, 0);
        assert_eq!(nb[0].dist, 3.0);
        let p = pairwise_min_profile(&r, Metric::Euclidean).unwrap();
        assert_eq!(p.distances, vec![5.0, 5.0, 65f64.sqrt()]);
    }

    #[test]
    fn ranks_invert_permutation() {
        let s = NNDistanceSet::from_values(&[3.0, 1.0, 2.0, 1.0], 10);
        assert_eq!(s.permutation, vec![1, 3, 2, 0]);
        assert_eq!(s.ranks(), vec![3, 0, 2, 1]);
        assert_eq!(s.row_distances(), vec![3.0, 1.0, 2.0, 1.0]);
    }
}
