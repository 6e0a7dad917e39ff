//! Seeded Lloyd iterations and K-means-- (clustering with `o` points left out),
//! generic over the point storage and the point-to-centroid divergence.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cor::generalized_kl;
use crate::dataset::{squared_distance, DataMatrix};
use crate::error::{Error, Result};

/// Default absolute tolerance on the objective change between iterations.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Default probability clamp for logarithms.
pub const DEFAULT_EPSILON: f64 = 1e-12;

// Below this many point-centroid evaluations per pass we stay on one thread.
const PAR_THRESHOLD: usize = 1 << 14;

/// Label of a single point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assignment {
    Cluster(usize),
    Outlier,
}

impl Assignment {
    pub fn is_outlier(self) -> bool {
        matches!(self, Assignment::Outlier)
    }

    pub fn cluster(self) -> Option<usize> {
        match self {
            Assignment::Cluster(k) => Some(k),
            Assignment::Outlier => None,
        }
    }

    /// Integer code with `-1` for outliers.
    pub fn code(self) -> i64 {
        match self {
            Assignment::Cluster(k) => k as i64,
            Assignment::Outlier => -1,
        }
    }

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            -1 => Ok(Assignment::Outlier),
            c if c >= 0 => Ok(Assignment::Cluster(c as usize)),
            c => Err(Error::invalid(format!("label {c} is neither -1 nor a cluster id"))),
        }
    }
}

/// Per-point cluster labels over `k` clusters, with outliers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct LabeledPartition {
    assignments: Vec<Assignment>,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    k: usize,
    labels: Vec<i64>,
}

impl TryFrom<PartitionRepr> for LabeledPartition {
    type Error = Error;

    fn try_from(r: PartitionRepr) -> Result<Self> {
        let assignments = r.labels.into_iter().map(Assignment::from_code).collect::<Result<_>>()?;
        LabeledPartition::new(assignments, r.k)
    }
}

impl From<LabeledPartition> for PartitionRepr {
    fn from(p: LabeledPartition) -> Self {
        PartitionRepr {
            k: p.k,
            labels: p.codes(),
        }
    }
}

impl LabeledPartition {
    pub fn new(assignments: Vec<Assignment>, k: usize) -> Result<Self> {
        if let Some(bad) = assignments.iter().filter_map(|a| a.cluster()).find(|&c| c >= k) {
            return Err(Error::invalid(format!("cluster id {bad} is not below k = {k}")));
        }
        Ok(LabeledPartition { assignments, k })
    }

    /// Reads `-1`-for-outlier integer codes; `k` is one past the largest id.
    pub fn from_codes(codes: &[i64]) -> Result<Self> {
        let assignments: Vec<Assignment> = codes.iter().map(|&c| Assignment::from_code(c)).collect::<Result<_>>()?;
        let k = assignments.iter().filter_map(|a| a.cluster()).max().map_or(0, |m| m + 1);
        Ok(LabeledPartition { assignments, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn get(&self, i: usize) -> Assignment {
        self.assignments[i]
    }

    pub fn codes(&self) -> Vec<i64> {
        self.assignments.iter().map(|a| a.code()).collect()
    }

    pub fn n_outliers(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_outlier()).count()
    }

    pub fn n_inliers(&self) -> usize {
        self.len() - self.n_outliers()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for c in self.assignments.iter().filter_map(|a| a.cluster()) {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, a)| a.cluster() == Some(cluster))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn outlier_set(&self) -> BTreeSet<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_outlier())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Read access to the points being clustered.
///
/// `dim` is the length of the centroid vectors the engine keeps, which for
/// paired encodings may be shorter than the logical point dimension.
pub trait PointSet: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    /// Adds point `i` into `acc` (length `dim`).
    fn add_point(&self, i: usize, acc: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn point(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.add_point(i, &mut v);
        v
    }
}

/// A point-to-centroid divergence.
///
/// `prepare` turns an arithmetic-mean centroid into whatever the distance
/// evaluation wants (clamped probabilities, log tables, ...).
pub trait Divergence<P: PointSet + ?Sized>: Sync {
    type Prepared: Send + Sync;

    fn prepare(&self, centroid: &[f64]) -> Self::Prepared;
    fn distance(&self, points: &P, i: usize, centroid: &Self::Prepared) -> f64;

    /// Rejects inputs the divergence is undefined on.
    fn validate(&self, _points: &P) -> Result<()> {
        Ok(())
    }
}

impl PointSet for DataMatrix {
    fn len(&self) -> usize {
        self.n_rows()
    }

    fn dim(&self) -> usize {
        self.n_cols()
    }

    fn add_point(&self, i: usize, acc: &mut [f64]) {
        for (a, v) in acc.iter_mut().zip(self.row(i)) {
            *a += v;
        }
    }
}

/// Sum of squared coordinate differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredEuclidean;

impl Divergence<DataMatrix> for SquaredEuclidean {
    type Prepared = Vec<f64>;

    fn prepare(&self, centroid: &[f64]) -> Vec<f64> {
        centroid.to_vec()
    }

    fn distance(&self, points: &DataMatrix, i: usize, centroid: &Vec<f64>) -> f64 {
        squared_distance(points.row(i), centroid)
    }
}

/// Coordinate-wise generalized KL divergence `s log(s/t) - s + t` with the
/// centroid clamped to `[epsilon, 1 - epsilon]`.
#[derive(Debug, Clone, Copy)]
pub struct GeneralizedKl {
    pub epsilon: f64,
}

impl Divergence<DataMatrix> for GeneralizedKl {
    type Prepared = Vec<f64>;

    fn prepare(&self, centroid: &[f64]) -> Vec<f64> {
        centroid
            .iter()
            .map(|&t| t.clamp(self.epsilon, 1.0 - self.epsilon))
            .collect()
    }

    fn distance(&self, points: &DataMatrix, i: usize, centroid: &Vec<f64>) -> f64 {
        // `centroid` is already clamped, so the inner clamp is a no-op.
        points
            .row(i)
            .iter()
            .zip(centroid)
            .map(|(&s, &t)| generalized_kl(s, t, self.epsilon))
            .sum()
    }

    fn validate(&self, points: &DataMatrix) -> Result<()> {
        for (pos, &v) in points.values().iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfUnitRange {
                    row: pos / points.n_cols(),
                    column: pos % points.n_cols(),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Distance selector for dense inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    SquaredEuclidean,
    GeneralizedKl { epsilon: f64 },
}

impl DistanceKind {
    pub fn generalized_kl() -> Self {
        DistanceKind::GeneralizedKl {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Iteration controls shared by every Lloyd-style fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LloydParams {
    pub k: usize,
    pub o: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl LloydParams {
    pub fn new(k: usize, o: usize, seed: u64) -> Self {
        LloydParams {
            k,
            o,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.k + self.o > n {
            return Err(Error::TooManyClusters {
                requested: self.k,
                outliers: self.o,
                points: n,
            });
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::invalid("tol must be non-negative"));
        }
        Ok(())
    }
}

/// `k` centroid vectors with their member counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    dim: usize,
    values: Vec<f64>,
    counts: Vec<usize>,
}

impl Centroids {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim.max(1)).take(self.k())
    }
}

/// Result of a Lloyd / K-means-- fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub partition: LabeledPartition,
    pub centroids: Centroids,
    /// Sum of inlier distances to their centroid, one entry per iteration,
    /// evaluated after the centroid update.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Fit {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// State handed to observers after each centroid update.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub partition: &'a LabeledPartition,
    pub centroids: &'a Centroids,
    pub objective: f64,
}

/// Plain seeded K-means with squared Euclidean distance.
pub fn kmeans(x: &DataMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Fit> {
    let params = LloydParams {
        k,
        o: 0,
        seed,
        max_iter,
        tol,
    };
    fit(x, &SquaredEuclidean, &params, |_| {})
}

/// K-means-- over a dense matrix with the selected distance.
pub fn kmeans_minus_minus(x: &DataMatrix, params: &LloydParams, distance: DistanceKind) -> Result<Fit> {
    match distance {
        DistanceKind::SquaredEuclidean => fit(x, &SquaredEuclidean, params, |_| {}),
        DistanceKind::GeneralizedKl { epsilon } => fit(x, &GeneralizedKl { epsilon }, params, |_| {}),
    }
}

/// The generic engine.
///
/// Each iteration computes every point's nearest centroid, marks the `o`
/// points with the largest such distance as outliers (ties to the lower
/// index), assigns the rest to their nearest centroid (ties to the lower
/// centroid), and replaces each centroid with the mean of its inliers.
/// A cluster left empty is reseeded at the not-yet-used inlier farthest from
/// its centroid. Iteration stops once the assignment repeats, the objective
/// moves by at most `tol`, or after `max_iter` rounds.
pub fn fit<P, D, F>(points: &P, divergence: &D, params: &LloydParams, mut observer: F) -> Result<Fit>
where
    P: PointSet + ?Sized,
    D: Divergence<P>,
    F: FnMut(&IterationView<'_>),
{
    let n = points.len();
    params.validate(n)?;
    divergence.validate(points)?;
    let dim = points.dim();
    let k = params.k;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = Centroids {
        dim,
        values: vec![0.0; k * dim],
        counts: vec![0; k],
    };
    for (slot, row) in index::sample(&mut rng, n, k).into_iter().enumerate() {
        points.add_point(row, &mut centroids.values[slot * dim..(slot + 1) * dim]);
    }
    let mut prepared: Vec<D::Prepared> = centroids.iter().map(|c| divergence.prepare(c)).collect();

    let parallel = n * k >= PAR_THRESHOLD;
    let mut assignments: Vec<Assignment> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut partition = LabeledPartition {
        assignments: Vec::new(),
        k,
    };

    for iteration in 1..=params.max_iter {
        let nearest = nearest_centroids(points, divergence, &prepared, parallel);
        let dist: Vec<f64> = nearest.iter().map(|&(_, d)| d).collect();
        let outliers = top_o_mask(&dist, params.o);

        let next: Vec<Assignment> = nearest
            .iter()
            .zip(&outliers)
            .map(|(&(c, _), &out)| if out { Assignment::Outlier } else { Assignment::Cluster(c) })
            .collect();

        // Centroid update over inliers only.
        centroids.values.iter_mut().for_each(|v| *v = 0.0);
        centroids.counts.iter_mut().for_each(|c| *c = 0);
        for (i, a) in next.iter().enumerate() {
            if let Assignment::Cluster(c) = *a {
                points.add_point(i, &mut centroids.values[c * dim..(c + 1) * dim]);
                centroids.counts[c] += 1;
            }
        }
        let mut used = BTreeSet::new();
        for c in 0..k {
            let count = centroids.counts[c];
            let slot = &mut centroids.values[c * dim..(c + 1) * dim];
            if count > 0 {
                let inv = 1.0 / count as f64;
                slot.iter_mut().for_each(|v| *v *= inv);
            } else if let Some(donor) = farthest_inlier(&next, &dist, &used) {
                used.insert(donor);
                slot.iter_mut().for_each(|v| *v = 0.0);
                points.add_point(donor, slot);
            }
        }
        prepared = centroids.iter().map(|c| divergence.prepare(c)).collect();

        let objective = inlier_objective(points, divergence, &prepared, &next, parallel);
        let repeated = next == assignments;
        let stalled = trace.last().is_some_and(|&prev: &f64| (prev - objective).abs() <= params.tol);
        assignments = next;
        trace.push(objective);
        partition.assignments.clone_from(&assignments);

        observer(&IterationView {
            iteration,
            partition: &partition,
            centroids: &centroids,
            objective,
        });

        if repeated || stalled {
            converged = true;
            break;
        }
    }

    Ok(Fit {
        iterations: trace.len(),
        partition,
        centroids,
        objective_trace: trace,
        converged,
    })
}

fn nearest_centroids<P, D>(points: &P, divergence: &D, prepared: &[D::Prepared], parallel: bool) -> Vec<(usize, f64)>
where
    P: PointSet + ?Sized,
    D: Divergence<P>,
{
    let nearest = |i: usize| {
        let mut best = (0, f64::INFINITY);
        for (c, m) in prepared.iter().enumerate() {
            let d = divergence.distance(points, i, m);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    };
    if parallel {
        (0..points.len()).into_par_iter().map(nearest).collect()
    } else {
        (0..points.len()).map(nearest).collect()
    }
}

fn inlier_objective<P, D>(points: &P, divergence: &D, prepared: &[D::Prepared], assignments: &[Assignment], parallel: bool) -> f64
where
    P: PointSet + ?Sized,
    D: Divergence<P>,
{
    let term = |i: usize| match assignments[i] {
        Assignment::Cluster(c) => divergence.distance(points, i, &prepared[c]),
        Assignment::Outlier => 0.0,
    };
    // Summed in index order so the value does not depend on threading.
    let terms: Vec<f64> = if parallel {
        (0..points.len()).into_par_iter().map(term).collect()
    } else {
        (0..points.len()).map(term).collect()
    };
    terms.iter().sum()
}

/// Marks the `o` largest distances, ties broken toward the lower index.
/// Uses selection rather than a full sort.
pub fn top_o_mask(dist: &[f64], o: usize) -> Vec<bool> {
    let mut mask = vec![false; dist.len()];
    if o == 0 {
        return mask;
    }
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.select_nth_unstable_by(o - 1, |&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    for &i in &idx[..o] {
        mask[i] = true;
    }
    mask
}

fn farthest_inlier(assignments: &[Assignment], dist: &[f64], used: &BTreeSet<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, a) in assignments.iter().enumerate() {
        if a.is_outlier() || used.contains(&i) {
            continue;
        }
        if best.is_none_or(|b| dist[i] > dist[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> DataMatrix {
        DataMatrix::from_rows(rows).unwrap()
    }

    fn sse_1d(points: &[f64], groups: &[Vec<usize>]) -> f64 {
        groups
            .iter()
            .map(|g| {
                let mean = g.iter().map(|&i| points[i]).sum::<f64>() / g.len() as f64;
                g.iter().map(|&i| (points[i] - mean).powi(2)).sum::<f64>()
            })
            .sum()
    }

    /// Minimum SSE over all ways to drop `o` points and split the rest into
    /// two non-empty groups.
    fn brute_force_two_clusters(points: &[f64], o: usize) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != o {
                continue;
            }
            let inliers: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            let m = inliers.len();
            for split in 1u32..(1 << m) - 1 {
                let a: Vec<usize> = (0..m).filter(|j| split & (1 << j) != 0).map(|j| inliers[j]).collect();
                let b: Vec<usize> = (0..m).filter(|j| split & (1 << j) == 0).map(|j| inliers[j]).collect();
                best = best.min(sse_1d(points, &[a, b]));
            }
        }
        best
    }

    fn groups(p: &LabeledPartition) -> BTreeSet<Vec<usize>> {
        (0..p.k()).map(|c| p.members(c)).filter(|m| !m.is_empty()).collect()
    }

    #[test]
    fn separated_pairs() {
        let x = matrix(&[&[0.0, 0.0], &[0.0, 1.0], &[10.0, 10.0], &[10.0, 11.0]]);
        for seed in 0..20 {
            let fit = kmeans(&x, 2, seed, 100, DEFAULT_TOL).unwrap();
            let expected: BTreeSet<Vec<usize>> = [vec![0, 1], vec![2, 3]].into_iter().collect();
            assert_eq!(groups(&fit.partition), expected, "seed {seed}");
            assert_eq!(fit.partition.n_outliers(), 0);
        }
    }

    #[test]
    fn k_equals_n_gives_zero_objective() {
        let x = matrix(&[&[0.0], &[3.0], &[7.0], &[8.0]]);
        let fit = kmeans(&x, 4, 1, 100, DEFAULT_TOL).unwrap();
        assert_eq!(fit.objective(), 0.0);
        assert_eq!(fit.partition.cluster_sizes(), vec![1; 4]);
    }

    #[test]
    fn collinear_points_match_enumeration() {
        let pts = [0.0, 1.0, 9.0, 10.0];
        let oracle = brute_force_two_clusters(&pts, 0);
        assert_eq!(oracle, 1.0);
        let x = matrix(&[&[0.0], &[1.0], &[9.0], &[10.0]]);
        for seed in 0..20 {
            let fit = kmeans(&x, 2, seed, 100, DEFAULT_TOL).unwrap();
            assert_eq!(fit.objective(), oracle);
            let expected: BTreeSet<Vec<usize>> = [vec![0, 1], vec![2, 3]].into_iter().collect();
            assert_eq!(groups(&fit.partition), expected);
        }
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        let x = matrix(&[&[0.0], &[1.0]]);
        assert!(matches!(kmeans(&x, 3, 0, 10, 0.0), Err(Error::TooManyClusters { .. })));
        let p = LloydParams::new(2, 1, 0);
        assert!(kmeans_minus_minus(&x, &p, DistanceKind::SquaredEuclidean).is_err());
    }

    #[test]
    fn gross_outlier_is_removed() {
        let x = matrix(&[&[0.0, 0.0], &[0.0, 1.0], &[10.0, 10.0], &[10.0, 11.0], &[100.0, 100.0]]);
        let mut hits = 0;
        for seed in 0..40 {
            let fit = kmeans_minus_minus(&x, &LloydParams::new(2, 1, seed), DistanceKind::SquaredEuclidean).unwrap();
            assert_eq!(fit.partition.n_outliers(), 1);
            // A centroid seeded on the outlier itself is a fixed point; every
            // other initialization must find the planted structure.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = index::sample(&mut rng, 5, 2).into_vec();
            if init.contains(&4) {
                continue;
            }
            hits += 1;
            assert_eq!(fit.partition.outlier_set(), BTreeSet::from([4]), "seed {seed}");
            let expected: BTreeSet<Vec<usize>> = [vec![0, 1], vec![2, 3]].into_iter().collect();
            assert_eq!(groups(&fit.partition), expected);
        }
        assert!(hits > 20);
    }

    #[test]
    fn zero_outliers_is_plain_kmeans() {
        let x = matrix(&[&[0.0, 1.0], &[0.5, 0.2], &[3.0, 3.0], &[3.5, 2.0], &[9.0, 1.0], &[8.0, 0.0]]);
        for seed in 0..10 {
            let a = kmeans(&x, 3, seed, 100, DEFAULT_TOL).unwrap();
            let b = kmeans_minus_minus(&x, &LloydParams::new(3, 0, seed), DistanceKind::SquaredEuclidean).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn one_dimensional_triples_reach_the_global_minimum() {
        let pts = [0.0, 1.0, 2.0, 50.0, 51.0, 52.0, 1000.0];
        let oracle = brute_force_two_clusters(&pts, 1);
        assert_eq!(oracle, 4.0);
        let x = DataMatrix::new(7, 1, pts.to_vec()).unwrap();
        let mut optimal = 0;
        for seed in 0..50 {
            let fit = kmeans_minus_minus(&x, &LloydParams::new(2, 1, seed), DistanceKind::SquaredEuclidean).unwrap();
            assert!(fit.objective() >= oracle - 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = index::sample(&mut rng, 7, 2).into_vec();
            if !init.contains(&6) {
                assert_eq!(fit.objective(), oracle, "seed {seed}");
                optimal += 1;
            }
        }
        assert!(optimal >= 25);
    }

    #[test]
    fn generalized_kl_rejects_values_outside_unit_interval() {
        let x = matrix(&[&[0.0, 1.0], &[1.5, 0.0], &[0.0, 0.0]]);
        let err = kmeans_minus_minus(&x, &LloydParams::new(1, 0, 0), DistanceKind::generalized_kl()).unwrap_err();
        assert!(matches!(err, Error::OutOfUnitRange { row: 1, column: 0, .. }));
    }

    #[test]
    fn top_o_ties_prefer_lower_index() {
        let mask = top_o_mask(&[1.0, 5.0, 5.0, 5.0, 0.0], 2);
        assert_eq!(mask, vec![false, true, true, false, false]);
        assert_eq!(top_o_mask(&[1.0, 2.0], 0), vec![false, false]);
    }

    #[test]
    fn observer_sees_exactly_o_outliers_and_means() {
        let x = matrix(&[&[0.0], &[0.2], &[0.4], &[5.0], &[5.5], &[6.0], &[20.0], &[-30.0]]);
        let params = LloydParams::new(2, 2, 3);
        let mut seen = 0;
        fit(&x, &SquaredEuclidean, &params, |view| {
            seen += 1;
            assert_eq!(view.partition.n_outliers(), 2);
            for c in 0..2 {
                let members = view.partition.members(c);
                if members.is_empty() {
                    continue;
                }
                let mean = members.iter().map(|&i| x.row(i)[0]).sum::<f64>() / members.len() as f64;
                assert!((view.centroids.get(c)[0] - mean).abs() <= 1e-10 * mean.abs().max(1.0));
            }
        })
        .unwrap();
        assert!(seen >= 1);
    }

    #[test]
    fn partition_codes_round_trip() {
        let p = LabeledPartition::from_codes(&[0, 2, -1, 1]).unwrap();
        assert_eq!(p.k(), 3);
        assert_eq!(p.codes(), vec![0, 2, -1, 1]);
        assert!(LabeledPartition::from_codes(&[-2]).is_err());
        assert!(LabeledPartition::new(vec![Assignment::Cluster(3)], 2).is_err());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<LabeledPartition>(&json).unwrap(), p);
    }
}
