//! Clustering with outlier removal (COR).
//!
//! Points are rows of the paired encoding `[B B~]`. Clustering them with
//! K-means-- under the coordinate-wise generalized KL divergence minimizes the
//! size-weighted sum of per-cluster column entropies of `B`. For binary
//! points the divergence of a `(b, 1 - b)` column pair against `(m, 1 - m)`
//! collapses to the binary cross-entropy `-[b ln m + (1 - b) ln(1 - m)]`,
//! which is what the solver evaluates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::kmeans::{
    self, Assignment, Centroids, Divergence, LabeledPartition, LloydParams, PointSet, DEFAULT_EPSILON,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::partition_space::{concat, encode, generate_bps, BasicPartitionSet, BinaryEncoding, BpStrategy, ConcatEncoding};

// Decorrelates the solver's initialization stream from basic-partition
// generation, which consumes the raw seed.
const SOLVER_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Independent random-row initializations per solve; the lowest objective wins.
pub const DEFAULT_RESTARTS: usize = 10;

/// Generalized KL divergence `s ln(s/t') - s + t'` with
/// `t' = clamp(t, epsilon, 1 - epsilon)` and `0 ln 0 = 0`.
pub fn generalized_kl(s: f64, t: f64, epsilon: f64) -> f64 {
    let t = t.clamp(epsilon, 1.0 - epsilon);
    let log_term = if s > 0.0 { s * (s / t).ln() } else { 0.0 };
    log_term - s + t
}

/// Binary cross-entropy of a sparse `B` row against a centroid `m` over the
/// `R` columns of `B`, with `m` clamped to `[epsilon, 1 - epsilon]`.
///
/// Equals `f(b, m) + f(b~, 1 - m)` under [`generalized_kl`].
pub fn point_distance(active: &[u32], centroid: &[f64], epsilon: f64) -> Result<f64> {
    if let Some(&c) = active.iter().find(|&&c| c as usize >= centroid.len()) {
        return Err(Error::DimensionMismatch {
            expected: centroid.len(),
            found: c as usize + 1,
        });
    }
    let mut on = vec![false; centroid.len()];
    for &c in active {
        on[c as usize] = true;
    }
    Ok(centroid
        .iter()
        .zip(&on)
        .map(|(&m, &b)| {
            let m = m.clamp(epsilon, 1.0 - epsilon);
            if b {
                -m.ln()
            } else {
                -(1.0 - m).ln()
            }
        })
        .sum())
}

/// Shannon entropy of a Bernoulli(p) variable in nats, `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Size-weighted sum over clusters of the entropies of the `B` columns
/// restricted to the cluster's members; outliers are ignored.
pub fn holoentropy_objective(b: &BinaryEncoding, partition: &LabeledPartition) -> Result<f64> {
    let sizes = partition.cluster_sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(empty));
    }
    holoentropy_unchecked(b, partition)
}

/// As [`holoentropy_objective`] but empty clusters simply contribute nothing.
pub(crate) fn holoentropy_unchecked(b: &BinaryEncoding, partition: &LabeledPartition) -> Result<f64> {
    if partition.len() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: b.n(),
            found: partition.len(),
        });
    }
    let inliers = partition.n_inliers();
    if inliers == 0 {
        return Err(Error::invalid("holoentropy needs at least one inlier"));
    }
    let width = b.n_columns();
    let mut counts = vec![0usize; partition.k() * width];
    for (l, a) in partition.assignments().iter().enumerate() {
        if let Assignment::Cluster(c) = *a {
            for &col in b.active_columns(l) {
                counts[c * width + col as usize] += 1;
            }
        }
    }
    let total = partition
        .cluster_sizes()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0)
        .map(|(c, &s)| {
            let entropy: f64 = counts[c * width..(c + 1) * width]
                .iter()
                .map(|&cnt| binary_entropy(cnt as f64 / s as f64))
                .sum();
            s as f64 / inliers as f64 * entropy
        })
        .sum();
    Ok(total)
}

/// Cross-entropy divergence on the paired encoding.
///
/// Prepared centroids hold `sum_c -ln(1 - m_c)` and per-column weights
/// `ln(1 - m_c) - ln(m_c)`, so a row costs `r` lookups.
#[derive(Debug, Clone, Copy)]
pub struct CrossEntropy {
    pub epsilon: f64,
}

pub struct PreparedKl {
    base: f64,
    weight: Vec<f64>,
}

impl Divergence<ConcatEncoding> for CrossEntropy {
    type Prepared = PreparedKl;

    fn prepare(&self, centroid: &[f64]) -> PreparedKl {
        let mut base = 0.0;
        let weight = centroid
            .iter()
            .map(|&m| {
                let m = m.clamp(self.epsilon, 1.0 - self.epsilon);
                let off = (1.0 - m).ln();
                base -= off;
                off - m.ln()
            })
            .collect();
        PreparedKl { base, weight }
    }

    fn distance(&self, points: &ConcatEncoding, i: usize, m: &PreparedKl) -> f64 {
        m.base + points.active_columns(i).iter().map(|&c| m.weight[c as usize]).sum::<f64>()
    }
}

/// Centroid over `[B B~]`: column probabilities `m` of the `B` half, with the
/// `B~` half implied as `1 - m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlCentroid {
    pub m: Vec<f64>,
    pub count: usize,
}

impl KlCentroid {
    pub fn complement(&self) -> Vec<f64> {
        self.m.iter().map(|v| 1.0 - v).collect()
    }

    /// The centroid as a `2R` vector.
    pub fn full(&self) -> Vec<f64> {
        let mut v = self.m.clone();
        v.extend(self.complement());
        v
    }

    fn from_centroids(c: &Centroids) -> Vec<KlCentroid> {
        (0..c.k())
            .map(|k| KlCentroid {
                m: c.get(k).to_vec(),
                count: c.count(k),
            })
            .collect()
    }
}

/// Solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorConfig {
    pub k: usize,
    pub o: usize,
    pub r: usize,
    pub strategy: BpStrategy,
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Number of initializations; `1` runs a single descent.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl CorConfig {
    pub fn new(k: usize, o: usize, r: usize, seed: u64) -> Self {
        CorConfig {
            k,
            o,
            r,
            strategy: BpStrategy::Rps,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            epsilon: DEFAULT_EPSILON,
            restarts: DEFAULT_RESTARTS,
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_strategy(mut self, strategy: BpStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.r == 0 || self.restarts == 0 {
            return Err(Error::invalid("k, r and restarts must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::invalid(format!("epsilon {} is not in (0, 0.5)", self.epsilon)));
        }
        if self.tol.is_nan() || self.tol < 0.0 || self.max_iter == 0 {
            return Err(Error::invalid("tol must be non-negative and max_iter positive"));
        }
        Ok(())
    }

    fn lloyd(&self, restart: usize) -> LloydParams {
        let salted = self.seed ^ SOLVER_SEED_SALT;
        LloydParams {
            k: self.k,
            o: self.o,
            seed: salted.wrapping_add((restart as u64).wrapping_mul(SOLVER_SEED_SALT)),
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

/// Output of a COR run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorResult {
    pub config: CorConfig,
    pub partition: LabeledPartition,
    pub centroids: Vec<KlCentroid>,
    /// Holoentropy objective of the inliers after each iteration.
    pub objective_trace: Vec<f64>,
    /// Total cross-entropy of inliers to their centroids after each iteration;
    /// the quantity K-means-- minimizes directly.
    pub distance_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the initialization that produced this result.
    pub restart: usize,
    /// Final objective of every initialization, in order.
    pub restart_objectives: Vec<f64>,
}

impl CorResult {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Per-iteration state for [`run_cor_from_bps_observed`].
pub struct CorIteration<'a> {
    pub restart: usize,
    pub iteration: usize,
    pub partition: &'a LabeledPartition,
    pub centroids: &'a Centroids,
    pub encoding: &'a ConcatEncoding,
    pub holoentropy: f64,
    pub total_distance: f64,
}

/// Generates basic partitions from `x` and runs the solver on them.
pub fn run_cor(x: &DataMatrix, cfg: &CorConfig) -> Result<CorResult> {
    cfg.validate()?;
    if cfg.k + cfg.o > x.n_rows() {
        return Err(Error::TooManyClusters {
            requested: cfg.k,
            outliers: cfg.o,
            points: x.n_rows(),
        });
    }
    let bps = generate_bps(x, cfg.r, cfg.k, cfg.strategy, cfg.seed)?;
    run_cor_from_bps(&bps, cfg)
}

/// Runs the solver on an existing basic-partition set.
pub fn run_cor_from_bps(bps: &BasicPartitionSet, cfg: &CorConfig) -> Result<CorResult> {
    run_cor_parallel(bps, cfg)
}

/// As [`run_cor_from_bps`], calling `observer` after every centroid update
/// of every initialization. Initializations run one after another here,
/// in parallel otherwise.
pub fn run_cor_from_bps_observed<F>(bps: &BasicPartitionSet, cfg: &CorConfig, mut observer: F) -> Result<CorResult>
where
    F: FnMut(&CorIteration<'_>),
{
    cfg.validate()?;
    let b = encode(bps, false);
    let paired = concat(&b, &encode(bps, true))?;
    let descents = (0..cfg.restarts)
        .map(|j| descend(&b, &paired, cfg, j, &mut observer))
        .collect::<Result<Vec<_>>>()?;
    Ok(pick_best(cfg, descents))
}

fn run_cor_parallel(bps: &BasicPartitionSet, cfg: &CorConfig) -> Result<CorResult> {
    cfg.validate()?;
    let b = encode(bps, false);
    let paired = concat(&b, &encode(bps, true))?;
    let descents = (0..cfg.restarts)
        .into_par_iter()
        .map(|j| descend(&b, &paired, cfg, j, &mut |_: &CorIteration<'_>| {}))
        .collect::<Result<Vec<_>>>()?;
    Ok(pick_best(cfg, descents))
}

struct Descent {
    fit: kmeans::Fit,
    objective_trace: Vec<f64>,
}

fn descend<F>(b: &BinaryEncoding, paired: &ConcatEncoding, cfg: &CorConfig, restart: usize, observer: &mut F) -> Result<Descent>
where
    F: FnMut(&CorIteration<'_>),
{
    let divergence = CrossEntropy { epsilon: cfg.epsilon };
    let mut objective_trace = Vec::new();
    let mut failure = None;
    let fit = kmeans::fit(paired, &divergence, &cfg.lloyd(restart), |view| {
        let h = match holoentropy_unchecked(b, view.partition) {
            Ok(h) => h,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        objective_trace.push(h);
        observer(&CorIteration {
            restart,
            iteration: view.iteration,
            partition: view.partition,
            centroids: view.centroids,
            encoding: paired,
            holoentropy: h,
            total_distance: view.objective,
        });
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(Descent { fit, objective_trace }),
    }
}

/// Lowest final objective, earliest initialization on ties.
fn pick_best(cfg: &CorConfig, descents: Vec<Descent>) -> CorResult {
    let finals: Vec<f64> = descents.iter().map(|d| *d.objective_trace.last().expect("at least one iteration")).collect();
    let best = (0..finals.len()).fold(0, |best, j| if finals[j] < finals[best] { j } else { best });
    let Descent { fit, objective_trace } = descents.into_iter().nth(best).expect("best index in range");
    CorResult {
        config: cfg.clone(),
        centroids: KlCentroid::from_centroids(&fit.centroids),
        partition: fit.partition,
        objective_trace,
        distance_trace: fit.objective_trace,
        iterations: fit.iterations,
        converged: fit.converged,
        restart: best,
        restart_objectives: finals,
    }
}

/// Direct evaluation of `sum over inliers` of [`point_distance`] to the
/// clamped in-cluster column means; used to cross-check the solver.
pub fn total_point_distance(paired: &ConcatEncoding, partition: &LabeledPartition, epsilon: f64) -> Result<f64> {
    let dim = paired.dim();
    let k = partition.k();
    let mut sums = vec![0.0; k * dim];
    let sizes = partition.cluster_sizes();
    for (l, a) in partition.assignments().iter().enumerate() {
        if let Assignment::Cluster(c) = *a {
            paired.add_point(l, &mut sums[c * dim..(c + 1) * dim]);
        }
    }
    let mut total = 0.0;
    for (l, a) in partition.assignments().iter().enumerate() {
        if let Assignment::Cluster(c) = *a {
            let mean: Vec<f64> = sums[c * dim..(c + 1) * dim].iter().map(|s| s / sizes[c] as f64).collect();
            total += point_distance(paired.active_columns(l), &mean, epsilon)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition_space::encode;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    const EPS: f64 = 1e-12;

    #[test]
    fn generalized_kl_examples() {
        let v = generalized_kl(1.0, 1.0, EPS);
        assert!(v.abs() <= 2.0 * EPS);
        assert_eq!(generalized_kl(0.0, 0.5, EPS), 0.5);
        let expected = -(0.25f64).ln() - 1.0 + 0.25;
        assert!((generalized_kl(1.0, 0.25, EPS) - expected).abs() < 1e-15);
        assert!((expected - 0.636_294_361_119_890_6).abs() < 1e-15);
    }

    #[test]
    fn point_distance_examples() {
        assert!((point_distance(&[0], &[0.5], EPS).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let clamped = point_distance(&[0], &[0.0], EPS).unwrap();
        assert!((clamped - 27.631_021_115_928_547).abs() < 1e-9);
        // self-match against a concentrated centroid
        let m = [1.0 - EPS, EPS, EPS, 1.0 - EPS];
        let d = point_distance(&[0, 3], &m, EPS).unwrap();
        assert!(d < 4.0 * 1.1e-12);
        assert!(matches!(point_distance(&[4], &m, EPS), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pair_of_kl_terms_is_cross_entropy() {
        for &b in &[0.0, 1.0] {
            for &m in &[EPS, 1e-6, 0.1, 0.5, 0.9, 1.0 - 1e-6, 1.0 - EPS] {
                let lhs = generalized_kl(b, m, EPS) + generalized_kl(1.0 - b, 1.0 - m, EPS);
                let clamp = |t: f64| t.clamp(EPS, 1.0 - EPS);
                let rhs = -(b * clamp(m).ln() + (1.0 - b) * clamp(1.0 - m).ln());
                assert!((lhs - rhs).abs() <= 1e-12, "b={b} m={m} lhs={lhs} rhs={rhs}");
            }
        }
    }

    #[test]
    fn prepared_distance_matches_direct_form() {
        let bps = BasicPartitionSet::from_labels(vec![vec![0, 1, 2, 0], vec![1, 1, 0, 0]]).unwrap();
        let paired = ConcatEncoding::from_bps(&bps);
        let m = [0.2, 0.0, 0.7, 1.0, 0.35];
        let ce = CrossEntropy { epsilon: EPS };
        let prepared = ce.prepare(&m);
        for l in 0..4 {
            let direct = point_distance(paired.active_columns(l), &m, EPS).unwrap();
            let fast = ce.distance(&paired, l, &prepared);
            assert!((direct - fast).abs() <= 1e-9 * direct.max(1.0), "{direct} vs {fast}");
        }
    }

    #[test]
    fn holoentropy_examples() {
        // Pure clusters.
        let bps = BasicPartitionSet::from_labels(vec![vec![0, 0, 1, 1]]).unwrap();
        let b = encode(&bps, false);
        let p = LabeledPartition::from_codes(&[0, 0, 1, 1]).unwrap();
        assert_eq!(holoentropy_objective(&b, &p).unwrap(), 0.0);

        // One cluster over a two-column block: both columns at p = 0.5.
        let bps = BasicPartitionSet::from_labels(vec![vec![0, 1]]).unwrap();
        let b = encode(&bps, false);
        let one = LabeledPartition::from_codes(&[0, 0]).unwrap();
        assert!((holoentropy_objective(&b, &one).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);

        // n = 4, clusters {0,1} with columns (1, 0) and {2,3} with (0.5, 0.5).
        let bps = BasicPartitionSet::from_labels(vec![vec![0, 0, 0, 1]]).unwrap();
        let b = encode(&bps, false);
        let p = LabeledPartition::from_codes(&[0, 0, 1, 1]).unwrap();
        let h = holoentropy_objective(&b, &p).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn holoentropy_single_column() {
        assert!((binary_entropy(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
    }

    #[test]
    fn holoentropy_rejects_empty_cluster() {
        let bps = BasicPartitionSet::from_labels(vec![vec![0, 1]]).unwrap();
        let b = encode(&bps, false);
        let p = LabeledPartition::new(vec![Assignment::Cluster(0), Assignment::Outlier], 2).unwrap();
        assert!(matches!(holoentropy_objective(&b, &p), Err(Error::EmptyCluster(1))));
    }

    #[test]
    fn single_consistent_partition_is_recovered() {
        let labels = vec![0, 0, 0, 1, 1, 1, 1];
        let bps = BasicPartitionSet::from_labels(vec![labels.clone()]).unwrap();
        for seed in 0..10 {
            let res = run_cor_from_bps(&bps, &CorConfig::new(2, 0, 1, seed)).unwrap();
            let c0 = res.partition.get(0);
            for (l, &lab) in labels.iter().enumerate() {
                assert_eq!(res.partition.get(l) == c0, lab == 0);
            }
            assert_eq!(res.partition.n_outliers(), 0);
        }
    }

    #[test]
    fn zero_outliers_yields_no_outlier_labels() {
        let bps = BasicPartitionSet::from_labels(vec![vec![0, 0, 1, 1, 2], vec![0, 1, 1, 1, 0]]).unwrap();
        let res = run_cor_from_bps(&bps, &CorConfig::new(2, 0, 2, 4)).unwrap();
        assert_eq!(res.partition.n_outliers(), 0);
    }

    #[test]
    fn rejects_bad_config() {
        let bps = BasicPartitionSet::from_labels(vec![vec![0, 1, 0]]).unwrap();
        let mut cfg = CorConfig::new(2, 2, 1, 0);
        assert!(matches!(run_cor_from_bps(&bps, &cfg), Err(Error::TooManyClusters { .. })));
        cfg.o = 0;
        cfg.epsilon = 0.5;
        assert!(run_cor_from_bps(&bps, &cfg).is_err());
        cfg.epsilon = EPS;
        cfg.restarts = 0;
        assert!(run_cor_from_bps(&bps, &cfg).is_err());
    }

    fn noisy_bps() -> BasicPartitionSet {
        BasicPartitionSet::from_labels(vec![
            vec![0, 0, 0, 1, 1, 1, 2, 2, 0, 1],
            vec![0, 0, 1, 1, 1, 2, 2, 2, 1, 0],
            vec![1, 1, 1, 0, 0, 0, 0, 1, 2, 2],
        ])
        .unwrap()
    }

    #[test]
    fn best_restart_is_kept() {
        let cfg = CorConfig::new(3, 1, 3, 11).with_restarts(6);
        let res = run_cor_from_bps(&noisy_bps(), &cfg).unwrap();
        assert_eq!(res.restart_objectives.len(), 6);
        let min = res.restart_objectives.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(res.objective(), min);
        assert_eq!(res.restart, res.restart_objectives.iter().position(|&v| v == min).unwrap());
    }

    #[test]
    fn observed_and_parallel_paths_agree() {
        let cfg = CorConfig::new(3, 1, 3, 5).with_restarts(4);
        let mut seen = BTreeSet::new();
        let observed = run_cor_from_bps_observed(&noisy_bps(), &cfg, |it| {
            seen.insert(it.restart);
        })
        .unwrap();
        assert_eq!(observed, run_cor_from_bps(&noisy_bps(), &cfg).unwrap());
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn first_restart_matches_single_descent() {
        let many = run_cor_from_bps(&noisy_bps(), &CorConfig::new(2, 2, 3, 8).with_restarts(5)).unwrap();
        let one = run_cor_from_bps(&noisy_bps(), &CorConfig::new(2, 2, 3, 8).with_restarts(1)).unwrap();
        assert_eq!(many.restart_objectives[0], one.objective());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exactly_o_outliers_and_monotone_trace(
            labels in prop::collection::vec(prop::collection::vec(0usize..4, 12), 1..5),
            k in 1usize..4,
            o in 0usize..5,
            seed in any::<u64>(),
        ) {
            let r = labels.len();
            let bps = BasicPartitionSet::from_labels(labels).unwrap();
            let res = run_cor_from_bps(&bps, &CorConfig::new(k, o, r, seed).with_restarts(2)).unwrap();
            prop_assert_eq!(res.partition.n_outliers(), o);
            prop_assert!(res.iterations <= DEFAULT_MAX_ITER);
            for w in res.distance_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }
    }
}
