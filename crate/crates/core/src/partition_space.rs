//! Basic-partition ensembles and their one-hot encodings.
//!
//! A set of `r` basic partitions with `K_i` clusters each maps every point to
//! a binary row over `R = sum K_i` columns holding exactly one 1 per
//! partition block (`B`). The flipped encoding `B~` is its complement, and
//! the paired view `[B B~]` is what the outlier-removal solver clusters.
//! Only the active column of each block is stored; the complement is implicit.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::kmeans::{self, PointSet, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// How basic partitions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BpStrategy {
    /// Random parameter selection: K-means on all features with a cluster
    /// number drawn from `2..=2K`.
    Rps,
    /// Random feature selection: as RPS, on `ceil(ratio * d)` random features.
    Rfs { ratio: f64 },
}

impl BpStrategy {
    /// Number of features each run uses for a `d`-column input.
    pub fn features_per_run(&self, d: usize) -> usize {
        match *self {
            BpStrategy::Rps => d,
            // Guard against 0.7 * 10 = 7.000000000000001 style round-up.
            BpStrategy::Rfs { ratio } => ((ratio * d as f64 - 1e-9).ceil() as usize).clamp(1, d),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BpStrategy::Rfs { ratio } if !(ratio > 0.0 && ratio <= 1.0) => {
                Err(Error::invalid(format!("feature ratio {ratio} is not in (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// How a [`BasicPartitionSet`] was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationInfo {
    pub strategy: BpStrategy,
    pub seed: u64,
    pub target_k: usize,
    pub run_seeds: Vec<u64>,
    /// Cluster number requested from K-means in each run, before compaction.
    pub requested_k: Vec<usize>,
    pub features_per_run: usize,
    /// Feature indices used by each run (all features for RPS).
    pub features: Vec<Vec<usize>>,
}

/// `r` label vectors over the same `n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicPartitionSet {
    n: usize,
    labels: Vec<Vec<u32>>,
    cluster_counts: Vec<usize>,
    info: Option<GenerationInfo>,
}

impl BasicPartitionSet {
    /// Builds a set from raw label vectors, relabelling each partition to
    /// `0..K_i` in ascending order of the original labels.
    pub fn from_labels(partitions: Vec<Vec<usize>>) -> Result<Self> {
        let n = partitions.first().map_or(0, Vec::len);
        if partitions.is_empty() || n == 0 {
            return Err(Error::invalid("need at least one basic partition over at least one point"));
        }
        let mut labels = Vec::with_capacity(partitions.len());
        let mut cluster_counts = Vec::with_capacity(partitions.len());
        for p in &partitions {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: p.len(),
                });
            }
            let (compact, k) = compact_labels(p);
            labels.push(compact);
            cluster_counts.push(k);
        }
        Ok(BasicPartitionSet {
            n,
            labels,
            cluster_counts,
            info: None,
        })
    }

    pub fn with_info(mut self, info: GenerationInfo) -> Self {
        self.info = Some(info);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.labels.len()
    }

    pub fn cluster_counts(&self) -> &[usize] {
        &self.cluster_counts
    }

    /// `R = sum K_i`.
    pub fn total_clusters(&self) -> usize {
        self.cluster_counts.iter().sum()
    }

    pub fn partition(&self, i: usize) -> &[u32] {
        &self.labels[i]
    }

    pub fn info(&self) -> Option<&GenerationInfo> {
        self.info.as_ref()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.n.hash(&mut h);
        self.cluster_counts.hash(&mut h);
        self.labels.hash(&mut h);
        h.finish()
    }
}

fn compact_labels(labels: &[usize]) -> (Vec<u32>, usize) {
    let mut map = BTreeMap::new();
    for &l in labels {
        map.insert(l, 0u32);
    }
    for (i, v) in map.values_mut().enumerate() {
        *v = i as u32;
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

/// Random parameter selection.
pub fn generate_bps_rps(x: &DataMatrix, r: usize, k: usize, seed: u64) -> Result<BasicPartitionSet> {
    generate_bps(x, r, k, BpStrategy::Rps, seed)
}

/// Random feature selection with the given feature ratio.
pub fn generate_bps_rfs(x: &DataMatrix, r: usize, k: usize, ratio: f64, seed: u64) -> Result<BasicPartitionSet> {
    generate_bps(x, r, k, BpStrategy::Rfs { ratio }, seed)
}

/// Runs `r` seeded K-means clusterings with cluster numbers drawn uniformly
/// from `2..=2k`.
///
/// Per-run seeds are drawn up front from the master seed, so runs execute in
/// parallel and still match a sequential evaluation exactly.
pub fn generate_bps(x: &DataMatrix, r: usize, k: usize, strategy: BpStrategy, seed: u64) -> Result<BasicPartitionSet> {
    strategy.validate()?;
    let n = x.n_rows();
    if r == 0 || k == 0 {
        return Err(Error::invalid("r and k must be at least 1"));
    }
    if 2 * k > n {
        return Err(Error::TooManyClusters {
            requested: 2 * k,
            outliers: 0,
            points: n,
        });
    }
    let d = x.n_cols();
    let m = strategy.features_per_run(d);

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let run_seeds: Vec<u64> = (0..r).map(|_| master.next_u64()).collect();

    let runs: Vec<(Vec<usize>, usize, Vec<usize>)> = run_seeds
        .par_iter()
        .map(|&run_seed| -> Result<_> {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            let k_i = rng.random_range(2..=2 * k);
            let km_seed = rng.next_u64();
            let (features, fit) = match strategy {
                BpStrategy::Rps => ((0..d).collect(), kmeans::kmeans(x, k_i, km_seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?),
                BpStrategy::Rfs { .. } => {
                    let mut features = index::sample(&mut rng, d, m).into_vec();
                    features.sort_unstable();
                    let sub = x.select_columns(&features)?;
                    let fit = kmeans::kmeans(&sub, k_i, km_seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
                    (features, fit)
                }
            };
            let labels = fit
                .partition
                .assignments()
                .iter()
                .map(|a| a.cluster().expect("plain k-means leaves no outliers"))
                .collect();
            Ok((labels, k_i, features))
        })
        .collect::<Result<_>>()?;

    let mut partitions = Vec::with_capacity(r);
    let mut requested_k = Vec::with_capacity(r);
    let mut features = Vec::with_capacity(r);
    for (labels, k_i, f) in runs {
        partitions.push(labels);
        requested_k.push(k_i);
        features.push(f);
    }
    Ok(BasicPartitionSet::from_labels(partitions)?.with_info(GenerationInfo {
        strategy,
        seed,
        target_k: k,
        run_seeds,
        requested_k,
        features_per_run: m,
        features,
    }))
}

/// Sparse one-hot encoding `B` (or its flip `B~`) of a basic-partition set.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryEncoding {
    n: usize,
    offsets: Vec<usize>,
    /// Row-major `n x r` global column index of each row's 1 in `B`.
    active: Vec<u32>,
    flipped: bool,
    fingerprint: u64,
}

/// Builds `B` (`flipped = false`) or `B~` (`flipped = true`).
pub fn encode(bps: &BasicPartitionSet, flipped: bool) -> BinaryEncoding {
    let r = bps.r();
    let mut offsets = Vec::with_capacity(r + 1);
    let mut acc = 0;
    offsets.push(0);
    for &k in bps.cluster_counts() {
        acc += k;
        offsets.push(acc);
    }
    let mut active = Vec::with_capacity(bps.n() * r);
    for l in 0..bps.n() {
        for (i, part) in bps.labels.iter().enumerate() {
            active.push((offsets[i] + part[l] as usize) as u32);
        }
    }
    BinaryEncoding {
        n: bps.n(),
        offsets,
        active,
        flipped,
        fingerprint: bps.fingerprint(),
    }
}

impl BinaryEncoding {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of columns `R`.
    pub fn n_columns(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped
    }

    /// Column range of partition block `i`.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Columns where the unflipped row `l` holds a 1, one per block.
    pub fn active_columns(&self, l: usize) -> &[u32] {
        let r = self.r();
        &self.active[l * r..(l + 1) * r]
    }

    pub fn value(&self, l: usize, column: usize) -> u8 {
        let hit = self.active_columns(l).contains(&(column as u32));
        u8::from(hit != self.flipped)
    }

    pub fn row_dense(&self, l: usize) -> Vec<f64> {
        let (on, off) = if self.flipped { (0.0, 1.0) } else { (1.0, 0.0) };
        let mut row = vec![off; self.n_columns()];
        for &c in self.active_columns(l) {
            row[c as usize] = on;
        }
        row
    }

    pub fn row_sum(&self, l: usize) -> usize {
        let ones = self.active_columns(l).len();
        if self.flipped {
            self.n_columns() - ones
        } else {
            ones
        }
    }

    /// Recovers the basic-partition labels.
    pub fn decode(&self) -> BasicPartitionSet {
        let r = self.r();
        let labels: Vec<Vec<u32>> = (0..r)
            .map(|i| (0..self.n).map(|l| self.active[l * r + i] - self.offsets[i] as u32).collect())
            .collect();
        BasicPartitionSet {
            n: self.n,
            cluster_counts: (0..r).map(|i| self.offsets[i + 1] - self.offsets[i]).collect(),
            labels,
            info: None,
        }
    }
}

/// The `n x 2R` matrix `[B B~]`.
///
/// As a [`PointSet`] its centroid storage covers only the `B` half: the mean
/// of the `B~` half is always one minus the mean of the `B` half.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatEncoding {
    b: BinaryEncoding,
}

/// Pairs `B` with `B~`; both must come from the same basic partitions and
/// arrive in that orientation.
pub fn concat(b: &BinaryEncoding, b_flipped: &BinaryEncoding) -> Result<ConcatEncoding> {
    if b.flipped
        || !b_flipped.flipped
        || b.fingerprint != b_flipped.fingerprint
        || b.n != b_flipped.n
        || b.offsets != b_flipped.offsets
        || b.active != b_flipped.active
    {
        return Err(Error::ProvenanceMismatch);
    }
    Ok(ConcatEncoding { b: b.clone() })
}

impl ConcatEncoding {
    pub fn from_bps(bps: &BasicPartitionSet) -> Self {
        ConcatEncoding { b: encode(bps, false) }
    }

    pub fn encoding(&self) -> &BinaryEncoding {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.b.n
    }

    pub fn r(&self) -> usize {
        self.b.r()
    }

    /// `R`, the width of each half.
    pub fn half_width(&self) -> usize {
        self.b.n_columns()
    }

    pub fn width(&self) -> usize {
        2 * self.half_width()
    }

    pub fn active_columns(&self, l: usize) -> &[u32] {
        self.b.active_columns(l)
    }

    /// Non-zero entries in a row: `r` in `B` plus `R - r` in `B~`.
    pub fn row_nnz(&self, _l: usize) -> usize {
        self.half_width()
    }

    pub fn row_dense(&self, l: usize) -> Vec<f64> {
        let mut row = self.b.row_dense(l);
        row.extend(row.clone().into_iter().map(|v| 1.0 - v));
        row
    }
}

impl PointSet for ConcatEncoding {
    fn len(&self) -> usize {
        self.b.n
    }

    fn dim(&self) -> usize {
        self.half_width()
    }

    fn add_point(&self, i: usize, acc: &mut [f64]) {
        for &c in self.b.active_columns(i) {
            acc[c as usize] += 1.0;
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    r: usize,
    cluster_counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    generation: Option<GenerationInfo>,
}

/// Path of the JSON sidecar next to a basic-partition CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `n` rows of `r` labels plus the JSON sidecar.
pub fn write_bps(bps: &BasicPartitionSet, csv_path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(bps.n() * bps.r() * 3);
    let header: Vec<String> = (0..bps.r()).map(|i| format!("bp{i}")).collect();
    writeln!(out, "{}", header.join(",")).expect("write to vec");
    for l in 0..bps.n() {
        let row: Vec<String> = bps.labels.iter().map(|p| p[l].to_string()).collect();
        writeln!(out, "{}", row.join(",")).expect("write to vec");
    }
    std::fs::write(csv_path, out).map_err(|e| Error::io(csv_path, e))?;

    let sidecar = Sidecar {
        n: bps.n(),
        r: bps.r(),
        cluster_counts: bps.cluster_counts.clone(),
        generation: bps.info.clone(),
    };
    let path = sidecar_path(csv_path);
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(path, e))
}

/// Reads a set written by [`write_bps`]; the sidecar is optional.
pub fn read_bps(csv_path: &Path) -> Result<BasicPartitionSet> {
    let (matrix, _) = crate::dataset::load_csv(csv_path, None, true)?;
    let mut partitions = vec![Vec::with_capacity(matrix.n_rows()); matrix.n_cols()];
    for l in 0..matrix.n_rows() {
        for (i, &v) in matrix.row(l).iter().enumerate() {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Parse {
                    row: l,
                    column: i,
                    value: v.to_string(),
                });
            }
            partitions[i].push(v as usize);
        }
    }
    let mut bps = BasicPartitionSet::from_labels(partitions)?;
    let path = sidecar_path(csv_path);
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        if sidecar.n != bps.n() || sidecar.r != bps.r() || sidecar.cluster_counts != bps.cluster_counts {
            return Err(Error::invalid("sidecar does not match the basic-partition csv"));
        }
        bps.info = sidecar.generation;
    }
    Ok(bps)
}
