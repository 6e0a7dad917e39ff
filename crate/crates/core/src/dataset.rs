//! Dataset ingestion, ground-truth preparation and synthetic blobs.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{Assignment, LabeledPartition};

/// Dense `n x d` matrix of finite reals, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    row_ids: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("a data matrix needs at least one row and one column"));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / cols,
                column: pos % cols,
                value: values[pos].to_string(),
            });
        }
        Ok(DataMatrix {
            rows,
            cols,
            values,
            row_ids: None,
        })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::Ragged {
                    row: i,
                    expected: cols,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values)
    }

    /// Attaches per-row identifiers, which must be unique.
    pub fn with_row_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: ids.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("duplicate row id {dup:?}")));
        }
        self.row_ids = Some(ids);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_ids(&self) -> Option<&[String]> {
        self.row_ids.as_deref()
    }

    /// Keeps only the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.cols) {
            return Err(Error::invalid(format!("column {bad} out of range for {} columns", self.cols)));
        }
        let mut values = Vec::with_capacity(self.rows * columns.len());
        for i in 0..self.rows {
            let row = self.row(i);
            values.extend(columns.iter().map(|&c| row[c]));
        }
        let mut out = DataMatrix::new(self.rows, columns.len(), values)?;
        out.row_ids = self.row_ids.clone();
        Ok(out)
    }

    /// Rescales each column to `[0, 1]`; constant columns become 0.
    pub fn min_max_scaled(&self) -> DataMatrix {
        let mut lo = vec![f64::INFINITY; self.cols];
        let mut hi = vec![f64::NEG_INFINITY; self.cols];
        for i in 0..self.rows {
            for (c, &v) in self.row(i).iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let c = idx % self.cols;
                let span = hi[c] - lo[c];
                if span > 0.0 {
                    (v - lo[c]) / span
                } else {
                    0.0
                }
            })
            .collect();
        DataMatrix {
            rows: self.rows,
            cols: self.cols,
            values,
            row_ids: self.row_ids.clone(),
        }
    }
}

/// Selects the label column of a CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Reads a comma-separated file of reals with an optional label column.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&LabelColumn>,
    has_header: bool,
) -> Result<(DataMatrix, Option<Vec<String>>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column, has_header)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: Read>(
    reader: R,
    label_column: Option<&LabelColumn>,
    has_header: bool,
) -> Result<(DataMatrix, Option<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let label_idx = match label_column {
        None => None,
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(name)) => {
            if !has_header {
                return Err(Error::UnknownColumn(name.clone()));
            }
            let headers = rdr.headers()?;
            Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::UnknownColumn(name.clone()))?,
            )
        }
    };

    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Ragged {
                row,
                expected,
                found: record.len(),
            });
        }
        if let Some(l) = label_idx {
            if l >= expected {
                return Err(Error::UnknownColumn(l.to_string()));
            }
        }
        for (column, cell) in record.iter().enumerate() {
            if Some(column) == label_idx {
                labels.push(cell.to_string());
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        row,
                        column,
                        value: cell.to_string(),
                    })
                }
            }
        }
        n += 1;
    }
    let d = width.unwrap_or(0) - usize::from(label_idx.is_some());
    let matrix = DataMatrix::new(n, d, values)?;
    Ok((matrix, label_idx.map(|_| labels)))
}

/// Writes `x` with header `x0..x{d-1}`, plus a trailing label column when
/// `labels` is given as `(header, values)`.
pub fn write_csv(path: impl AsRef<Path>, x: &DataMatrix, labels: Option<(&str, &[String])>) -> Result<()> {
    let path = path.as_ref();
    if let Some((_, values)) = labels {
        if values.len() != x.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: x.n_rows(),
                found: values.len(),
            });
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..x.n_cols()).map(|j| format!("x{j}")).collect();
    if let Some((name, _)) = labels {
        header.push(name.to_string());
    }
    w.write_record(&header)?;
    for i in 0..x.n_rows() {
        let mut record: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        if let Some((_, values)) = labels {
            record.push(values[i].clone());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes one integer label per line under the header `label`; `-1` marks
/// an outlier.
pub fn write_labels(path: impl AsRef<Path>, codes: &[i64]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(codes.len() * 3 + 6);
    text.push_str("label\n");
    for c in codes {
        text.push_str(&c.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a label file as written by [`write_labels`]. A non-numeric first
/// line is taken as a header; blank lines are ignored.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabeledPartition> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut codes = Vec::new();
    for (row, line) in text.lines().map(str::trim).enumerate() {
        if line.is_empty() || (row == 0 && line.parse::<i64>().is_err()) {
            continue;
        }
        codes.push(line.parse::<i64>().map_err(|_| Error::Parse {
            row,
            column: 0,
            value: line.to_string(),
        })?);
    }
    LabeledPartition::from_codes(&codes)
}

/// Class labels with the designated outlier classes removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    partition: LabeledPartition,
    /// Names of inlier classes, indexed by class id.
    pub class_names: Vec<String>,
    /// Names of the classes treated as outliers.
    pub outlier_classes: Vec<String>,
}

impl GroundTruth {
    pub fn from_partition(partition: LabeledPartition) -> Self {
        let class_names = (0..partition.k()).map(|k| k.to_string()).collect();
        GroundTruth {
            partition,
            class_names,
            outlier_classes: Vec::new(),
        }
    }

    pub fn partition(&self) -> &LabeledPartition {
        &self.partition
    }

    pub fn labels(&self) -> &[Assignment] {
        self.partition.assignments()
    }

    pub fn outlier_mask(&self) -> Vec<bool> {
        self.labels().iter().map(|a| a.is_outlier()).collect()
    }

    pub fn n_clusters(&self) -> usize {
        self.partition.k()
    }

    pub fn n_outliers(&self) -> usize {
        self.partition.n_outliers()
    }
}

/// Turns the `n_smallest_classes` least populated classes into outliers.
///
/// Ties in class size go to the lexicographically smaller name. The remaining
/// classes are numbered `0..K` in lexicographic order of their names.
pub fn prepare_ground_truth<S: AsRef<str>>(raw: &[S], n_smallest_classes: usize) -> Result<GroundTruth> {
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for label in raw {
        *sizes.entry(label.as_ref()).or_default() += 1;
    }
    if sizes.len() < n_smallest_classes + 1 {
        return Err(Error::TooFewClasses {
            needed: n_smallest_classes + 1,
            found: sizes.len(),
        });
    }
    let mut by_size: Vec<(&str, usize)> = sizes.iter().map(|(k, v)| (*k, *v)).collect();
    by_size.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)));
    let outliers: HashSet<&str> = by_size[..n_smallest_classes].iter().map(|(k, _)| *k).collect();

    let class_names: Vec<String> = sizes
        .keys()
        .filter(|k| !outliers.contains(*k))
        .map(|k| k.to_string())
        .collect();
    let ids: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let assignments = raw
        .iter()
        .map(|l| match ids.get(l.as_ref()) {
            Some(&id) => Assignment::Cluster(id),
            None => Assignment::Outlier,
        })
        .collect();
    let mut outlier_classes: Vec<String> = outliers.iter().map(|s| s.to_string()).collect();
    outlier_classes.sort();
    Ok(GroundTruth {
        partition: LabeledPartition::new(assignments, class_names.len())?,
        class_names,
        outlier_classes,
    })
}

/// Parameters of [`synth_blobs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_per_cluster: usize,
    pub k: usize,
    pub d: usize,
    pub cluster_sep: f64,
    pub o: usize,
    pub outlier_scale: f64,
    pub seed: u64,
}

/// Standard deviation of every blob.
pub const BLOB_STD: f64 = 1.0;

const CENTER_ATTEMPTS: usize = 10_000;

/// Isotropic unit-variance Gaussian blobs plus far-away uniform outliers.
///
/// Centers are drawn uniformly in a cube of side `2 * sep * k^(1/d)` and
/// rejected until pairwise at least `cluster_sep` apart. Outliers are placed
/// at uniformly random directions around the centers' mean, at a radius in
/// `[rho + scale, rho + 1.5 * scale]` where `rho` is the largest
/// center-to-mean distance, so every outlier is at least `outlier_scale`
/// from every center. Rows are ordered cluster by cluster, outliers last.
pub fn synth_blobs(p: &SynthParams) -> Result<(DataMatrix, GroundTruth)> {
    if p.n_per_cluster == 0 || p.k == 0 || p.d == 0 || p.o == 0 {
        return Err(Error::invalid("synth_blobs counts must all be at least 1"));
    }
    if !(p.cluster_sep > 0.0 && p.outlier_scale > p.cluster_sep) {
        return Err(Error::invalid("synth_blobs needs 0 < cluster_sep < outlier_scale"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let side = 2.0 * p.cluster_sep * (p.k as f64).powf(1.0 / p.d as f64);

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(p.k);
    let mut attempts = 0;
    while centers.len() < p.k {
        attempts += 1;
        if attempts > CENTER_ATTEMPTS {
            return Err(Error::InfeasibleGeometry {
                k: p.k,
                dims: p.d,
                separation: p.cluster_sep,
            });
        }
        let c: Vec<f64> = (0..p.d).map(|_| rng.random_range(0.0..side)).collect();
        if centers.iter().all(|o| squared_distance(o, &c) >= p.cluster_sep * p.cluster_sep) {
            centers.push(c);
        }
    }

    let n = p.n_per_cluster * p.k + p.o;
    let mut values = Vec::with_capacity(n * p.d);
    let mut assignments = Vec::with_capacity(n);
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..p.n_per_cluster {
            values.extend(c.iter().map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + BLOB_STD * z
            }));
            assignments.push(Assignment::Cluster(k));
        }
    }

    let mean: Vec<f64> = (0..p.d)
        .map(|j| centers.iter().map(|c| c[j]).sum::<f64>() / p.k as f64)
        .collect();
    let rho = centers
        .iter()
        .map(|c| squared_distance(c, &mean).sqrt())
        .fold(0.0, f64::max);
    for _ in 0..p.o {
        let dir = loop {
            let v: Vec<f64> = (0..p.d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
            }
        };
        let radius = rho + p.outlier_scale * rng.random_range(1.0..1.5);
        values.extend(mean.iter().zip(&dir).map(|(m, u)| m + radius * u));
        assignments.push(Assignment::Outlier);
    }

    let data = DataMatrix::new(n, p.d, values)?;
    let truth = GroundTruth::from_partition(LabeledPartition::new(assignments, p.k)?);
    Ok((data, truth))
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
