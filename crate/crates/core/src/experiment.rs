//! Multi-run experiments: dataset preparation, method dispatch, evaluation
//! and report assembly.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cor::{run_cor_from_bps, CorConfig, DEFAULT_RESTARTS};
use crate::dataset::{load_csv, prepare_ground_truth, synth_blobs, DataMatrix, GroundTruth, LabelColumn, SynthParams};
use crate::error::{Error, Result};
use crate::kmeans::{self, Assignment, DistanceKind, LabeledPartition, LloydParams, DEFAULT_EPSILON, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::metrics::{evaluate, EvalReport};
use crate::partition_space::{generate_bps, read_bps, BasicPartitionSet, BpStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    #[serde(alias = "COR")]
    Cor,
    /// K-means with `K + 1` clusters; the smallest cluster is the outlier set.
    #[serde(alias = "KMEANS_BASELINE")]
    KmeansBaseline,
    /// K-means-- with squared Euclidean distance on the raw features.
    #[serde(alias = "KMEANSMM_BASELINE")]
    KmeansmmBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    #[default]
    Rps,
    Rfs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        label_column: LabelColumn,
        #[serde(default = "yes")]
        has_header: bool,
        #[serde(default = "one")]
        n_smallest_classes: usize,
    },
    Synth(SynthParams),
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn default_r() -> usize {
    100
}

fn default_ratio() -> f64 {
    0.5
}

fn default_runs() -> usize {
    20
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

fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

/// One experiment, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub method: Method,
    /// Cluster count; defaults to the ground truth's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Outlier count; defaults to the ground truth's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o: Option<usize>,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub strategy: StrategyName,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Initializations per COR solve.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub scale_features: bool,
    /// Reuse a persisted basic-partition set instead of generating one per run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bps: Option<PathBuf>,
    /// Report destination. Output locations are read but never echoed into
    /// reports, so the same experiment written elsewhere is byte-identical.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub labels_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource) -> Self {
        ExperimentConfig {
            dataset,
            method: Method::Cor,
            k: None,
            o: None,
            r: default_r(),
            strategy: StrategyName::Rps,
            ratio: default_ratio(),
            runs: default_runs(),
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            epsilon: DEFAULT_EPSILON,
            restarts: DEFAULT_RESTARTS,
            scale_features: false,
            bps: None,
            out: None,
            labels_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn bp_strategy(&self) -> BpStrategy {
        match self.strategy {
            StrategyName::Rps => BpStrategy::Rps,
            StrategyName::Rfs => BpStrategy::Rfs { ratio: self.ratio },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if self.bps.is_some() && self.method != Method::Cor {
            return Err(Error::invalid("a basic-partition file only applies to the cor method"));
        }
        Ok(())
    }
}

/// Loads the configured dataset and its ground truth.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(DataMatrix, GroundTruth)> {
    let (x, truth) = match &cfg.dataset {
        DatasetSource::Csv {
            path,
            label_column,
            has_header,
            n_smallest_classes,
        } => {
            let (x, labels) = load_csv(path, Some(label_column), *has_header)?;
            let labels = labels.expect("label column was requested");
            (x, prepare_ground_truth(&labels, *n_smallest_classes)?)
        }
        DatasetSource::Synth(p) => synth_blobs(p)?,
    };
    let x = if cfg.scale_features { x.min_max_scaled() } else { x };
    Ok((x, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run: usize,
    pub seed: u64,
    pub metrics: EvalReport,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
    /// Basic-partition generation time, COR only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bp_ms: Option<f64>,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub k: usize,
    pub o: usize,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub runs: Vec<RunEntry>,
    pub aggregate: BTreeMap<String, MeanStd>,
}

impl RunReport {
    /// Clears all wall-clock fields; everything left is a pure function of
    /// the config.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        for e in &mut r.runs {
            e.wall_ms = 0.0;
            e.solve_ms = 0.0;
            e.bp_ms = e.bp_ms.map(|_| 0.0);
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// A finished experiment: the report plus each run's predicted labels.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: RunReport,
    pub labels: Vec<Vec<i64>>,
}

struct RunOutput {
    entry: RunEntry,
    labels: Vec<i64>,
}

/// Runs `cfg.runs` seeds (`seed + run index`) in parallel. Run failures are
/// recorded in the report rather than returned; setup failures are errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (x, truth) = load_dataset(cfg)?;
    let k = cfg.k.unwrap_or_else(|| truth.n_clusters());
    let o = cfg.o.unwrap_or_else(|| truth.n_outliers());
    let fixed_bps = cfg.bps.as_deref().map(read_bps).transpose()?;
    if let Some(bps) = &fixed_bps {
        if bps.n() != x.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: x.n_rows(),
                found: bps.n(),
            });
        }
    }

    let outputs: Vec<Result<RunOutput>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| run_once(cfg, &x, &truth, k, o, fixed_bps.as_ref(), run))
        .collect();

    let mut runs = Vec::new();
    let mut labels = Vec::new();
    let mut error = None;
    for out in outputs {
        match out {
            Ok(o) => {
                runs.push(o.entry);
                labels.push(o.labels);
            }
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let aggregate = EvalReport::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let values: Vec<f64> = runs.iter().map(|r| r.metrics.values()[i]).collect();
            (name.to_string(), MeanStd::of(&values))
        })
        .collect();
    Ok(ExperimentOutcome {
        report: RunReport {
            config: cfg.clone(),
            k,
            o,
            status: if error.is_some() { RunStatus::Failed } else { RunStatus::Ok },
            error,
            runs,
            aggregate,
        },
        labels,
    })
}

fn run_once(
    cfg: &ExperimentConfig,
    x: &DataMatrix,
    truth: &GroundTruth,
    k: usize,
    o: usize,
    fixed_bps: Option<&BasicPartitionSet>,
    run: usize,
) -> Result<RunOutput> {
    let seed = cfg.seed.wrapping_add(run as u64);
    let started = Instant::now();
    let mut bp_ms = None;
    let (partition, trace, iterations, converged) = match cfg.method {
        Method::Cor => {
            let cor = CorConfig {
                k,
                o,
                r: cfg.r,
                strategy: cfg.bp_strategy(),
                seed,
                max_iter: cfg.max_iter,
                tol: cfg.tol,
                epsilon: cfg.epsilon,
                restarts: cfg.restarts,
            };
            cor.validate()?;
            let generated;
            let bps = match fixed_bps {
                Some(b) => b,
                None => {
                    let t = Instant::now();
                    generated = generate_bps(x, cfg.r, k, cor.strategy, seed)?;
                    bp_ms = Some(elapsed_ms(t));
                    &generated
                }
            };
            let res = run_cor_from_bps(bps, &cor)?;
            (res.partition, res.objective_trace, res.iterations, res.converged)
        }
        Method::KmeansBaseline => {
            let fit = kmeans::kmeans(x, k + 1, seed, cfg.max_iter, cfg.tol)?;
            (smallest_cluster_as_outliers(&fit.partition), fit.objective_trace, fit.iterations, fit.converged)
        }
        Method::KmeansmmBaseline => {
            let params = LloydParams {
                k,
                o,
                seed,
                max_iter: cfg.max_iter,
                tol: cfg.tol,
            };
            let fit = kmeans::kmeans_minus_minus(x, &params, DistanceKind::SquaredEuclidean)?;
            (fit.partition, fit.objective_trace, fit.iterations, fit.converged)
        }
    };
    let wall_ms = elapsed_ms(started);
    let metrics = evaluate(&partition, truth)?;
    Ok(RunOutput {
        labels: partition.codes(),
        entry: RunEntry {
            run,
            seed,
            metrics,
            objective_trace: trace,
            iterations,
            converged,
            wall_ms,
            solve_ms: wall_ms - bp_ms.unwrap_or(0.0),
            bp_ms,
        },
    })
}

/// Relabels the smallest cluster (lowest id on ties) as outliers and
/// renumbers the rest in order.
pub fn smallest_cluster_as_outliers(p: &LabeledPartition) -> LabeledPartition {
    let sizes = p.cluster_sizes();
    let smallest = (0..sizes.len()).min_by_key(|&c| (sizes[c], c)).unwrap_or(0);
    let assignments = p
        .assignments()
        .iter()
        .map(|a| match *a {
            Assignment::Cluster(c) if c == smallest => Assignment::Outlier,
            Assignment::Cluster(c) if c > smallest => Assignment::Cluster(c - 1),
            other => other,
        })
        .collect();
    LabeledPartition::new(assignments, p.k().saturating_sub(1)).expect("ids shifted below k - 1")
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_config(runs: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DatasetSource::Synth(SynthParams {
            n_per_cluster: 30,
            k: 3,
            d: 2,
            cluster_sep: 12.0,
            o: 4,
            outlier_scale: 40.0,
            seed: 5,
        }));
        cfg.runs = runs;
        cfg.r = 20;
        cfg
    }

    #[test]
    fn report_has_one_entry_per_run() {
        let out = run_experiment(&synth_config(4)).unwrap();
        assert_eq!(out.report.status, RunStatus::Ok);
        assert_eq!(out.report.runs.len(), 4);
        assert_eq!(out.labels.len(), 4);
        assert_eq!((out.report.k, out.report.o), (3, 4));
        for (i, r) in out.report.runs.iter().enumerate() {
            assert_eq!(r.run, i);
            assert_eq!(r.seed, i as u64);
        }
        let nmis: Vec<f64> = out.report.runs.iter().map(|r| r.metrics.nmi).collect();
        let agg = out.report.aggregate["nmi"];
        let again = MeanStd::of(&nmis);
        assert!((agg.mean - again.mean).abs() <= 1e-12 && (agg.std - again.std).abs() <= 1e-12);
    }

    #[test]
    fn kmeans_baseline_uses_one_extra_cluster() {
        let mut cfg = synth_config(2);
        cfg.method = Method::KmeansBaseline;
        let out = run_experiment(&cfg).unwrap();
        for labels in &out.labels {
            let p = LabeledPartition::from_codes(labels).unwrap();
            assert!(p.n_outliers() > 0);
            assert!(p.k() <= 3);
        }
    }

    #[test]
    fn smallest_cluster_is_relabelled() {
        let p = LabeledPartition::from_codes(&[0, 0, 1, 2, 2, 2, 0]).unwrap();
        let q = LabeledPartition::new(p.assignments().to_vec(), 3).unwrap();
        assert_eq!(smallest_cluster_as_outliers(&q).codes(), vec![0, 0, -1, 1, 1, 1, 0]);
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn config_defaults_and_aliases() {
        let cfg = ExperimentConfig::from_json(
            r#"{"dataset": {"kind": "csv", "path": "x.csv", "label_column": 7}, "method": "KMEANS_BASELINE"}"#,
        )
        .unwrap();
        assert_eq!(cfg.method, Method::KmeansBaseline);
        assert_eq!((cfg.r, cfg.runs, cfg.ratio), (100, 20, 0.5));
        assert!(ExperimentConfig::from_json(r#"{"dataset": {"kind": "csv", "path": "x", "label_column": 0}, "bogus": 1}"#).is_err());
    }

    #[test]
    fn missing_dataset_is_an_error() {
        let cfg = ExperimentConfig::new(DatasetSource::Csv {
            path: "/nonexistent.csv".into(),
            label_column: LabelColumn::Index(0),
            has_header: true,
            n_smallest_classes: 1,
        });
        assert!(run_experiment(&cfg).is_err());
    }
}
