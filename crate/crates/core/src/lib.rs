//! Clustering with outlier removal over a space of basic partitions.
//!
//! The pipeline: load or synthesize a [`DataMatrix`], generate a
//! [`BasicPartitionSet`], encode it in binary, and run K-means-- on the
//! encoding with a cross-entropy distance ([`run_cor`]). [`metrics`] scores
//! the result against a [`GroundTruth`].

pub mod cor;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod kmeans;
pub mod metrics;
pub mod partition_space;

pub use cor::{holoentropy_objective, point_distance, run_cor, run_cor_from_bps, CorConfig, CorResult, KlCentroid};
pub use dataset::{load_csv, prepare_ground_truth, read_labels, synth_blobs, write_csv, write_labels, DataMatrix, GroundTruth, LabelColumn, SynthParams};
pub use error::{Error, Result};
pub use experiment::{run_experiment, DatasetSource, ExperimentConfig, ExperimentOutcome, Method, RunReport, RunStatus, StrategyName};
pub use kmeans::{kmeans, kmeans_minus_minus, Assignment, DistanceKind, Fit, LabeledPartition, LloydParams};
pub use metrics::{evaluate, EvalReport};
pub use partition_space::{concat, encode, generate_bps, read_bps, write_bps, BasicPartitionSet, BinaryEncoding, BpStrategy, ConcatEncoding};
