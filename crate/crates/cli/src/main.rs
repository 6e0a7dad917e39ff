use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cor_core::experiment::{run_experiment, DatasetSource, ExperimentConfig, Method, RunStatus, StrategyName};
use cor_core::metrics::evaluate_labels;
use cor_core::partition_space::{generate_bps, write_bps, BpStrategy};
use cor_core::{load_csv, read_labels, synth_blobs, write_csv, write_labels, Assignment, Error, LabelColumn, SynthParams};

#[derive(Parser)]
#[command(name = "cor", version, about = "Clustering with outlier removal over basic-partition ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment and write a JSON report.
    Run(Box<RunArgs>),
    /// Generate basic partitions and persist them as CSV plus a JSON sidecar.
    GenBps(GenBpsArgs),
    /// Compare two label files (-1 marks outliers) and print the metrics as JSON.
    Eval(EvalArgs),
    /// Write a synthetic blobs dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cor,
    Kmeans,
    Kmeansmm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cor => Method::Cor,
            MethodArg::Kmeans => Method::KmeansBaseline,
            MethodArg::Kmeansmm => Method::KmeansmmBaseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Rps,
    Rfs,
}

impl From<StrategyArg> for StrategyName {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Rps => StrategyName::Rps,
            StrategyArg::Rfs => StrategyName::Rfs,
        }
    }
}

#[derive(Args)]
struct DatasetArgs {
    /// CSV file with one row per point.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Label column, by zero-based index or header name.
    #[arg(long)]
    label_col: Option<LabelColumn>,
    /// The file has no header row.
    #[arg(long)]
    no_header: bool,
    /// Min-max scale every feature to [0, 1].
    #[arg(long)]
    scale_features: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DatasetArgs,
    /// Number of smallest classes treated as the outlier group.
    #[arg(long)]
    n_smallest: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    o: Option<usize>,
    /// Number of basic partitions.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Feature fraction for the rfs strategy.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Master seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Initializations per COR solve.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Reuse a basic-partition CSV written by `gen-bps`.
    #[arg(long)]
    bps: Option<PathBuf>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-run label files.
    #[arg(long)]
    labels_dir: Option<PathBuf>,
    /// Zero all wall-clock fields in the report.
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args)]
struct GenBpsArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value_t = 100)]
    r: usize,
    /// Target cluster count; each partition draws its own from 2..=2k.
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "rps")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    n_per_cluster: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 10.0)]
    sep: f64,
    #[arg(long, default_value_t = 5)]
    o: usize,
    #[arg(long, default_value_t = 30.0)]
    outlier_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV; the last column `class` holds `c<id>` or `outlier`.
    #[arg(long)]
    out: PathBuf,
    /// Optional ground-truth label file (-1 marks outliers).
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::GenBps(args) => cmd_gen_bps(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ExperimentConfig::from_json(&text)?
        }
        None => {
            let Some(path) = &args.data.dataset else {
                return Err(Error::InvalidArgument("either --config or --dataset is required".into()));
            };
            let Some(label) = &args.data.label_col else {
                return Err(Error::InvalidArgument("--dataset needs --label-col".into()));
            };
            ExperimentConfig::new(DatasetSource::Csv {
                path: path.clone(),
                label_column: label.clone(),
                has_header: true,
                n_smallest_classes: 1,
            })
        }
    };

    if let Some(path) = &args.data.dataset {
        match &mut cfg.dataset {
            DatasetSource::Csv { path: p, .. } => *p = path.clone(),
            DatasetSource::Synth(_) => {
                let Some(label) = &args.data.label_col else {
                    return Err(Error::InvalidArgument("--dataset needs --label-col".into()));
                };
                cfg.dataset = DatasetSource::Csv {
                    path: path.clone(),
                    label_column: label.clone(),
                    has_header: true,
                    n_smallest_classes: 1,
                };
            }
        }
    }
    if let DatasetSource::Csv {
        label_column,
        has_header,
        n_smallest_classes,
        ..
    } = &mut cfg.dataset
    {
        if let Some(label) = &args.data.label_col {
            *label_column = label.clone();
        }
        if args.data.no_header {
            *has_header = false;
        }
        if let Some(n) = args.n_smallest {
            *n_smallest_classes = n;
        }
    } else if args.data.label_col.is_some() || args.data.no_header || args.n_smallest.is_some() {
        return Err(Error::InvalidArgument("dataset flags need a CSV dataset".into()));
    }

    if let Some(m) = args.method {
        cfg.method = m.into();
    }
    if args.k.is_some() {
        cfg.k = args.k;
    }
    if args.o.is_some() {
        cfg.o = args.o;
    }
    if let Some(s) = args.strategy {
        cfg.strategy = s.into();
    }
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() {
                cfg.$field = v;
            })*
        };
    }
    set!(r, ratio, runs, seed, restarts, max_iter, tol, epsilon);
    if args.data.scale_features {
        cfg.scale_features = true;
    }
    if args.bps.is_some() {
        cfg.bps = args.bps.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.labels_dir.is_some() {
        cfg.labels_dir = args.labels_dir.clone();
    }
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let cfg = build_config(&args)?;
    let outcome = run_experiment(&cfg)?;
    if let Some(dir) = &cfg.labels_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (entry, labels) in outcome.report.runs.iter().zip(&outcome.labels) {
            write_labels(dir.join(format!("run_{:03}.csv", entry.run)), labels)?;
        }
    }
    let report = if args.omit_timing {
        outcome.report.without_timing()
    } else {
        outcome.report
    };
    let json = report.to_json()?;
    match &cfg.out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    match report.status {
        RunStatus::Ok => Ok(()),
        RunStatus::Failed => Err(Error::InvalidArgument(format!(
            "{} of {} runs completed: {}",
            report.runs.len(),
            cfg.runs,
            report.error.unwrap_or_default()
        ))),
    }
}

fn cmd_gen_bps(args: GenBpsArgs) -> Result<(), Error> {
    let Some(path) = &args.data.dataset else {
        return Err(Error::InvalidArgument("--dataset is required".into()));
    };
    let (x, _) = load_csv(path, args.data.label_col.as_ref(), !args.data.no_header)?;
    let x = if args.data.scale_features { x.min_max_scaled() } else { x };
    let strategy = match args.strategy {
        StrategyArg::Rps => BpStrategy::Rps,
        StrategyArg::Rfs => BpStrategy::Rfs { ratio: args.ratio },
    };
    let bps = generate_bps(&x, args.r, args.k, strategy, args.seed)?;
    write_bps(&bps, &args.out)?;
    println!("wrote {} basic partitions over {} points to {}", bps.r(), bps.n(), args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let pred = read_labels(&args.pred)?;
    let truth = read_labels(&args.truth)?;
    let report = evaluate_labels(&pred, &truth)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let (x, truth) = synth_blobs(&SynthParams {
        n_per_cluster: args.n_per_cluster,
        k: args.k,
        d: args.d,
        cluster_sep: args.sep,
        o: args.o,
        outlier_scale: args.outlier_scale,
        seed: args.seed,
    })?;
    let names: Vec<String> = truth
        .labels()
        .iter()
        .map(|a| match a {
            Assignment::Cluster(c) => format!("c{c}"),
            Assignment::Outlier => "outlier".to_string(),
        })
        .collect();
    write_csv(&args.out, &x, Some(("class", &names)))?;
    if let Some(path) = &args.truth_out {
        write_labels(path, &truth.partition().codes())?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
