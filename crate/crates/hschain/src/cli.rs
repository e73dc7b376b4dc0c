//! Command-line surface: `gen`, `fit`, `score`, `eval`, `stream`.
//!
//! Config precedence: flags override config-file values override defaults.
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 internal.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bench;
use crate::chain::fit_ensemble;
use crate::config::RunConfig;
use crate::data::{
    parse_dense_csv, parse_sparse_kv, write_dense_csv, write_sparse_kv, CsvOptions, DatasetSchema,
    FeatureKind, Name, SparsePoint,
};
use crate::engine::{Engine, PartitionedDataset};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::model::{read_model, write_model};
use crate::projector::HashProjector;
use crate::scoring::{rank_and_label, score_ensemble, write_scores_tsv, ScoreRecord};
use crate::streaming::run_stream;

#[derive(Parser, Debug)]
#[command(name = "hschain", version, about = "Data-parallel outlier detection with half-space chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labeled benchmark dataset
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Fit an ensemble model and write it to disk
    Fit(FitArgs),
    /// Score a dataset against a fitted model
    Score(ScoreArgs),
    /// Compute ranking metrics from a score file and ground-truth labels
    Eval(EvalArgs),
    /// Score update triples from a stream against a fitted model
    Stream(StreamArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum DataFormat {
    Dense,
    Sparse,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// Input dataset path
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "dense")]
    pub format: DataFormat,
    /// Dense format: first row is a header
    #[arg(long)]
    pub has_header: bool,
    /// Dense format: header column holding point ids
    #[arg(long)]
    pub id_col: Option<String>,
    /// Dense format: header column holding 0/1 labels
    #[arg(long)]
    pub label_col: Option<String>,
    /// Dense format: comma-separated categorical column names
    #[arg(long, value_delimiter = ',')]
    pub cat_cols: Vec<String>,
}

impl InputArgs {
    fn load(&self, engine: &Engine, partitions: usize) -> Result<PartitionedDataset<SparsePoint>> {
        match self.format {
            DataFormat::Sparse => parse_sparse_kv(engine, &self.input, partitions),
            DataFormat::Dense => {
                let schema = self.dense_schema()?;
                let opts = CsvOptions {
                    has_header: self.has_header,
                    id_col: self.id_col.clone(),
                    label_col: self.label_col.clone(),
                };
                parse_dense_csv(engine, &self.input, &schema, &opts, partitions)
            }
        }
    }

    /// Dense schema from the header (minus id/label columns), or positional
    /// names f0..f{arity-1} for headerless files. Columns listed in
    /// --cat-cols are categorical, everything else real.
    fn dense_schema(&self) -> Result<DatasetSchema> {
        let file = File::open(&self.input).map_err(|e| Error::io(&self.input, e))?;
        let first = BufReader::new(file)
            .lines()
            .next()
            .transpose()
            .map_err(|e| Error::io(&self.input, e))?
            .ok_or_else(|| Error::EmptyDataset(self.input.display().to_string()))?;
        let first = first.trim_end_matches('\r');
        let names: Vec<String> = if self.has_header {
            first
                .split(',')
                .filter(|c| {
                    self.id_col.as_deref() != Some(*c) && self.label_col.as_deref() != Some(*c)
                })
                .map(str::to_string)
                .collect()
        } else {
            if self.id_col.is_some() || self.label_col.is_some() {
                return Err(Error::Config("id/label columns require a header row".into()));
            }
            (0..first.split(',').count()).map(|i| format!("f{i}")).collect()
        };
        let features = names
            .into_iter()
            .map(|n| {
                let kind = if self.cat_cols.contains(&n) {
                    FeatureKind::Categorical
                } else {
                    FeatureKind::Real
                };
                (Name::from(n), kind)
            })
            .collect();
        DatasetSchema::new(features)
    }
}

#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// Config file of key=value lines
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Projection dimension K
    #[arg(short = 'k', long)]
    pub k: Option<usize>,
    /// Ensemble size M
    #[arg(long)]
    pub chains: Option<usize>,
    /// Chain depth L
    #[arg(long)]
    pub levels: Option<usize>,
    /// Count-min sketch rows r
    #[arg(long)]
    pub rows: Option<usize>,
    /// Count-min sketch columns w
    #[arg(long)]
    pub cols: Option<usize>,
    /// Bernoulli subsampling rate for fitting
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Outlier fraction used to binarize the ranking
    #[arg(long)]
    pub contamination: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub partitions: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = self.k {
            cfg.projection_dims = v;
        }
        if let Some(v) = self.chains {
            cfg.chains = v;
        }
        if let Some(v) = self.levels {
            cfg.levels = v;
        }
        if let Some(v) = self.rows {
            cfg.cms_rows = v;
        }
        if let Some(v) = self.cols {
            cfg.cms_cols = v;
        }
        if let Some(v) = self.sample_rate {
            cfg.sample_rate = v;
        }
        if let Some(v) = self.contamination {
            cfg.contamination = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.run_seed = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = self.partitions {
            cfg.partitions = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
pub enum GenKind {
    /// Mixture benchmark: fit a diagonal GMM to source inliers, then sample
    /// with inflated variances on 10% of the features for outliers
    Gmm {
        #[arg(long)]
        out: PathBuf,
        /// JSON sidecar echoing the generator parameters
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long, default_value_t = 40_000)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        d: usize,
        #[arg(long, default_value_t = 0.1)]
        outlier_frac: f64,
        #[arg(long, default_value_t = 0.1)]
        feature_frac: f64,
        #[arg(long, default_value_t = 5.0)]
        variance_factor: f64,
        /// Mixture components for the EM fit
        #[arg(long, default_value_t = 5)]
        components: usize,
        #[arg(long, default_value_t = 25)]
        em_iters: usize,
        /// Synthetic source inliers to fit the mixture to
        #[arg(long, default_value_t = 3500)]
        source_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "dense")]
        format: DataFormat,
    },
    /// 2-d clustered inliers with outliers injected into isolated grid cells
    Grid {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        inliers: usize,
        #[arg(long, default_value_t = 1000)]
        outliers: usize,
        #[arg(long, default_value_t = 0.01)]
        cell_size: f64,
        #[arg(long, default_value_t = 8)]
        clusters: usize,
        #[arg(long, default_value_t = 50.0)]
        extent: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        /// Grid bounds min_x,max_x,min_y,max_y (default: data bbox + 1 cell)
        #[arg(long)]
        bounds: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output model file
    #[arg(long)]
    pub model: PathBuf,
    /// JSON fit report (timings, bytes shuffled, sampled counts)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Fitted model file
    #[arg(long)]
    pub model: PathBuf,
    /// Output TSV (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Score TSV produced by `score`
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// Also report F1 at this assumed outlier fraction
    #[arg(long)]
    pub contamination: Option<f64>,
    /// Metrics JSON output (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StreamArgs {
    /// Fitted model file
    #[arg(long)]
    pub model: PathBuf,
    /// LRU sketch cache capacity N
    #[arg(long, default_value_t = 1000)]
    pub cache_size: usize,
    /// Update triples, one per line (stdin if omitted)
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { kind } => cmd_gen(kind),
        Command::Fit(args) => cmd_fit(args),
        Command::Score(args) => cmd_score(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Stream(args) => cmd_stream(args),
    }
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json serialize");
    match path {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen(kind: GenKind) -> Result<()> {
    match kind {
        GenKind::Gmm {
            out,
            sidecar,
            n,
            d,
            outlier_frac,
            feature_frac,
            variance_factor,
            components,
            em_iters,
            source_n,
            seed,
            format,
        } => {
            let source_spec = bench::synth_source_spec(d, components, derive_seed(seed, 1));
            let (source, _) =
                bench::sample_gmm_benchmark(&source_spec, source_n, 0.0, 1.0, 1.0, derive_seed(seed, 3))?;
            let source_rows: Vec<Vec<f64>> = source.into_iter().map(|(row, _)| row).collect();
            let spec = bench::fit_diag_gmm(&source_rows, components, em_iters, derive_seed(seed, 4))?;
            let (rows, inflated) =
                bench::sample_gmm_benchmark(&spec, n, outlier_frac, feature_frac, variance_factor, derive_seed(seed, 5))?;
            let points = bench::rows_to_points(&rows)?;
            match format {
                DataFormat::Dense => {
                    let schema =
                        DatasetSchema::all_real((0..d).map(|i| format!("f{i}")))?;
                    write_dense_csv(&out, &schema, points.iter(), true)?;
                }
                DataFormat::Sparse => write_sparse_kv(&out, points.iter())?,
            }
            let params = json!({
                "kind": "gmm",
                "n": n,
                "d": d,
                "outlier_frac": outlier_frac,
                "feature_frac": feature_frac,
                "variance_factor": variance_factor,
                "components": components,
                "em_iters": em_iters,
                "source_n": source_n,
                "seed": seed,
                "inflated_features": inflated,
                "out": out.display().to_string(),
            });
            write_json(sidecar.as_deref(), &params)
        }
        GenKind::Grid {
            out,
            sidecar,
            inliers,
            outliers,
            cell_size,
            clusters,
            extent,
            spread,
            bounds,
            seed,
        } => {
            let bounds = bounds.map(|s| parse_bounds(&s)).transpose()?;
            let base = bench::clustered_inliers(inliers, clusters, extent, spread, derive_seed(seed, 1));
            let labeled =
                bench::inject_grid_outliers(&base, outliers, cell_size, bounds, derive_seed(seed, 2))?;
            let rows: Vec<(Vec<f64>, bool)> =
                labeled.iter().map(|((x, y), l)| (vec![*x, *y], *l)).collect();
            let points = bench::rows_to_points(&rows)?;
            let schema = DatasetSchema::all_real(vec!["f0".into(), "f1".into()])?;
            write_dense_csv(&out, &schema, points.iter(), true)?;
            let params = json!({
                "kind": "grid",
                "inliers": inliers,
                "outliers": outliers,
                "cell_size": cell_size,
                "clusters": clusters,
                "extent": extent,
                "spread": spread,
                "seed": seed,
                "out": out.display().to_string(),
            });
            write_json(sidecar.as_deref(), &params)
        }
    }
}

fn parse_bounds(s: &str) -> Result<bench::GridBounds> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad bounds {s:?}; expected min_x,max_x,min_y,max_y")))?;
    if parts.len() != 4 {
        return Err(Error::Config(format!("bad bounds {s:?}; expected 4 numbers")));
    }
    Ok(bench::GridBounds { min_x: parts[0], max_x: parts[1], min_y: parts[2], max_y: parts[3] })
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let engine = Engine::new(cfg.threads)?;
    let points = args.input.load(&engine, cfg.effective_partitions())?;
    if points.is_empty() {
        return Err(Error::EmptyDataset(args.input.input.display().to_string()));
    }
    let projector = HashProjector::new(cfg.projection_dims);
    let sketches = engine.map(&points, "project", |p| projector.project(p));
    drop(points);
    let (model, summary) = fit_ensemble(&engine, &sketches, &cfg)?;
    write_model(&args.model, &model)?;
    let report = json!({
        "points": summary.points,
        "sampled_per_chain": summary.sampled_per_chain,
        "config": {
            "k": cfg.projection_dims,
            "chains": cfg.chains,
            "levels": cfg.levels,
            "rows": cfg.cms_rows,
            "cols": cfg.cms_cols,
            "sample_rate": cfg.sample_rate,
            "seed": cfg.run_seed,
            "threads": cfg.threads,
            "partitions": cfg.effective_partitions(),
        },
        "engine": engine.metrics_json(),
        "model": args.model.display().to_string(),
    });
    if let Some(path) = &args.report {
        write_json(Some(path), &report)?;
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let model = read_model(&args.model)?;
    if let Some(k) = args.config.k {
        if k != model.projection_dims {
            return Err(Error::Data(format!(
                "model has K={}, requested K={k}",
                model.projection_dims
            )));
        }
    }
    let engine = Engine::new(cfg.threads)?;
    let points = args.input.load(&engine, cfg.effective_partitions())?;
    let projector = HashProjector::with_seeds(model.projector_seeds.clone());
    let sketches = engine.map(&points, "project", |p| projector.project(p));
    drop(points);
    let model = Arc::new(model);
    let scored = score_ensemble(&engine, &sketches, &model)?;
    let mut records: Vec<ScoreRecord> = scored.iter().cloned().collect();
    if let Some(c) = cfg.contamination {
        let labels = rank_and_label(&records, c)?;
        for (r, l) in records.iter_mut().zip(labels) {
            r.label = Some(l);
        }
    }
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            write_scores_tsv(&mut w, records.iter()).map_err(|e| Error::io(path, e))?;
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        None => {
            let stdout = std::io::stdout();
            write_scores_tsv(stdout.lock(), records.iter()).map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn read_scores_tsv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if !line.starts_with("id\tscore\toutlierness") {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    msg: "missing score header".into(),
                });
            }
            continue;
        }
        let mut cols = line.split('\t');
        let bad = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: msg.into(),
        };
        let id = cols.next().ok_or_else(|| bad("missing id"))?.to_string();
        let score: f64 = cols
            .next()
            .ok_or_else(|| bad("missing score"))?
            .parse()
            .map_err(|_| bad("unparsable score"))?;
        records.push(ScoreRecord { id, score, label: None });
    }
    Ok(records)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let records = read_scores_tsv(&args.scores)?;
    let engine = Engine::new(1)?;
    let points = args.input.load(&engine, 1)?;
    if points.len() != records.len() {
        return Err(Error::Data(format!(
            "{} scores but {} labeled points",
            records.len(),
            points.len()
        )));
    }
    let labels: Vec<bool> = points
        .iter()
        .map(|p| {
            p.label().map(|l| l == 1).ok_or_else(|| {
                Error::Data(format!("point {:?} has no ground-truth label", p.id()))
            })
        })
        .collect::<Result<_>>()?;
    let outlierness: Vec<f64> = records.iter().map(|r| r.outlierness()).collect();
    let auroc = bench::auroc(&outlierness, &labels)?;
    let auprc = bench::auprc(&outlierness, &labels)?;
    let mut metrics = json!({ "auroc": auroc, "auprc": auprc, "n": labels.len() });
    if let Some(c) = args.contamination {
        let predicted = rank_and_label(&records, c)?;
        metrics["f1"] = json!(bench::f1(&predicted, &labels)?);
        metrics["contamination"] = json!(c);
    }
    write_json(args.out.as_deref(), &metrics)
}

fn cmd_stream(args: StreamArgs) -> Result<()> {
    if args.cache_size == 0 {
        return Err(Error::Config("cache size must be >= 1".into()));
    }
    let model = Arc::new(read_model(&args.model)?);
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    match &args.input {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            run_stream(model, args.cache_size, BufReader::new(file), stdout.lock(), stderr.lock())?;
        }
        None => {
            let stdin = std::io::stdin();
            run_stream(model, args.cache_size, stdin.lock(), stdout.lock(), stderr.lock())?;
        }
    }
    Ok(())
}
