//! `jevdpca` command line: `fit`, `eval`, `benchmark` and `synth`.
//!
//! Exit codes: 0 on success, 1 on I/O or validation errors, 2 when the JEVD
//! update matrix becomes singular. Errors are reported as one `error:` line on
//! standard error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataio::{load_dataset, write_grouped_csv, DatasetConfig, GroupedDataset};
use crate::error::{Error, Result};
use crate::fairpca::{fit_fair_pca, fit_fair_pca_sweep, fit_standard_pca, LoadedModel, Method, ModelDocument};
use crate::jevd::{JevdConfig, JevdStatus, ObjectiveTolerance};
use crate::json::to_string_precise;
use crate::metrics::{evaluate, EvaluationReport};
use crate::synth::{
    make_commuting_family, realize_gram_rows, sample_grouped_gaussian, CommutingFamilySpec,
    GaussianSpec,
};

/// Sensitive column assumed when no `--config` is given.
pub const DEFAULT_GROUP_COLUMN: &str = "group";

#[derive(Debug, Parser)]
#[command(name = "jevdpca", version, about = "Fair PCA through joint eigenvalue decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a fair (jevd) or standard (pca) projection and write the model JSON.
    Fit(FitArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Sweep ranks and methods, writing per-metric tables.
    Benchmark(BenchmarkArgs),
    /// Generate a synthetic grouped CSV plus a ground-truth JSON.
    Synth(SynthArgs),
}

#[derive(Debug, clap::Args)]
struct DataArgs {
    /// CSV file; overrides the path inside --config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct SolverArgs {
    /// Maximum JEVD iterations.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Absolute stopping threshold on the JEVD objective.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    rank: usize,
    #[arg(long, value_enum, default_value_t = Method::Jevd)]
    method: Method,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
    /// Scale features to unit variance after centering.
    #[arg(long)]
    standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArgs,
    /// `1,2,5` or an inclusive range `1..5`; defaults to `1..d-1`.
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Jevd, Method::Pca])]
    methods: Vec<Method>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Dataset name used in the outputs; defaults to the CSV file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    Commuting,
    Gaussian,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    /// Per-group spectra, groups separated by `;`, entries by `,`.
    #[arg(long)]
    spectra: Option<String>,
    /// Frobenius norm of the symmetric perturbation (commuting only).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Copies of each `+-` row pair (commuting only).
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 200)]
    n_per_group: usize,
    /// Leading spectrum entries that carry variance (gaussian only); defaults to dim.
    #[arg(long)]
    r_signal: Option<usize>,
    #[arg(long)]
    shared_basis: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let body: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            let line = body.join(" ");
            eprintln!("error: {}", line.strip_prefix("error: ").unwrap_or(&line));
            return 1;
        }
    };
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: {message}");
            if e.is_solver_abort() {
                2
            } else {
                1
            }
        }
    }
}

fn dataset_config(args: &DataArgs) -> Result<DatasetConfig> {
    let mut config = match &args.config {
        Some(path) => DatasetConfig::from_json_file(path)?,
        None => match &args.data {
            Some(data) => DatasetConfig::new(data, DEFAULT_GROUP_COLUMN),
            None => return Err(Error::InvalidConfig("either --data or --config is required".into())),
        },
    };
    if let Some(data) = &args.data {
        config.path = data.clone();
    }
    Ok(config)
}

fn load(args: &DataArgs, standardize: bool) -> Result<(GroupedDataset, DatasetConfig)> {
    let mut config = dataset_config(args)?;
    config.standardize |= standardize;
    Ok((load_dataset(&config)?, config))
}

fn jevd_config(args: &SolverArgs) -> Result<JevdConfig> {
    let mut config = JevdConfig::default();
    if let Some(max_iter) = args.max_iter {
        config.max_iterations = max_iter;
    }
    if let Some(tol) = args.tol {
        config.objective_tolerance = ObjectiveTolerance::Absolute(tol);
    }
    config.validate()?;
    Ok(config)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let (data, _) = load(&args.data, args.standardize)?;
    let (document, summary) = match args.method {
        Method::Jevd => {
            let config = jevd_config(&args.solver)?;
            let model = fit_fair_pca(&data, args.rank, &config)?;
            let diag = &model.diagnostics;
            let summary = format!(
                "jevd r={} status={} iterations={} final_objective={:e} loss_gap={:e}",
                model.rank,
                diag.status,
                diag.iterations,
                diag.final_objective,
                model.loss_gap()
            );
            (ModelDocument::from(&model), summary)
        }
        Method::Pca => {
            let model = fit_standard_pca(&data, args.rank)?;
            let eigenvalues: Vec<String> = model.explained_spectrum.iter().map(|v| format!("{v:e}")).collect();
            let summary = format!(
                "pca r={} eigenvalues=[{}] loss_gap={:e}",
                model.projection.rank(),
                eigenvalues.join(", "),
                crate::fairpca::spread(&model.per_group_losses)
            );
            (ModelDocument::from(&model), summary)
        }
    };
    write_file(&args.out, &document.to_json()?)?;
    println!("{summary}");
    Ok(())
}

fn read_model(path: &Path) -> Result<LoadedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelDocument::from_json(&text)?.into_model()
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let standardize = model.document.column_scales.iter().any(|&s| s != 1.0);
    let (data, _) = load(&args.data, standardize)?;
    let report = evaluate(&data, &model)?;
    let text = match args.format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.to_csv(),
    };
    match &args.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `1,2,5` or `a..b` (inclusive).
pub fn parse_ranks(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("cannot parse ranks \"{spec}\""));
    let spec = spec.trim();
    let ranks: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        spec.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if ranks.is_empty() || ranks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!(
            "ranks must be nonempty and strictly increasing, got \"{spec}\""
        )));
    }
    Ok(ranks)
}

#[derive(Debug, Clone, Serialize)]
struct MetricTriple {
    reconstruction_error: f64,
    variance_explained: f64,
    mmd_squared: f64,
    loss_gap: f64,
    per_group_losses: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct BenchmarkRow {
    rank: usize,
    methods: BTreeMap<String, MetricTriple>,
}

#[derive(Debug, Clone, Serialize)]
struct SolveSummary {
    status: JevdStatus,
    iterations: usize,
    final_objective: f64,
    orthonormality_defect: f64,
    polar_distance: f64,
}

/// Combined benchmark output: one row per rank, each with every requested method.
#[derive(Debug, Clone, Serialize)]
struct BenchmarkTable {
    dataset_name: String,
    n: usize,
    d: usize,
    groups: Vec<String>,
    standardize: bool,
    /// Reconstruction errors are divided by the number of rows.
    reconstruction_error_normalization: &'static str,
    methods: Vec<String>,
    ranks: Vec<usize>,
    jevd_solve: Option<SolveSummary>,
    rows: Vec<BenchmarkRow>,
}

const METRICS: [(&str, &str); 3] = [("re", "reconstruction_error"), ("ve", "variance_explained"), ("mmd2", "mmd_squared")];

fn metric(report: &EvaluationReport, key: &str) -> f64 {
    match key {
        "re" => report.reconstruction_error_total,
        "ve" => report.variance_explained,
        _ => report.mmd_squared,
    }
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let (data, config) = load(&args.data, args.standardize)?;
    let d = data.d();
    let ranks = match &args.ranks {
        Some(spec) => parse_ranks(spec)?,
        None => (1..d).collect(),
    };
    for &r in &ranks {
        if r == 0 || r >= d {
            return Err(Error::InvalidRank {
                rank: r,
                dim: d,
                bound: "1 ≤ r < d",
            });
        }
    }
    let mut methods: Vec<Method> = Vec::new();
    for m in &args.methods {
        if !methods.contains(m) {
            methods.push(*m);
        }
    }
    let name = args.name.clone().unwrap_or_else(|| {
        config
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let solver = jevd_config(&args.solver)?;

    // reports[method][rank index]
    let mut reports: Vec<Vec<EvaluationReport>> = Vec::new();
    let mut solve = None;
    for method in &methods {
        let column = match method {
            Method::Jevd => {
                let models = fit_fair_pca_sweep(&data, &ranks, &solver)?;
                if let Some(first) = models.first() {
                    let diag = &first.diagnostics;
                    solve = Some(SolveSummary {
                        status: diag.status,
                        iterations: diag.iterations,
                        final_objective: diag.final_objective,
                        orthonormality_defect: diag.orthonormality_defect,
                        polar_distance: diag.polar_distance,
                    });
                }
                models.iter().map(|m| evaluate(&data, m)).collect::<Result<Vec<_>>>()?
            }
            Method::Pca => ranks
                .iter()
                .map(|&r| evaluate(&data, &fit_standard_pca(&data, r)?))
                .collect::<Result<Vec<_>>>()?,
        };
        reports.push(column);
    }

    let names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;

    for (key, _) in METRICS {
        let mut text = format!("rank,{}\n", names.join(","));
        for (i, r) in ranks.iter().enumerate() {
            text.push_str(&r.to_string());
            for column in &reports {
                text.push_str(&format!(",{:?}", metric(&column[i], key)));
            }
            text.push('\n');
        }
        write_file(&args.out_dir.join(format!("{key}.csv")), &text)?;
    }

    let mut header = vec!["rank".to_string()];
    for name in &names {
        for (key, _) in METRICS {
            header.push(format!("{name}_{key}"));
        }
    }
    let mut table = header.join(",") + "\n";
    for (i, r) in ranks.iter().enumerate() {
        table.push_str(&r.to_string());
        for column in &reports {
            for (key, _) in METRICS {
                table.push_str(&format!(",{:?}", metric(&column[i], key)));
            }
        }
        table.push('\n');
    }
    write_file(&args.out_dir.join("table.csv"), &table)?;

    let dataset = csv_field(&name);
    let mut long = String::from("dataset,method,rank,metric,value\n");
    for (method, column) in names.iter().zip(&reports) {
        for (i, r) in ranks.iter().enumerate() {
            for (key, _) in METRICS {
                long.push_str(&format!("{dataset},{method},{r},{key},{:?}\n", metric(&column[i], key)));
            }
        }
    }
    write_file(&args.out_dir.join("long.csv"), &long)?;

    let rows = ranks
        .iter()
        .enumerate()
        .map(|(i, &rank)| BenchmarkRow {
            rank,
            methods: names
                .iter()
                .zip(&reports)
                .map(|(name, column)| {
                    let rep = &column[i];
                    (
                        name.to_string(),
                        MetricTriple {
                            reconstruction_error: rep.reconstruction_error_total,
                            variance_explained: rep.variance_explained,
                            mmd_squared: rep.mmd_squared,
                            loss_gap: rep.loss_gap,
                            per_group_losses: rep.per_group_losses.clone(),
                        },
                    )
                })
                .collect(),
        })
        .collect();
    let summary = BenchmarkTable {
        dataset_name: name.clone(),
        n: data.n(),
        d,
        groups: data.group_names().to_vec(),
        standardize: config.standardize,
        reconstruction_error_normalization: "per_sample",
        methods: names.iter().map(|s| s.to_string()).collect(),
        ranks: ranks.clone(),
        jevd_solve: solve,
        rows,
    };
    write_file(&args.out_dir.join("benchmark.json"), &to_string_precise(&summary)?)?;
    println!(
        "benchmark {}: {} ranks x {} methods written to {}",
        name,
        ranks.len(),
        names.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Parses `a,b;c,d` into one spectrum per group.
pub fn parse_spectra(spec: &str) -> Result<Vec<Vec<f64>>> {
    spec.split(';')
        .map(|group| {
            group
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::InvalidConfig(format!("cannot parse spectrum entry \"{}\"", t.trim())))
                })
                .collect()
        })
        .collect()
}

/// Group `s` gets `1..=d` in descending order, odd groups reversed.
fn default_gaussian_spectra(d: usize, groups: usize) -> Vec<Vec<f64>> {
    (0..groups)
        .map(|s| {
            let mut v: Vec<f64> = (1..=d).rev().map(|i| i as f64).collect();
            if s % 2 == 1 {
                v.reverse();
            }
            v
        })
        .collect()
}

fn sidecar_path(out: &Path) -> Result<PathBuf> {
    let path = out.with_extension("json");
    if path == out {
        return Err(Error::InvalidConfig(format!(
            "--out {} would collide with its ground-truth JSON",
            out.display()
        )));
    }
    Ok(path)
}

#[derive(Debug, Serialize)]
struct CommutingTruth {
    kind: &'static str,
    dim: usize,
    groups: usize,
    seed: u64,
    noise_level: f64,
    repeats: usize,
    rows_per_group: usize,
    spectra: Vec<Vec<f64>>,
    /// Column-major `d x d` planted eigenvector matrix.
    basis: Vec<f64>,
    /// Per-group `X^T X / n` of the written rows.
    grams: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct GaussianTruth {
    kind: &'static str,
    #[serde(flatten)]
    spec: GaussianSpec,
    /// Column-major `d x d` covariance eigenvectors per group.
    bases: Vec<Vec<f64>>,
}

fn feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let sidecar = sidecar_path(&args.out)?;
    let (raw, labels, truth) = match args.kind {
        SynthKind::Commuting => {
            let mut spec = CommutingFamilySpec::random(args.dim, args.groups, args.seed);
            if let Some(text) = &args.spectra {
                spec.spectra = parse_spectra(text)?;
            }
            spec.noise_level = args.noise;
            if spec.spectra.iter().flatten().any(|v| *v < 0.0) {
                return Err(Error::InvalidConfig("commuting spectra must be nonnegative".into()));
            }
            if args.repeats == 0 {
                return Err(Error::InvalidConfig("--repeats must be at least 1".into()));
            }
            let family = make_commuting_family(&spec)?;
            let (raw, labels) = realize_gram_rows(&family.matrices, args.repeats);
            let truth = CommutingTruth {
                kind: "commuting",
                dim: spec.dimension,
                groups: spec.groups,
                seed: spec.seed,
                noise_level: spec.noise_level,
                repeats: args.repeats,
                rows_per_group: 2 * spec.dimension * args.repeats,
                spectra: spec.spectra.clone(),
                basis: family.basis.as_slice().to_vec(),
                grams: family.matrices.iter().map(|m| m.as_slice().to_vec()).collect(),
            };
            (raw, labels, to_string_precise(&truth)?)
        }
        SynthKind::Gaussian => {
            let group_spectra = match &args.spectra {
                Some(text) => parse_spectra(text)?,
                None => default_gaussian_spectra(args.dim, args.groups),
            };
            let spec = GaussianSpec {
                dim: args.dim,
                r_signal: args.r_signal.unwrap_or(args.dim),
                group_spectra,
                shared_basis: args.shared_basis,
                n_per_group: args.n_per_group,
                seed: args.seed,
            };
            let sample = sample_grouped_gaussian(&spec)?;
            let truth = GaussianTruth {
                kind: "gaussian",
                bases: sample.bases.iter().map(|b: &DMatrix<f64>| b.as_slice().to_vec()).collect(),
                spec,
            };
            (sample.raw, sample.labels, to_string_precise(&truth)?)
        }
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_grouped_csv(&args.out, &raw, &labels, &feature_names(raw.ncols()), DEFAULT_GROUP_COLUMN)?;
    write_file(&sidecar, &truth)?;
    println!(
        "synth {}: {} rows x {} features written to {}",
        match args.kind {
            SynthKind::Commuting => "commuting",
            SynthKind::Gaussian => "gaussian",
        },
        raw.nrows(),
        raw.ncols(),
        args.out.display()
    );
    Ok(())
}
