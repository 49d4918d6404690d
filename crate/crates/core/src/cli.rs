//! The `ga-ensemble` command line.
//!
//! Exit codes: 0 success, 2 configuration/validation, 3 data consistency, 4 I/O.
//! Every failure prints one `error[CODE]: ...` line to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::corpus::{self, ClassCountTable, CorpusFormat, OovUnit};
use crate::ensemble::{argmax_labels, LabelSet};
use crate::error::{Error, Result};
use crate::ga::{apply_named_weights, evolve, GaConfig};
use crate::io;
use crate::manifest::{LoadedManifest, ModelEntry, PredictionKind, RunManifest};
use crate::metrics::{format_score, full_report, Metric};
use crate::oracle::{grid_result, GridSpec, DEFAULT_GRID_CAP};
use crate::synth::{self, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "ga-ensemble",
    version,
    about = "Genetic-algorithm weighting of classifier ensembles, F1 evaluation and corpus statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every split of a manifest for probability and id-coverage problems.
    Validate { manifest: PathBuf },
    /// Search ensemble weights on one split with the genetic algorithm.
    Optimize(OptimizeArgs),
    /// Exhaustive simplex grid search (reference for small pools).
    Grid(GridArgs),
    /// Apply optimized weights to a split and write the ensemble predictions.
    Apply(ApplyArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Class counts per split and, with a vocabulary, the OOV rate.
    Stats(StatsArgs),
    /// Write a synthetic run directory (manifest, gold labels, model predictions).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SelectionArgs {
    pub manifest: PathBuf,
    #[arg(long, default_value = "dev")]
    pub split: String,
    #[arg(long, default_value = "weighted_f1")]
    pub metric: String,
    /// Model set tag to optimize; `overall` or `all` uses every model.
    #[arg(long = "set", default_value = "overall")]
    pub set: String,
    /// Worker threads for fitness evaluation (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Result JSON path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long, default_value_t = 50)]
    pub population: usize,
    #[arg(long, default_value_t = 100)]
    pub generations: usize,
    #[arg(long, default_value_t = 3)]
    pub tournament: usize,
    #[arg(long, default_value_t = 0.9)]
    pub crossover_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub mutation_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mutation_sigma: f64,
    #[arg(long, default_value_t = 2)]
    pub elitism: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    /// Refuse grids with more points than this.
    #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
    pub cap: u128,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    pub result: PathBuf,
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Ensemble probability CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Hard prediction CSV (`id,label`); defaults to `<out stem>.labels.csv`.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Probability CSV or `id,label` CSV.
    pub predictions: PathBuf,
    /// Gold `id,label` CSV.
    pub gold: PathBuf,
    /// Comma-separated label set, in column order.
    #[arg(long, value_delimiter = ',', conflicts_with = "manifest")]
    pub labels: Option<Vec<String>>,
    /// Take the label set from a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus files (`text<TAB>label`); each becomes a column named after its file stem.
    #[arg(required = true)]
    pub corpus: Vec<PathBuf>,
    /// Reference vocabulary, one entry per line.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// OOV over token occurrences instead of distinct types.
    #[arg(long)]
    pub count_tokens: bool,
    #[arg(long, default_value = "tsv")]
    pub format: String,
    /// Comma-separated label set; defaults to the six shared-task labels.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub models: usize,
    #[arg(long)]
    pub classes: usize,
    /// Examples per split.
    #[arg(long)]
    pub examples: usize,
    /// One accuracy per model, or a single value for all.
    #[arg(long, value_delimiter = ',')]
    pub accuracies: Vec<f64>,
    /// One set tag per model; defaults cycle Transformers, F-models, R-models.
    #[arg(long, value_delimiter = ',')]
    pub tags: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let _ = writeln!(err, "error[2]: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match run(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace(['\n', '\r'], " ");
            let _ = writeln!(err, "error[{}]: {line}", e.exit_code());
            e.exit_code()
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Validate { manifest } => cmd_validate(&manifest, out),
        Command::Optimize(args) => cmd_optimize(&args, out),
        Command::Grid(args) => cmd_grid(&args, out),
        Command::Apply(args) => cmd_apply(&args, out),
        Command::Eval(args) => cmd_eval(&args, out),
        Command::Stats(args) => cmd_stats(&args, out, err),
        Command::Synth(args) => cmd_synth(&args, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_validate(manifest: &Path, out: &mut dyn Write) -> Result<()> {
    let loaded = LoadedManifest::load(manifest)?;
    let mut first_failure = None;
    for split in loaded.manifest.splits.keys() {
        let report = loaded.validate_split(split)?;
        if report.passed() {
            emit(out, &format!("split {split}: {} models OK\n", report.models_checked))?;
        } else {
            emit(
                out,
                &format!("split {split}: {} problem(s)\n", report.diagnostics.len()),
            )?;
            for d in &report.diagnostics {
                emit(out, &format!("  {d}\n"))?;
            }
            first_failure.get_or_insert_with(|| format!("split {split}: {}", report.diagnostics[0]));
        }
    }
    match first_failure {
        None => Ok(()),
        Some(msg) => Err(Error::data(format!("validation failed: {msg}"))),
    }
}

struct Selected {
    pool: crate::ensemble::ModelPool,
    gold: crate::ensemble::GoldLabels,
    metric: Metric,
}

fn load_selection(args: &SelectionArgs) -> Result<Selected> {
    let metric: Metric = args.metric.parse()?;
    let loaded = LoadedManifest::load(&args.manifest)?;
    let gold = loaded.gold(&args.split)?;
    let pool = loaded.pool(&args.split)?;
    let report = crate::ensemble::validate_pool(&pool, &gold);
    if let Some(d) = report.diagnostics.first() {
        return Err(Error::data(format!("split {}: {d}", args.split)));
    }
    let pool = pool.select_set(&args.set)?;
    Ok(Selected { pool, gold, metric })
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn summary(
    out: &mut dyn Write,
    metric: Metric,
    split: &str,
    names: &[String],
    weights: &[f64],
    singles: &[f64],
    uniform: f64,
    best: f64,
) -> Result<()> {
    let width = names.iter().map(|n| n.chars().count()).max().unwrap_or(5).max(7);
    let mut text = format!("{:<width$}  {:>10}  {:>10}\n", "model", "weight", "single");
    for ((n, w), s) in names.iter().zip(weights).zip(singles) {
        text += &format!("{n:<width$}  {:>10}  {:>10}\n", format_score(*w), format_score(*s));
    }
    text += &format!("uniform average {split} {metric}: {}\n", format_score(uniform));
    text += &format!("ensemble {split} {metric}: {} ({best})\n", format_score(best));
    emit(out, &text)
}

fn write_or_print(path: Option<&Path>, json: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => io::write_text(p, json),
        None => emit(out, json),
    }
}

pub fn cmd_optimize(args: &OptimizeArgs, out: &mut dyn Write) -> Result<()> {
    let sel = load_selection(&args.selection)?;
    let config = GaConfig {
        population_size: args.population,
        generations: args.generations,
        tournament_size: args.tournament,
        crossover_rate: args.crossover_rate,
        mutation_rate: args.mutation_rate,
        mutation_sigma: args.mutation_sigma,
        elitism: args.elitism,
        patience: args.patience,
        seed: args.seed,
        metric: sel.metric,
    };
    let result = with_workers(args.selection.workers, || evolve(&sel.pool, &sel.gold, &config))??;
    write_or_print(args.selection.out.as_deref(), &result.to_json(), out)?;
    if args.selection.out.is_some() {
        summary(
            out,
            sel.metric,
            &args.selection.split,
            &result.model_names,
            &result.weights,
            &result.singles,
            result.uniform_fitness,
            result.dev_fitness,
        )?;
        emit(out, &format!("generations run: {}\n", result.log.len() - 1))?;
    }
    Ok(())
}

pub fn cmd_grid(args: &GridArgs, out: &mut dyn Write) -> Result<()> {
    let sel = load_selection(&args.selection)?;
    let spec = GridSpec::from_step(args.step, sel.pool.len())?;
    let result = with_workers(args.selection.workers, || {
        grid_result(&sel.pool, &sel.gold, sel.metric, spec, args.cap)
    })??;
    write_or_print(args.selection.out.as_deref(), &result.to_json(), out)?;
    if args.selection.out.is_some() {
        summary(
            out,
            sel.metric,
            &args.selection.split,
            &result.model_names,
            &result.weights,
            &result.singles,
            result.uniform_fitness,
            result.dev_fitness,
        )?;
    }
    Ok(())
}

/// The part of a result file `apply` needs; accepts genetic and grid results alike.
#[derive(Debug, Deserialize)]
struct WeightsFile {
    weights: Vec<f64>,
    model_names: Vec<String>,
}

fn default_labels_out(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.labels.csv"))
}

pub fn cmd_apply(args: &ApplyArgs, out: &mut dyn Write) -> Result<()> {
    let text = io::read_text(&args.result)?;
    let file: WeightsFile = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: invalid result file: {e}", args.result.display())))?;
    let loaded = LoadedManifest::load(&args.manifest)?;
    for name in &file.model_names {
        if !loaded.manifest.models.iter().any(|m| &m.name == name) {
            return Err(Error::data(format!("model '{name}' from the result is not in the manifest")));
        }
    }
    let pool = loaded.pool(&args.split)?;
    let keep: Vec<usize> = pool
        .models()
        .iter()
        .enumerate()
        .filter(|(_, m)| file.model_names.iter().any(|n| n == m.model_name()))
        .map(|(i, _)| i)
        .collect();
    let pool = crate::ensemble::ModelPool::new(
        keep.iter().map(|&i| pool.models()[i].clone()).collect(),
        pool.set_tags().clone(),
    )?;
    if let Some(d) = pool.models().iter().flat_map(|m| m.diagnose()).next() {
        return Err(Error::data(format!("split {}: {d}", args.split)));
    }
    let ensemble = apply_named_weights(&file.model_names, &file.weights, &pool)?;
    let labels = loaded.labels();
    io::write_text(&args.out, &io::predictions_to_csv(&ensemble, labels))?;
    let labels_out = args.labels_out.clone().unwrap_or_else(|| default_labels_out(&args.out));
    io::write_text(&labels_out, &io::labels_to_csv(&argmax_labels(&ensemble), labels))?;
    emit(
        out,
        &format!(
            "wrote {} ensemble rows to {} and {}\n",
            ensemble.len(),
            args.out.display(),
            labels_out.display()
        ),
    )
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let labels = match (&args.labels, &args.manifest) {
        (Some(names), _) => LabelSet::new(names)?,
        (None, Some(m)) => LoadedManifest::load(m)?.labels().clone(),
        (None, None) => LabelSet::canonical(),
    };
    let gold = io::read_labels(&args.gold, &labels)?;
    let pred = io::read_class_predictions(&args.predictions, &labels)?;
    let report = full_report(&gold, &pred, &labels)?;
    if args.json {
        emit(out, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))
    } else {
        emit(out, &report.to_text())
    }
}

fn split_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn cmd_stats(args: &StatsArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let format = match args.format.to_ascii_lowercase().as_str() {
        "tsv" => CorpusFormat::Tsv,
        "csv" => CorpusFormat::Csv,
        other => return Err(Error::config(format!("unknown corpus format '{other}'"))),
    };
    let labels = match &args.labels {
        Some(names) => LabelSet::new(names)?,
        None => LabelSet::canonical(),
    };
    let mut table = ClassCountTable::new(&labels);
    let mut all_records = Vec::new();
    for path in &args.corpus {
        let loaded = corpus::load_corpus(path, format, &labels)?;
        let mut unknown: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
        for u in &loaded.unknown_labels {
            unknown.entry(u.label.as_str()).or_insert((u.line, 0)).1 += 1;
        }
        for (label, (line, count)) in unknown {
            let _ = writeln!(
                err,
                "warning: {}: unknown label '{label}' on {count} row(s), first at line {line}",
                path.display()
            );
        }
        table.add_split(split_name(path), &loaded.records, &labels);
        all_records.extend(loaded.records);
    }
    let oov = match &args.vocab {
        Some(v) => {
            let vocab = corpus::load_vocabulary(v)?;
            let unit = if args.count_tokens { OovUnit::Tokens } else { OovUnit::Types };
            Some(corpus::oov_rate(&all_records, &vocab, unit)?)
        }
        None => None,
    };
    if args.json {
        let value = serde_json::json!({ "class_counts": table, "oov": oov });
        emit(out, &(serde_json::to_string_pretty(&value).expect("stats serialize") + "\n"))
    } else {
        let mut text = table.to_text();
        if let Some(r) = oov {
            let unit = match r.unit {
                OovUnit::Types => "types",
                OovUnit::Tokens => "tokens",
            };
            text += &format!(
                "\nOOV {unit}: {} / {} = {:.2}% (vocabulary {} entries)\n",
                r.oov,
                r.total,
                100.0 * r.oov_rate,
                r.vocabulary_size
            );
        }
        emit(out, &text)
    }
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let accuracies = match args.accuracies.len() {
        0 => vec![0.7; args.models],
        1 => vec![args.accuracies[0]; args.models],
        n if n == args.models => args.accuracies.clone(),
        n => {
            return Err(Error::config(format!(
                "{n} accuracies given for {} models",
                args.models
            )))
        }
    };
    if args.models == 0 {
        return Err(Error::config("--models must be at least 1"));
    }
    let tags: Vec<String> = match &args.tags {
        Some(t) if t.len() == args.models => t.clone(),
        Some(t) => {
            return Err(Error::config(format!("{} tags given for {} models", t.len(), args.models)))
        }
        None => (0..args.models)
            .map(|m| synth::DEFAULT_SET_TAGS[m % synth::DEFAULT_SET_TAGS.len()].to_string())
            .collect(),
    };
    let base = SynthSpec::new(args.seed, args.examples, args.classes, accuracies);
    let label_names: Vec<String> = (0..args.classes).map(|c| format!("class_{c}")).collect();

    let mut splits = BTreeMap::new();
    let mut predictions: Vec<BTreeMap<String, PathBuf>> = vec![BTreeMap::new(); args.models];
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for (stream, split) in ["dev", "test"].into_iter().enumerate() {
        let (pool, gold) = synth::synth_generate(&base.clone().with_split(split, stream as u64))?;
        let labels = LabelSet::new(&label_names)?;
        let gold_file = PathBuf::from(format!("{split}_gold.csv"));
        files.push((gold_file.clone(), io::labels_to_csv(&gold, &labels)));
        splits.insert(split.to_string(), gold_file);
        for (m, matrix) in pool.models().iter().enumerate() {
            let file = PathBuf::from(format!("{}_{split}.csv", matrix.model_name()));
            files.push((file.clone(), io::predictions_to_csv(matrix, &labels)));
            predictions[m].insert(split.to_string(), file);
        }
    }
    let manifest = RunManifest {
        label_set: label_names,
        splits,
        models: predictions
            .into_iter()
            .enumerate()
            .map(|(m, predictions)| ModelEntry {
                name: synth::model_name(m),
                set_tag: Some(tags[m].clone()),
                kind: PredictionKind::Probabilities,
                predictions,
            })
            .collect(),
    };
    files.push((PathBuf::from("manifest.json"), manifest.to_json()));
    for (file, text) in &files {
        io::write_text(&args.out.join(file), text)?;
    }
    emit(
        out,
        &format!(
            "wrote {} files to {} (manifest: {})\n",
            files.len(),
            args.out.display(),
            args.out.join("manifest.json").display()
        ),
    )
}
