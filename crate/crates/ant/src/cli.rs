//! The `ant` command line: scripted access to the same pipelines the
//! library exposes — capture ingestion, classifier training, perturbation
//! sweeps, transfer scoring, and report regeneration.
//!
//! Every subcommand records its resolved configuration as `config.json`
//! next to its outputs, prints progress to stderr (silenced by `--quiet`),
//! and produces byte-identical result files when re-run with the same
//! arguments (`run_log.jsonl` is the one exception: it carries wall-clock
//! timings). `ANT_THREADS` caps worker parallelism.
//!
//! Exit codes partition failures: `0` success, `2` unusable request
//! (flags, plans, or parameter combinations that can never work), `3` bad
//! or missing data (files, captures, bundles, models, perturbations), `4`
//! numeric failure during training or perturbation search.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::attacks::{
    load_uap, save_uap, AttackError, BurstPolicy, DummyIndexPolicy, PadLocation, Uap,
};
use crate::eval::{
    clean_test_metrics, experiment_table, log_to_jsonl, metrics_table, prepare, run_experiment,
    run_transfer, train_model, transfer_table, AttackFamily, EvalError, ExperimentOutput,
    ExperimentPlan, ExperimentResult, Variant, VARIANTS,
};
use crate::features::{EncodingKind, FeatureError};
use crate::ingest::{
    ingest_manifest, read_bundle, BackgroundFilter, IngestConfig, IngestError, IngestSummary,
};
use crate::nn::{default_cnn, default_sae, load_model, save_model, NnError, TrainConfig};

// --- entry points -------------------------------------------------------------

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn run() -> i32 {
    run_with(std::env::args_os())
}

/// Same as [`run`] but over explicit arguments (first one is the program
/// name), so tests and embedders can drive the CLI in-process.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    init_thread_pool();
    let progress = Progress { quiet: cli.quiet };
    let outcome = match &cli.command {
        Command::Ingest(args) => cmd_ingest(args, &progress),
        Command::Train(args) => cmd_train(args, &progress),
        Command::Attack(args) => cmd_attack(args, &progress),
        Command::Eval(args) => cmd_eval(args, &progress),
        Command::Transfer(args) => cmd_transfer(args, &progress),
        Command::Report(args) => cmd_report(args, &progress),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

/// Honors `ANT_THREADS` once per process; later calls are no-ops, so test
/// harnesses can invoke [`run_with`] repeatedly.
fn init_thread_pool() {
    static POOL: OnceLock<()> = OnceLock::new();
    POOL.get_or_init(|| {
        if let Ok(raw) = std::env::var("ANT_THREADS") {
            match raw.trim().parse::<usize>() {
                Ok(n) if n >= 1 => {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
                _ => eprintln!("warning: ignoring ANT_THREADS={raw:?} (want a positive integer)"),
            }
        }
    });
}

struct Progress {
    quiet: bool,
}

impl Progress {
    fn say(&self, msg: impl Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

// --- argument grammar ---------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "ant",
    version,
    about = "Probe deep-learning traffic classifiers with universal adversarial perturbations"
)]
struct Cli {
    /// Silence progress output on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse captures from a manifest into a balanced, split flow bundle.
    Ingest(IngestArgs),
    /// Train a classifier on a bundle and score it on the test split.
    Train(TrainArgs),
    /// Sweep one perturbation family against a model and write reports.
    Attack(AttackArgs),
    /// Run an experiment plan file against a model.
    Eval(EvalArgs),
    /// Apply saved perturbations from one model to another.
    Transfer(TransferArgs),
    /// Regenerate report tables from saved experiment results.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// CSV manifest with header `path,label`; capture paths are relative
    /// to the manifest's directory.
    manifest: PathBuf,
    /// Bundle directory to create.
    out_dir: PathBuf,
    /// Flow idle timeout in seconds.
    #[arg(long, default_value_t = 180)]
    timeout_s: u64,
    /// Training flows kept per class (defaults to the median class size).
    #[arg(long)]
    balance_target: Option<usize>,
    /// Keep service noise (DNS/NetBIOS ports, empty payloads) instead of
    /// dropping it before assembly.
    #[arg(long)]
    keep_background: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EncodingName {
    #[value(name = "pc_hp")]
    PcHp,
    #[value(name = "pc_p")]
    PcP,
    #[value(name = "fcc_hp")]
    FccHp,
    #[value(name = "fcc_p")]
    FccP,
    #[value(name = "ftsc_ps")]
    FtscPs,
    #[value(name = "ftsc_iat")]
    FtscIat,
}

impl EncodingName {
    fn to_kind(self, max_pkt_size: usize, n: usize, m: usize) -> EncodingKind {
        match self {
            EncodingName::PcHp => EncodingKind::PcHp { max_pkt_size },
            EncodingName::PcP => EncodingKind::PcP { max_pkt_size },
            EncodingName::FccHp => EncodingKind::FccHp { n, max_pkt_size },
            EncodingName::FccP => EncodingKind::FccP { n, max_pkt_size },
            EncodingName::FtscPs => EncodingKind::FtscPs { m },
            EncodingName::FtscIat => EncodingKind::FtscIat { m },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ArchName {
    /// Two 1-D convolution blocks feeding dense layers.
    Cnn,
    /// Dense encoder stack (stacked-autoencoder shape).
    Sae,
}

#[derive(Args)]
struct TrainArgs {
    /// Bundle directory produced by `ingest`.
    bundle: PathBuf,
    /// Where to write the trained model.
    out_model: PathBuf,
    /// Input encoding the classifier consumes.
    #[arg(long, value_enum)]
    encoding: EncodingName,
    /// Per-packet byte budget (packet and flow-content encodings).
    #[arg(long, default_value_t = 1500)]
    max_pkt_size: usize,
    /// Packets per flow-content window.
    #[arg(long, default_value_t = 10)]
    window_n: usize,
    /// Time-series length (statistical encodings).
    #[arg(long, default_value_t = 100)]
    series_m: usize,
    #[arg(long, value_enum, default_value_t = ArchName::Cnn)]
    arch: ArchName,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f32,
    /// Early-stopping patience in epochs; 0 trains to the horizon.
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AttackName {
    /// Pad packet payloads with adversarial bytes.
    Advpad,
    /// Insert one adversarial dummy packet per flow window.
    Advpay,
    /// Append adversarial dummy packets to one burst per flow.
    Advburst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LocationName {
    Start,
    End,
}

#[derive(Args)]
struct AttackArgs {
    /// Trained model file.
    model: PathBuf,
    /// Bundle directory the experiment draws samples from.
    bundle: PathBuf,
    /// Output directory for perturbations, reports, and logs.
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    attack: AttackName,
    /// Where pad bytes go (advpad).
    #[arg(long, value_enum, default_value_t = LocationName::Start)]
    location: LocationName,
    /// Dummy slot for advpay: `first-forward` or a fixed index ≥ 1.
    #[arg(long, default_value = "first-forward")]
    dummy_index: String,
    /// Burst that receives dummies for advburst: `first-forward`,
    /// `first-backward`, or a 0-based burst index.
    #[arg(long, default_value = "first-forward")]
    burst: String,
    /// Size cap for materialized dummy packets (advburst).
    #[arg(long, default_value_t = 1500)]
    max_dummy_size: usize,
    /// Strength grid to sweep (family default when omitted).
    #[arg(long, value_delimiter = ',')]
    grid: Vec<u32>,
    /// Target classes (default: every class).
    #[arg(long, value_delimiter = ',')]
    classes: Vec<u16>,
    /// Conditions to score: no_attack,adv,rand,adv_port,rand_port,port
    /// (default: every condition the encoding supports).
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    /// Search iterations (family default when omitted).
    #[arg(long)]
    iters: Option<usize>,
    /// Candidate batch per iteration (family default when omitted).
    #[arg(long)]
    batch: Option<usize>,
    /// Ascent step size (family default when omitted).
    #[arg(long)]
    eps: Option<f32>,
    /// Random-baseline draws averaged per measurement.
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained model file.
    model: PathBuf,
    /// Bundle directory the experiment draws samples from.
    bundle: PathBuf,
    /// Output directory for perturbations, reports, and logs.
    out_dir: PathBuf,
    /// Experiment plan (JSON).
    #[arg(long)]
    plan: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    /// Model the perturbations were generated against.
    source_model: PathBuf,
    /// Model to score them on.
    target_model: PathBuf,
    /// Directory holding `*.antu` perturbation files.
    uap_dir: PathBuf,
    /// Bundle directory supplying the test samples.
    bundle: PathBuf,
    /// Output directory.
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved experiment results (`results.json`).
    results: PathBuf,
    /// Output directory for the regenerated tables.
    out_dir: PathBuf,
    /// Only this class (default: one table per class plus the mean).
    #[arg(long)]
    class: Option<u16>,
}

// --- errors and exit codes ------------------------------------------------------

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {1}", .0.display())]
    File(PathBuf, std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::File(..) | CliError::Json(_) => 3,
            CliError::Ingest(e) => ingest_code(e),
            CliError::Eval(e) => eval_code(e),
            CliError::Attack(e) => attack_code(e),
            CliError::Nn(e) => nn_code(e),
            CliError::Feature(e) => feature_code(e),
        }
    }
}

fn ingest_code(e: &IngestError) -> i32 {
    match e {
        IngestError::BadFractions(..) | IngestError::BadTarget => 2,
        _ => 3,
    }
}

fn feature_code(e: &FeatureError) -> i32 {
    match e {
        FeatureError::BadParams(_) | FeatureError::WrongKind { .. } => 2,
        _ => 3,
    }
}

fn nn_code(e: &NnError) -> i32 {
    match e {
        NnError::BadSpec(_)
        | NnError::BadConfig(_)
        | NnError::EncodingMismatch { .. }
        | NnError::ShapeMismatch { .. } => 2,
        NnError::NonFiniteLoss { .. } | NnError::Diverged { .. } => 4,
        _ => 3,
    }
}

fn attack_code(e: &AttackError) -> i32 {
    match e {
        AttackError::BadParams(_)
        | AttackError::EncodingMismatch { .. }
        | AttackError::WrongAttack { .. }
        | AttackError::PortNeedsHeaders(_)
        | AttackError::MissingStats => 2,
        AttackError::PadAlwaysZero => 4,
        AttackError::Feature(f) => feature_code(f),
        AttackError::Nn(n) => nn_code(n),
        _ => 3,
    }
}

fn eval_code(e: &EvalError) -> i32 {
    match e {
        EvalError::BadPlan(_) => 2,
        EvalError::Ingest(i) => ingest_code(i),
        EvalError::Feature(f) => feature_code(f),
        EvalError::Nn(n) => nn_code(n),
        EvalError::Attack(a) => attack_code(a),
        _ => 3,
    }
}

// --- shared io helpers ----------------------------------------------------------

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::File(path.to_path_buf(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::File(path.to_path_buf(), e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::File(path.to_path_buf(), e))
}

fn write_config(dir: &Path, config: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(config)?;
    text.push('\n');
    write_text(&dir.join("config.json"), &text)
}

/// `model.antm` → `model.antm.metrics.csv` and friends.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".");
    os.push(suffix);
    PathBuf::from(os)
}

/// Label → filename fragment.
fn safe_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn uap_file_name(class: u16, strength: u32) -> String {
    format!("uap_class{class}_strength{strength}.antu")
}

// --- ingest ---------------------------------------------------------------------

fn summary_csv(summary: &IngestSummary) -> String {
    let mut out = String::from(
        "class,flows,packets,train_flows,train_flows_balanced,validation_flows,test_flows\n",
    );
    for c in &summary.classes {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.label,
            c.flows,
            c.packets,
            c.train_flows,
            c.train_flows_balanced,
            c.validation_flows,
            c.test_flows
        ));
    }
    out
}

fn cmd_ingest(args: &IngestArgs, progress: &Progress) -> Result<(), CliError> {
    let filter = if args.keep_background {
        BackgroundFilter { drop_ports: BTreeSet::new(), drop_empty_payload: false }
    } else {
        BackgroundFilter::default()
    };
    let config = IngestConfig {
        timeout_us: args.timeout_s.saturating_mul(1_000_000),
        balance_target: args.balance_target,
        seed: args.seed,
        filter: filter.clone(),
        ..IngestConfig::default()
    };
    progress.say(format!("ingesting {}", args.manifest.display()));
    let (bundle, summary) = ingest_manifest(&args.manifest, &args.out_dir, &config)?;
    write_text(&args.out_dir.join("summary.csv"), &summary_csv(&summary))?;
    write_config(
        &args.out_dir,
        &json!({
            "command": "ingest",
            "version": env!("CARGO_PKG_VERSION"),
            "manifest": args.manifest,
            "out_dir": args.out_dir,
            "timeout_us": config.timeout_us,
            "fractions": config.fractions,
            "balance_target": bundle.meta.balance_target,
            "seed": args.seed,
            "filter": {
                "drop_ports": filter.drop_ports,
                "drop_empty_payload": filter.drop_empty_payload,
            },
            "dropped_by_filter": summary.dropped_by_filter,
            "skipped_records": summary.counters.skipped(),
        }),
    )?;
    for c in &summary.classes {
        progress.say(format!(
            "  {}: {} flows ({} packets) -> train {} (balanced {}), validation {}, test {}",
            c.label,
            c.flows,
            c.packets,
            c.train_flows,
            c.train_flows_balanced,
            c.validation_flows,
            c.test_flows
        ));
    }
    progress.say(format!(
        "bundle written to {} ({} packets dropped as background, {} capture records skipped)",
        args.out_dir.display(),
        summary.dropped_by_filter,
        summary.counters.skipped()
    ));
    Ok(())
}

// --- train ------------------------------------------------------------------------

fn cmd_train(args: &TrainArgs, progress: &Progress) -> Result<(), CliError> {
    let kind = args.encoding.to_kind(args.max_pkt_size, args.window_n, args.series_m);
    kind.validate()?;
    let bundle = read_bundle(&args.bundle)?;
    let data = prepare(&bundle)?;
    let spec = match args.arch {
        ArchName::Cnn => default_cnn(kind.len(), data.class_count()),
        ArchName::Sae => default_sae(kind.len(), data.class_count()),
    };
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
        patience: (args.patience > 0).then_some(args.patience),
    };
    progress.say(format!(
        "training {:?} on {} ({} inputs, {} classes, {} epochs)",
        args.arch,
        kind.name(),
        kind.len(),
        data.class_count(),
        config.epochs
    ));
    let model = train_model(&data, &spec, kind, &config)?;
    save_model(&model, &args.out_model)?;
    let metrics = clean_test_metrics(&data, &model)?;
    write_text(&sibling(&args.out_model, "metrics.csv"), &metrics_table(&metrics, &data.labels))?;
    let parent_config = json!({
        "command": "train",
        "version": env!("CARGO_PKG_VERSION"),
        "bundle": args.bundle,
        "out_model": args.out_model,
        "encoding": kind,
        "arch": match args.arch { ArchName::Cnn => "cnn", ArchName::Sae => "sae" },
        "epochs": config.epochs,
        "batch": config.batch_size,
        "lr": config.learning_rate,
        "patience": config.patience,
        "seed": config.seed,
        "model_id": model.id_hex(),
        "test_accuracy": metrics.accuracy,
    });
    let mut text = serde_json::to_string_pretty(&parent_config)?;
    text.push('\n');
    write_text(&sibling(&args.out_model, "config.json"), &text)?;
    progress.say(format!(
        "model {} saved to {} (test accuracy {:.2}%)",
        model.id_hex(),
        args.out_model.display(),
        100.0 * metrics.accuracy
    ));
    Ok(())
}

// --- attack / eval ------------------------------------------------------------------

fn parse_variant(name: &str) -> Result<Variant, CliError> {
    VARIANTS
        .into_iter()
        .find(|v| v.column() == name)
        .ok_or_else(|| {
            let columns: Vec<&str> = VARIANTS.iter().map(|v| v.column()).collect();
            CliError::Usage(format!("unknown variant {name:?}; choose from {columns:?}"))
        })
}

fn parse_dummy_index(raw: &str) -> Result<DummyIndexPolicy, CliError> {
    match raw {
        "first-forward" => Ok(DummyIndexPolicy::AfterFirstForward),
        _ => raw.parse::<usize>().map(DummyIndexPolicy::Fixed).map_err(|_| {
            CliError::Usage(format!(
                "--dummy-index wants `first-forward` or a slot index, got {raw:?}"
            ))
        }),
    }
}

fn parse_burst(raw: &str) -> Result<BurstPolicy, CliError> {
    match raw {
        "first-forward" => Ok(BurstPolicy::FirstForward),
        "first-backward" => Ok(BurstPolicy::FirstBackward),
        _ => raw.parse::<usize>().map(BurstPolicy::Index).map_err(|_| {
            CliError::Usage(format!(
                "--burst wants `first-forward`, `first-backward`, or a burst index, got {raw:?}"
            ))
        }),
    }
}

impl AttackArgs {
    fn family(&self) -> Result<AttackFamily, CliError> {
        Ok(match self.attack {
            AttackName::Advpad => AttackFamily::Pad {
                location: match self.location {
                    LocationName::Start => PadLocation::Start,
                    LocationName::End => PadLocation::End,
                },
            },
            AttackName::Advpay => {
                AttackFamily::Pay { dummy_index: parse_dummy_index(&self.dummy_index)? }
            }
            AttackName::Advburst => AttackFamily::Burst {
                policy: parse_burst(&self.burst)?,
                max_dummy_size: self.max_dummy_size,
            },
        })
    }
}

/// Shared back half of `attack` and `eval`: run the sweep, then lay out
/// perturbations, result tables, and logs in `out_dir`.
fn execute_experiment(
    model_path: &Path,
    bundle_path: &Path,
    out_dir: &Path,
    plan: &ExperimentPlan,
    command: &str,
    extra: serde_json::Value,
    progress: &Progress,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let bundle = read_bundle(bundle_path)?;
    let data = prepare(&bundle)?;
    create_dir(out_dir)?;
    let mut config = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "model": model_path,
        "bundle": bundle_path,
        "out_dir": out_dir,
        "model_id": model.id_hex(),
        "plan": plan,
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (config.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_config(out_dir, &config)?;
    progress.say(format!(
        "sweeping {} over {} strengths x {} classes on model {}",
        plan.family.name(),
        plan.strengths.len(),
        if plan.target_classes.is_empty() {
            data.class_count()
        } else {
            plan.target_classes.len()
        },
        model.id_hex()
    ));
    let out = run_experiment(&model, &data, plan)?;
    write_experiment_artifacts(out_dir, &out)?;
    progress.say(format!(
        "wrote {} perturbations and {} measurements to {}",
        out.uaps.len(),
        out.result.measurements.len(),
        out_dir.display()
    ));
    Ok(())
}

fn write_experiment_artifacts(out_dir: &Path, out: &ExperimentOutput) -> Result<(), CliError> {
    let mut results = serde_json::to_string_pretty(&out.result)?;
    results.push('\n');
    write_text(&out_dir.join("results.json"), &results)?;
    write_text(&out_dir.join("run_log.jsonl"), &log_to_jsonl(&out.log)?)?;
    for uap in &out.uaps {
        let name = uap_file_name(uap.target_class, uap.attack.strength());
        save_uap(out_dir.join(name), uap)?;
    }
    write_report_tables(out_dir, &out.result)
}

fn write_report_tables(out_dir: &Path, result: &ExperimentResult) -> Result<(), CliError> {
    for class in swept_classes(result) {
        write_text(
            &out_dir.join(format!("report_{}.csv", safe_name(&class_label(result, class)))),
            &experiment_table(result, Some(class)),
        )?;
    }
    write_text(&out_dir.join("report_mean.csv"), &experiment_table(result, None))
}

fn swept_classes(result: &ExperimentResult) -> BTreeSet<u16> {
    result.measurements.iter().map(|m| m.target_class).collect()
}

fn class_label(result: &ExperimentResult, class: u16) -> String {
    result
        .labels
        .get(usize::from(class))
        .cloned()
        .unwrap_or_else(|| format!("class{class}"))
}

fn cmd_attack(args: &AttackArgs, progress: &Progress) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let mut plan = ExperimentPlan::standard(args.family()?, &model, args.seed);
    if !args.grid.is_empty() {
        plan.strengths = args.grid.clone();
    }
    if !args.classes.is_empty() {
        plan.target_classes = args.classes.clone();
    }
    if !args.variants.is_empty() {
        plan.variants = args.variants.iter().map(|v| parse_variant(v)).collect::<Result<_, _>>()?;
    }
    plan.rand_runs = args.runs;
    if let Some(iters) = args.iters {
        plan.gen.iterations = iters;
    }
    if let Some(batch) = args.batch {
        plan.gen.batch_size = batch;
    }
    if let Some(eps) = args.eps {
        plan.gen.epsilon = eps;
    }
    execute_experiment(
        &args.model,
        &args.bundle,
        &args.out_dir,
        &plan,
        "attack",
        json!({}),
        progress,
    )
}

fn cmd_eval(args: &EvalArgs, progress: &Progress) -> Result<(), CliError> {
    let plan: ExperimentPlan = serde_json::from_str(&read_text(&args.plan)?)?;
    execute_experiment(
        &args.model,
        &args.bundle,
        &args.out_dir,
        &plan,
        "eval",
        json!({ "plan_file": args.plan }),
        progress,
    )
}

// --- transfer -------------------------------------------------------------------

/// Loads every `*.antu` in `dir`, sorted by file name for stable output
/// order.
fn load_uap_dir(dir: &Path) -> Result<Vec<(PathBuf, Uap)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::File(dir.to_path_buf(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "antu"))
        .collect();
    paths.sort();
    let mut uaps = Vec::with_capacity(paths.len());
    for path in paths {
        let uap = load_uap(&path)?;
        uaps.push((path, uap));
    }
    Ok(uaps)
}

/// When the perturbation directory still holds its experiment results,
/// every (class, strength) pair the sweep generated must have its file.
fn check_uap_completeness(dir: &Path, loaded: &[(PathBuf, Uap)]) -> Result<(), CliError> {
    let results_path = dir.join("results.json");
    let Ok(text) = fs::read_to_string(&results_path) else {
        return Ok(());
    };
    let result: ExperimentResult = serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!("{} is not a saved experiment: {e}", results_path.display()))
    })?;
    let have: BTreeSet<String> = loaded
        .iter()
        .filter_map(|(p, _)| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    for &class in &swept_classes(&result) {
        for &strength in result.strengths.iter().filter(|&&s| s > 0) {
            let name = uap_file_name(class, strength);
            if !have.contains(&name) {
                return Err(CliError::Usage(format!(
                    "{} lists class {class} at strength {strength}, but {} is missing from {}",
                    results_path.display(),
                    name,
                    dir.display()
                )));
            }
        }
    }
    Ok(())
}

fn cmd_transfer(args: &TransferArgs, progress: &Progress) -> Result<(), CliError> {
    let source = load_model(&args.source_model)?;
    let target = load_model(&args.target_model)?;
    let loaded = load_uap_dir(&args.uap_dir)?;
    if loaded.is_empty() {
        return Err(CliError::Usage(format!(
            "no .antu perturbation files in {}",
            args.uap_dir.display()
        )));
    }
    for (path, uap) in &loaded {
        if uap.source_model_id != source.id() {
            return Err(CliError::Usage(format!(
                "{} was generated against model {:016x}, not the given source model {}",
                path.display(),
                uap.source_model_id,
                source.id_hex()
            )));
        }
    }
    check_uap_completeness(&args.uap_dir, &loaded)?;
    let bundle = read_bundle(&args.bundle)?;
    let data = prepare(&bundle)?;
    progress.say(format!(
        "transferring {} perturbations from model {} to model {}",
        loaded.len(),
        source.id_hex(),
        target.id_hex()
    ));
    let uaps: Vec<Uap> = loaded.iter().map(|(_, u)| u.clone()).collect();
    let rows = run_transfer(&target, &uaps, &data)?;
    create_dir(&args.out_dir)?;
    write_text(&args.out_dir.join("transfer.csv"), &transfer_table(&rows, &data.labels))?;
    let files: Vec<String> = loaded
        .iter()
        .filter_map(|(p, _)| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    write_config(
        &args.out_dir,
        &json!({
            "command": "transfer",
            "version": env!("CARGO_PKG_VERSION"),
            "source_model": args.source_model,
            "target_model": args.target_model,
            "source_model_id": source.id_hex(),
            "target_model_id": target.id_hex(),
            "uap_dir": args.uap_dir,
            "uap_files": files,
            "bundle": args.bundle,
            "out_dir": args.out_dir,
        }),
    )?;
    progress.say(format!("wrote {} transfer rows to {}", rows.len(), args.out_dir.display()));
    Ok(())
}

// --- report ---------------------------------------------------------------------

fn cmd_report(args: &ReportArgs, progress: &Progress) -> Result<(), CliError> {
    let result: ExperimentResult = serde_json::from_str(&read_text(&args.results)?)?;
    create_dir(&args.out_dir)?;
    write_config(
        &args.out_dir,
        &json!({
            "command": "report",
            "version": env!("CARGO_PKG_VERSION"),
            "results": args.results,
            "out_dir": args.out_dir,
            "class": args.class,
        }),
    )?;
    match args.class {
        Some(class) => {
            if !swept_classes(&result).contains(&class) {
                return Err(CliError::Usage(format!(
                    "class {class} is not part of the saved experiment (classes: {:?})",
                    swept_classes(&result)
                )));
            }
            write_text(
                &args.out_dir.join(format!(
                    "report_{}.csv",
                    safe_name(&class_label(&result, class))
                )),
                &experiment_table(&result, Some(class)),
            )?;
            progress.say(format!(
                "wrote report for class {class} to {}",
                args.out_dir.display()
            ));
        }
        None => {
            write_report_tables(&args.out_dir, &result)?;
            progress.say(format!(
                "wrote {} class tables and the mean table to {}",
                swept_classes(&result).len(),
                args.out_dir.display()
            ));
        }
    }
    Ok(())
}

// --- tests ----------------------------------------------------------------------
