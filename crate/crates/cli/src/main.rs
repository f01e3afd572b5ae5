//! `lanechange`: dataset building, labeling, prompt rendering, prediction,
//! evaluation and probe-scenario generation over highD-format recordings.

mod config;
mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lanechange_core::archive::{read_jsonl_file, write_jsonl, MetadataLine, TrainingLine};
use lanechange_core::codec::{assemble_llama_sample, PredictionRecord, PromptBundle};
use lanechange_core::cot::annotate;
use lanechange_core::eval::{build_report, emit_report, ReportFormat};
use lanechange_core::predict::{Backend, Predictor, PredictorConfig, API_KEY_ENV};
use lanechange_core::recording::{discover_recordings, load_recording_files, Recording, VehicleClass};
use lanechange_core::safety::{generate_family, ScenarioFamily, ScenarioName, TargetProfile};
use lanechange_core::sampling::{candidate_counts, sample_dataset, StratificationPlan, DEFAULT_LK_SPACING_S};
use lanechange_core::scene::SceneSnapshot;
use serde::Serialize;

use config::{require, PipelineConfig, Preset};
use output::Staged;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn transport(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<lanechange_core::Error> for CliError {
    fn from(e: lanechange_core::Error) -> Self {
        CliError::data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "lanechange",
    version,
    about = "Lane-change intention and trajectory dataset pipeline"
)]
struct Cli {
    /// TOML pipeline config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample snapshots from recordings and write the training archives.
    BuildDataset(BuildArgs),
    /// Recompute the reasoning annotation of every snapshot in an archive.
    Label(LabelArgs),
    /// Render snapshots as Llama-format prompt text.
    Render(RenderArgs),
    /// Run a predictor over a snapshot archive.
    Predict(PredictArgs),
    /// Score predictions against their snapshots.
    Evaluate(EvaluateArgs),
    /// Generate the braking/accelerating probe scenario grids.
    GenSafety(SafetyArgs),
    /// Print per-stratum candidate counts of recordings.
    Stats(StatsArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// highD data directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampling seed; required here or in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Stratification plan (TOML).
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Lane-keeping sampling cadence (s).
    #[arg(long)]
    lk_spacing: Option<f64>,
    /// Comma-separated recording ids; default is every recording found.
    #[arg(long, value_delimiter = ',')]
    recordings: Option<Vec<u32>>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderMode {
    Training,
    Inference,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "training")]
    mode: RenderMode,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    RuleBased,
    Remote,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Chat-completions URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Per-request timeout (s).
    #[arg(long)]
    timeout: Option<f64>,
    /// Maximum concurrent requests.
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    retries: Option<u32>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    snapshots: PathBuf,
    /// Output directory for the report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of text-table, csv, json.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Option<Vec<FormatArg>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    TextTable,
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::TextTable => ReportFormat::TextTable,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Car,
    Truck,
}

#[derive(Args)]
struct SafetyArgs {
    /// Family name or `all`.
    #[arg(long, default_value = "all")]
    family: String,
    #[arg(long)]
    out: PathBuf,
    /// Target speed (km/h).
    #[arg(long, default_value_t = 120.0)]
    target_speed: f64,
    #[arg(long, value_enum, default_value = "car")]
    target_class: ClassArg,
    /// Lane width (m).
    #[arg(long, default_value_t = 3.75)]
    lane_width: f64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    recordings: Option<Vec<u32>>,
    #[arg(long)]
    lk_spacing: Option<f64>,
    /// Print JSON instead of tab-separated lines.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::BuildDataset(a) => build_dataset(a, &cfg),
        Command::Label(a) => label(a),
        Command::Render(a) => render(a),
        Command::Predict(a) => predict(a, &cfg),
        Command::Evaluate(a) => evaluate(a, &cfg),
        Command::GenSafety(a) => gen_safety(a),
        Command::Stats(a) => stats(a, &cfg),
    }
}

fn existing(path: &Path, field: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("`{field}`: {} does not exist", path.display())))
    }
}

fn distinct(input: &Path, out: &Path) -> Result<()> {
    let same = match (input.canonicalize(), out.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == out,
    };
    if same {
        return Err(CliError::usage("`out` must differ from the input file"));
    }
    Ok(())
}

fn jsonl_bytes<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).expect("in-memory write");
    buf
}

fn load_recordings(input: &Path, ids: Option<Vec<u32>>) -> Result<Vec<Recording>> {
    existing(input, "input")?;
    let ids = match ids {
        Some(ids) => ids,
        None => discover_recordings(input).map_err(|e| CliError::data(e.to_string()))?,
    };
    if ids.is_empty() {
        return Err(CliError::data(format!("no recordings found in {}", input.display())));
    }
    let loaded: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = ids
            .iter()
            .map(|&id| scope.spawn(move || load_recording_files(input, id)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("loader thread")).collect()
    });
    let mut recordings = Vec::with_capacity(loaded.len());
    for (id, rec) in ids.iter().zip(loaded) {
        let rec = rec.map_err(|e| CliError::data(format!("recording {id:02}: {e}")))?;
        eprintln!(
            "recording {id:02}: {} tracks, {} dropped (ramp lanes)",
            rec.segments.len(),
            rec.dropped_tracks.len()
        );
        recordings.push(rec);
    }
    Ok(recordings)
}

fn resolve_plan(a: &BuildArgs, cfg: &PipelineConfig) -> Result<StratificationPlan> {
    let from_file = |p: &Path| -> Result<StratificationPlan> {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("`plan` {}: {e}", p.display())))?;
        StratificationPlan::from_toml(&text).map_err(|e| CliError::usage(format!("`plan` {}: {e}", p.display())))
    };
    if let Some(p) = &a.plan {
        return from_file(p);
    }
    if let Some(preset) = a.preset {
        return Ok(preset.plan());
    }
    if let Some(p) = &cfg.plan_file {
        return from_file(p);
    }
    if let Some(plan) = &cfg.plan {
        return Ok(plan.clone());
    }
    Ok(cfg.preset.unwrap_or(Preset::TestSmall).plan())
}

fn build_dataset(a: BuildArgs, cfg: &PipelineConfig) -> Result<()> {
    let input = require(a.input.clone(), cfg.input.clone(), "input")?;
    let out = require(a.out.clone(), cfg.out.clone(), "out")?;
    let mut plan = resolve_plan(&a, cfg)?;
    let seed = require(a.seed.or(cfg.seed), plan.seed, "seed")?;
    if let Some(s) = a.lk_spacing.or(cfg.lk_spacing_s) {
        plan.lk_spacing_s = s;
    }
    plan.validate().map_err(|e| CliError::usage(format!("`plan`: {e}")))?;
    let recordings = load_recordings(&input, a.recordings.clone().or(cfg.recordings.clone()))?;

    let started = Instant::now();
    let mut dataset = sample_dataset(&recordings, &plan, seed).map_err(|e| CliError::data(e.to_string()))?;
    for w in &dataset.report.warnings {
        eprintln!("warning: {w}");
    }
    for s in &mut dataset.snapshots {
        s.cot = Some(annotate(s));
    }
    let training = dataset.snapshots.iter().map(|s| TrainingLine {
        sample_id: s.sample_id.clone(),
        text: assemble_llama_sample(&PromptBundle::training(s, s.cot.as_ref().expect("annotated"))),
    });
    let mut report = serde_json::to_string_pretty(&dataset.report).expect("report serializes");
    report.push('\n');

    let mut staged = Staged::default();
    staged.write(out.join("snapshots.jsonl"), jsonl_bytes(&dataset.snapshots))?;
    staged.write(out.join("train.jsonl"), jsonl_bytes(training))?;
    staged.write(
        out.join("metadata.jsonl"),
        jsonl_bytes(dataset.snapshots.iter().map(MetadataLine::from)),
    )?;
    staged.write(out.join("sampling_report.json"), report)?;
    staged.commit()?;
    eprintln!(
        "wrote {} samples to {} in {:.2?}",
        dataset.snapshots.len(),
        out.display(),
        started.elapsed()
    );
    Ok(())
}

fn read_snapshots(path: &Path) -> Result<Vec<SceneSnapshot>> {
    existing(path, "snapshots")?;
    Ok(read_jsonl_file(path)?)
}

fn label(a: LabelArgs) -> Result<()> {
    let mut snapshots = read_snapshots(&a.snapshots)?;
    distinct(&a.snapshots, &a.out)?;
    for s in &mut snapshots {
        s.cot = Some(annotate(s));
    }
    let mut staged = Staged::default();
    staged.write(&a.out, jsonl_bytes(&snapshots))?;
    staged.commit()?;
    eprintln!("labeled {} snapshots", snapshots.len());
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let snapshots = read_snapshots(&a.snapshots)?;
    distinct(&a.snapshots, &a.out)?;
    let lines = snapshots.iter().map(|s| {
        let bundle = match a.mode {
            RenderMode::Training => PromptBundle::training(s, &s.cot.clone().unwrap_or_else(|| annotate(s))),
            RenderMode::Inference => PromptBundle::inference(s),
        };
        TrainingLine {
            sample_id: s.sample_id.clone(),
            text: assemble_llama_sample(&bundle),
        }
    });
    let mut staged = Staged::default();
    staged.write(&a.out, jsonl_bytes(lines))?;
    staged.commit()?;
    Ok(())
}

fn predictor_config(a: &PredictArgs, cfg: &PipelineConfig) -> PredictorConfig {
    let mut pc = cfg.predictor.clone().unwrap_or_default();
    if let Some(b) = a.backend {
        pc.backend = match b {
            BackendArg::RuleBased => Backend::RuleBased,
            BackendArg::Remote => Backend::Remote,
        };
    }
    if let Some(e) = &a.endpoint {
        pc.endpoint = Some(e.clone());
    }
    if let Some(m) = &a.model {
        pc.model_name = Some(m.clone());
    }
    if let Some(t) = a.timeout {
        pc.request_timeout = t;
    }
    if let Some(p) = a.parallel {
        pc.max_parallel_requests = p;
    }
    if let Some(r) = a.retries {
        pc.retries = r;
    }
    if let Ok(key) = std::env::var(API_KEY_ENV) {
        pc.api_key = Some(key);
    }
    pc
}

fn predict(a: PredictArgs, cfg: &PipelineConfig) -> Result<()> {
    let pc = predictor_config(&a, cfg);
    let predictor = Predictor::from_config(&pc).map_err(|e| CliError::usage(e.to_string()))?;
    let snapshots = read_snapshots(&a.snapshots)?;
    distinct(&a.snapshots, &a.out)?;
    let started = Instant::now();
    let records = predictor.predict_batch(&snapshots);
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        if let Some(reason) = r.failure_reason() {
            *reasons.entry(reason).or_default() += 1;
        }
    }
    let mut staged = Staged::default();
    staged.write(&a.out, jsonl_bytes(&records))?;
    staged.commit()?;
    let failed: usize = reasons.values().sum();
    eprintln!(
        "predicted {} samples in {:.2?}, {failed} failed",
        records.len(),
        started.elapsed()
    );
    for (reason, n) in &reasons {
        eprintln!("  {n} x {reason}");
    }
    let transport: usize = ["timeout", "transport"].iter().filter_map(|k| reasons.get(k)).sum();
    if transport > 0 {
        return Err(CliError::transport(format!(
            "{transport} requests failed at the transport level; predictions were written with failure markers"
        )));
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    let out = require(a.out.clone(), cfg.out.clone(), "out")?;
    let formats: Vec<ReportFormat> = match (a.format, &cfg.report_formats) {
        (Some(f), _) => f.into_iter().map(Into::into).collect(),
        (None, Some(f)) => f.clone(),
        (None, None) => ReportFormat::ALL.to_vec(),
    };
    let snapshots = read_snapshots(&a.snapshots)?;
    existing(&a.predictions, "predictions")?;
    let predictions: Vec<PredictionRecord> = read_jsonl_file(&a.predictions)?;
    let report = build_report(&snapshots, &predictions).map_err(|e| CliError::data(e.to_string()))?;
    let mut staged = Staged::default();
    for f in &formats {
        staged.write(out.join(f.file_name()), emit_report(&report, *f))?;
    }
    staged.commit()?;
    print!("{}", emit_report(&report, ReportFormat::TextTable));
    Ok(())
}

fn gen_safety(a: SafetyArgs) -> Result<()> {
    let families: Vec<ScenarioFamily> = if a.family == "all" {
        ScenarioFamily::all_standard()
    } else {
        let name: ScenarioName = a
            .family
            .parse()
            .map_err(|e: lanechange_core::safety::ScenarioError| CliError::usage(format!("`family`: {e}")))?;
        vec![ScenarioFamily::standard(name)]
    };
    let target = TargetProfile {
        speed: a.target_speed,
        class: match a.target_class {
            ClassArg::Car => VehicleClass::Car,
            ClassArg::Truck => VehicleClass::Truck,
        },
        lane_width: a.lane_width,
    };
    let mut snapshots = Vec::new();
    for f in &families {
        snapshots.extend(generate_family(f, target).map_err(|e| CliError::usage(e.to_string()))?);
    }
    let mut staged = Staged::default();
    staged.write(&a.out, jsonl_bytes(&snapshots))?;
    staged.commit()?;
    eprintln!("generated {} scenarios", snapshots.len());
    Ok(())
}

#[derive(Serialize)]
struct StatsOutput {
    recordings: usize,
    lk_spacing_s: f64,
    candidates: BTreeMap<String, usize>,
    skipped_window: usize,
}

fn stats(a: StatsArgs, cfg: &PipelineConfig) -> Result<()> {
    let input = require(a.input, cfg.input.clone(), "input")?;
    let spacing = a.lk_spacing.or(cfg.lk_spacing_s).unwrap_or(DEFAULT_LK_SPACING_S);
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(CliError::usage("`lk_spacing` must be positive"));
    }
    let recordings = load_recordings(&input, a.recordings.or(cfg.recordings.clone()))?;
    let (counts, skipped) = candidate_counts(&recordings, spacing).map_err(|e| CliError::data(e.to_string()))?;
    let out = StatsOutput {
        recordings: recordings.len(),
        lk_spacing_s: spacing,
        candidates: counts.iter().map(|(s, n)| (s.to_string(), *n)).collect(),
        skipped_window: skipped,
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&out).expect("stats serialize"));
    } else {
        println!("recordings\t{}", out.recordings);
        for (s, n) in &counts {
            println!("{s}\t{n}");
        }
        println!("skipped_window\t{}", out.skipped_window);
    }
    Ok(())
}
