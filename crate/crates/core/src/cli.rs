//! Command-line front end. Every command writes into its own run directory
//! holding a `manifest.json` and the command's outputs.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    evaluate, gold_spans, language_ch, micro_f1, pca_2d, save_pca_csv, sentence_representation,
    EvalReport, SentenceSpans,
};
use crate::corpus::{
    build_code_switched, load_alignments, load_corpus, load_sentences, merge, pair_up,
    save_corpus, Dataset, DatasetRole, SwitchDirection,
};
use crate::distillation::{
    run_distillation, save_soft_labels, Teacher, TeacherEnsemble, WEIGHT_SUM_TOLERANCE,
};
use crate::error::Error;
use crate::model::{EncoderConfig, Tagger, Vocab};
use crate::synthetic::{SyntheticConfig, SyntheticCorpus};
use crate::trainer::{train, LossLevel, TrainConfig};

/// Environment variable naming the default root for run directories.
pub const OUT_ENV: &str = "CLXABSA_OUT";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "clxabsa", version, about = "Cross-lingual aspect sentiment tagging")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Root under which run directories are created [env: CLXABSA_OUT; default: runs]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Exact run directory; overrides --out
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Replace an existing run directory
    #[arg(long, global = true)]
    pub overwrite: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic bilingual corpus
    Synth(SynthArgs),
    /// Build code-switched datasets from a parallel corpus
    BuildCodeswitch(CodeSwitchArgs),
    /// Train a tagger, optionally with a contrastive loss
    Train(TrainArgs),
    /// Distill a student from fused teacher outputs on unlabeled text
    Distill(DistillArgs),
    /// Score a checkpoint or a predictions file against gold spans
    Evaluate(EvaluateArgs),
    /// Sentence-space PCA coordinates and language Calinski-Harabasz index
    AnalyzeSpace(AnalyzeArgs),
    /// Re-execute the command recorded in a manifest and compare outputs
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON file with corpus settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    S2t,
    T2s,
    Both,
}

#[derive(Debug, Args)]
pub struct CodeSwitchArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub translated: PathBuf,
    #[arg(long)]
    pub alignments: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub direction: DirectionArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Token,
    Sentiment,
    None,
}

impl From<LevelArg> for LossLevel {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::Token => LossLevel::Token,
            LevelArg::Sentiment => LossLevel::Sentiment,
            LevelArg::None => LossLevel::None,
        }
    }
}

/// `--config` file for `train` and `distill`. Both sections are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled training file; repeat to mix datasets
    #[arg(long = "train", required = true)]
    pub train: Vec<PathBuf>,
    /// Labeled dev file used for model selection
    #[arg(long)]
    pub dev: PathBuf,
    /// Labeled test file scored after training
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Number of runs, with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Extra files whose words join the vocabulary
    #[arg(long)]
    pub vocab_from: Vec<PathBuf>,
    /// Start from this checkpoint instead of a fresh model
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Teacher checkpoint; repeat once per teacher
    #[arg(long = "teacher", required = true)]
    pub teachers: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub num_teachers: usize,
    /// Comma-separated fusion weights; fractions like 1/3 are accepted
    #[arg(long)]
    pub weights: Option<String>,
    /// Target-language sentences; labels, if present, are ignored
    #[arg(long)]
    pub unlabeled: PathBuf,
    #[arg(long)]
    pub student_init: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, requires = "test", conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Tagged sentences to score instead of running a model
    #[arg(long, requires = "gold")]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sentence file; the language field of each record is its cluster
    #[arg(long = "sentences", required = true)]
    pub sentences: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub config_hash: Option<String>,
    pub inputs: Vec<InputHash>,
    pub seeds: Vec<u64>,
    /// Output files relative to the run directory.
    pub outputs: Vec<PathBuf>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(e) => match e {
                Error::InvalidSpan { .. }
                | Error::UnknownTag(_)
                | Error::Record { .. }
                | Error::Dataset(_)
                | Error::Config(_)
                | Error::Empty(_)
                | Error::Incompatible(_)
                | Error::DuplicateId(_)
                | Error::IdMismatch(_)
                | Error::Shape(_) => 1,
                Error::NonFinite(_)
                | Error::Diverged { .. }
                | Error::Analysis(_)
                | Error::Io { .. }
                | Error::Json { .. } => 2,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, recorded) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns its run directory.
pub fn execute(cli: Cli, recorded_args: Vec<String>) -> CliResult<PathBuf> {
    if let Command::Rerun(r) = &cli.command {
        return rerun(&r.manifest, &cli.run);
    }
    let name = command_name(&cli.command);
    let inputs = input_paths(&cli.command);
    for p in &inputs {
        if !p.is_file() {
            return Err(CliError::Usage(format!("input file {} does not exist", p.display())));
        }
    }
    let dir = run_dir(&cli.run, name, &recorded_args, &inputs)?;
    let started = now();
    let mut ctx = RunContext {
        dir: dir.clone(),
        outputs: Vec::new(),
        seeds: Vec::new(),
        config: None,
    };
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, &mut ctx)?,
        Command::BuildCodeswitch(a) => cmd_build_codeswitch(a, &mut ctx)?,
        Command::Train(a) => cmd_train(a, &mut ctx)?,
        Command::Distill(a) => cmd_distill(a, &mut ctx)?,
        Command::Evaluate(a) => cmd_evaluate(a, &mut ctx)?,
        Command::AnalyzeSpace(a) => cmd_analyze_space(a, &mut ctx)?,
        Command::Rerun(_) => unreachable!("handled above"),
    }
    let manifest = RunManifest {
        command: name.to_string(),
        args: recorded_args,
        config_path: ctx.config.as_ref().map(|(p, _)| p.clone()),
        config_hash: ctx.config.as_ref().map(|(_, h)| h.clone()),
        inputs: inputs
            .iter()
            .map(|p| Ok(InputHash { path: p.clone(), sha256: file_sha256(p)? }))
            .collect::<CliResult<_>>()?,
        seeds: ctx.seeds,
        outputs: ctx.outputs,
        started_unix: started,
        finished_unix: now(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(dir)
}

struct RunContext {
    dir: PathBuf,
    outputs: Vec<PathBuf>,
    seeds: Vec<u64>,
    config: Option<(PathBuf, String)>,
}

impl RunContext {
    fn output(&mut self, rel: impl AsRef<Path>) -> PathBuf {
        let rel = rel.as_ref().to_path_buf();
        let full = self.dir.join(&rel);
        if let Some(parent) = full.parent() {
            let _ = fs::create_dir_all(parent);
        }
        self.outputs.push(rel);
        full
    }

    fn load_config<T: Default + for<'de> Deserialize<'de>>(&mut self, path: &Option<PathBuf>) -> CliResult<T> {
        let Some(path) = path else {
            return Ok(T::default());
        };
        let bytes = fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let value = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        self.config = Some((path.clone(), hex::encode(Sha256::digest(&bytes))));
        Ok(value)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::BuildCodeswitch(_) => "build-codeswitch",
        Command::Train(_) => "train",
        Command::Distill(_) => "distill",
        Command::Evaluate(_) => "evaluate",
        Command::AnalyzeSpace(_) => "analyze-space",
        Command::Rerun(_) => "rerun",
    }
}

fn input_paths(c: &Command) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = Vec::new();
    match c {
        Command::Synth(a) => v.extend(a.config.clone()),
        Command::BuildCodeswitch(a) => {
            v.extend([a.source.clone(), a.translated.clone(), a.alignments.clone()])
        }
        Command::Train(a) => {
            v.extend(a.train.iter().cloned());
            v.push(a.dev.clone());
            v.extend(a.test.clone());
            v.extend(a.config.clone());
            v.extend(a.vocab_from.iter().cloned());
            v.extend(a.init.clone());
        }
        Command::Distill(a) => {
            v.extend(a.teachers.iter().cloned());
            v.extend([a.unlabeled.clone(), a.student_init.clone(), a.dev.clone()]);
            v.extend(a.test.clone());
            v.extend(a.config.clone());
        }
        Command::Evaluate(a) => {
            v.extend(a.checkpoint.clone());
            v.extend(a.test.clone());
            v.extend(a.predictions.clone());
            v.extend(a.gold.clone());
        }
        Command::AnalyzeSpace(a) => {
            v.push(a.checkpoint.clone());
            v.extend(a.sentences.iter().cloned());
        }
        Command::Rerun(a) => v.push(a.manifest.clone()),
    }
    v
}

fn run_dir(run: &RunArgs, name: &str, args: &[String], inputs: &[PathBuf]) -> CliResult<PathBuf> {
    let dir = match &run.run_dir {
        Some(d) => d.clone(),
        None => {
            let root = run
                .out
                .clone()
                .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs"));
            let mut h = Sha256::new();
            for a in args {
                h.update(a.as_bytes());
                h.update([0]);
            }
            for p in inputs {
                h.update(file_sha256(p)?.as_bytes());
            }
            root.join(format!("{name}-{}", &hex::encode(h.finalize())[..12]))
        }
    };
    if dir.join(MANIFEST).exists() {
        if !run.overwrite {
            return Err(CliError::Usage(format!(
                "{} already holds a run; pass --overwrite or choose another --run-dir",
                dir.display()
            )));
        }
        fs::remove_dir_all(&dir).map_err(|e| Error::io(format!("clear {}", dir.display()), e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    Ok(dir)
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json("serialize", e))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(format!("write {}", path.display()), e))?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs, ctx: &mut RunContext) -> CliResult<()> {
    let mut config: SyntheticConfig = ctx.load_config(&a.config)?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(n) = a.train_size {
        config.train_size = n;
    }
    ctx.seeds.push(config.seed);
    let corpus = SyntheticCorpus::generate(&config)?;
    corpus.write_dir(&ctx.dir)?;
    use crate::synthetic::files::*;
    for f in [
        SOURCE,
        TRANSLATED,
        ALIGNMENTS,
        CODE_SWITCHED_ST,
        CODE_SWITCHED_TS,
        SOURCE_DEV,
        TARGET_DEV,
        TARGET_TEST,
        UNLABELED,
    ] {
        ctx.outputs.push(PathBuf::from(f));
    }
    let cfg_path = ctx.output("synth_config.json");
    write_json(&cfg_path, &config)
}

fn cmd_build_codeswitch(a: &CodeSwitchArgs, ctx: &mut RunContext) -> CliResult<()> {
    let source = load_corpus(&a.source, DatasetRole::Source)?;
    let translated = load_corpus(&a.translated, DatasetRole::Translated)?;
    let alignments = load_alignments(&a.alignments)?;
    let pairs = pair_up(&source, &translated, &alignments)?;
    let directions: &[SwitchDirection] = match a.direction {
        DirectionArg::S2t => &[SwitchDirection::SourceToTarget],
        DirectionArg::T2s => &[SwitchDirection::TargetToSource],
        DirectionArg::Both => &[SwitchDirection::SourceToTarget, SwitchDirection::TargetToSource],
    };
    let mut reports = BTreeMap::new();
    for &d in directions {
        let (ds, report) = build_code_switched(&pairs, d)?;
        info!(
            "{}: wrote {} of {} pairs, skipped {}",
            d.suffix(),
            report.written,
            report.processed,
            report.skipped.len()
        );
        let path = ctx.output(format!("code_switched_{}.jsonl", d.suffix()));
        save_corpus(&ds, &path)?;
        reports.insert(d.suffix(), report);
    }
    let path = ctx.output("skip_report.json");
    write_json(&path, &reports)
}

fn load_labeled(paths: &[PathBuf], role: DatasetRole) -> CliResult<Vec<Dataset>> {
    Ok(paths.iter().map(|p| load_corpus(p, role)).collect::<Result<_, _>>()?)
}

#[derive(Debug, Serialize)]
struct SeedReport {
    seed: u64,
    selected_step: Option<usize>,
    dev_f1: f64,
    test: Option<EvalReport>,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    level: LossLevel,
    runs: Vec<SeedReport>,
    mean_dev_f1: f64,
    mean_test_f1: Option<f64>,
}

fn cmd_train(a: &TrainArgs, ctx: &mut RunContext) -> CliResult<()> {
    let mut cfg: RunConfig = ctx.load_config(&a.config)?;
    let t = &mut cfg.train;
    if let Some(l) = a.level {
        t.level = l.into();
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        t.learning_rate = lr;
    }
    if let Some(s) = a.max_steps {
        t.max_steps = s;
        t.selection_window = t.selection_window.min(s);
    }
    if let Some(x) = a.alpha {
        t.alpha = x;
    }
    if let Some(x) = a.temperature {
        t.temperature = x;
    }
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    cfg.train.validate()?;

    let parts = load_labeled(&a.train, DatasetRole::Source)?;
    let refs: Vec<&Dataset> = parts.iter().collect();
    let data = merge(&refs, cfg.train.seed)?;
    let dev = load_corpus(&a.dev, DatasetRole::Evaluation)?;
    let test = a.test.as_ref().map(|p| load_corpus(p, DatasetRole::Evaluation)).transpose()?;
    let base = a.init.as_ref().map(|p| Tagger::load(p)).transpose()?;
    let vocab = match &base {
        Some(m) => m.vocab().clone(),
        None => {
            let mut extra = Vec::new();
            for p in &a.vocab_from {
                extra.extend(load_sentences(p)?);
            }
            Vocab::from_sentences(data.iter().chain(extra.iter()))
        }
    };

    let mut runs = Vec::new();
    for seed in a.seed..a.seed + a.seeds {
        ctx.seeds.push(seed);
        let model = match &base {
            Some(m) => m.clone(),
            None => Tagger::new(
                EncoderConfig {
                    init_seed: seed,
                    ..cfg.encoder.clone()
                },
                vocab.clone(),
            ),
        };
        let config = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let (model, log) = train(model, &data, &dev, &config)?;
        let sub = PathBuf::from(format!("seed-{seed}"));
        model.save(&ctx.output(sub.join("checkpoint.json")))?;
        log.save(&ctx.output(sub.join("runlog.jsonl")))?;
        let (selected_step, dev_f1) = match log.selected() {
            Some((s, f)) => (Some(s), f),
            None => (None, evaluate(&model, &dev)?.micro_f1),
        };
        let test_report = test.as_ref().map(|t| evaluate(&model, t)).transpose()?;
        runs.push(SeedReport {
            seed,
            selected_step,
            dev_f1,
            test: test_report,
        });
    }
    let n = runs.len() as f64;
    let report = TrainReport {
        level: cfg.train.level,
        mean_dev_f1: runs.iter().map(|r| r.dev_f1).sum::<f64>() / n,
        mean_test_f1: test
            .as_ref()
            .map(|_| runs.iter().filter_map(|r| r.test.as_ref()).map(|t| t.micro_f1).sum::<f64>() / n),
        runs,
    };
    let path = ctx.output("report.json");
    write_json(&path, &report)
}

/// Parses `"1/3,1/3,1/3"` or `"0.5,0.5"`.
pub fn parse_weights(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|part| {
            let part = part.trim();
            let value = match part.split_once('/') {
                Some((n, d)) => {
                    let n: f64 = n.trim().parse().map_err(|_| CliError::Usage(format!("bad weight {part:?}")))?;
                    let d: f64 = d.trim().parse().map_err(|_| CliError::Usage(format!("bad weight {part:?}")))?;
                    n / d
                }
                None => part.parse().map_err(|_| CliError::Usage(format!("bad weight {part:?}")))?,
            };
            if value.is_finite() {
                Ok(value)
            } else {
                Err(CliError::Usage(format!("bad weight {part:?}")))
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct DistillReport {
    teachers: Vec<PathBuf>,
    weights: Vec<f64>,
    selected_step: Option<usize>,
    dev_f1: Option<f64>,
    test: Option<EvalReport>,
}

fn cmd_distill(a: &DistillArgs, ctx: &mut RunContext) -> CliResult<()> {
    if a.teachers.len() != a.num_teachers {
        return Err(CliError::Usage(format!(
            "{} teacher checkpoints given but --num-teachers is {}",
            a.teachers.len(),
            a.num_teachers
        )));
    }
    let weights = match &a.weights {
        Some(w) => parse_weights(w)?,
        None => vec![1.0 / a.num_teachers as f64; a.num_teachers],
    };
    if weights.len() != a.num_teachers {
        return Err(CliError::Usage(format!(
            "{} weights for {} teachers",
            weights.len(),
            a.num_teachers
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(CliError::Usage(format!("weights sum to {sum}, not 1")));
    }
    let mut cfg: RunConfig = ctx.load_config(&a.config)?;
    if a.config.is_none() {
        cfg.train = TrainConfig::student();
    }
    cfg.train.seed = a.seed;
    cfg.train.level = LossLevel::None;
    ctx.seeds.push(a.seed);

    let teachers = a
        .teachers
        .iter()
        .map(|p| {
            Ok(Teacher {
                model: Tagger::load(p)?,
                descriptor: p.display().to_string(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let student_init = Tagger::load(&a.student_init)?;
    for t in &teachers {
        t.model.check_compatible(&student_init)?;
    }
    let ensemble = TeacherEnsemble::new(teachers, weights.clone())?;
    let mut pool = load_sentences(&a.unlabeled)?;
    for s in &mut pool {
        s.tags = None;
    }
    let unlabeled = Dataset::new(pool, DatasetRole::Unlabeled)?;
    let dev = load_corpus(&a.dev, DatasetRole::Evaluation)?;
    let test = a.test.as_ref().map(|p| load_corpus(p, DatasetRole::Evaluation)).transpose()?;

    let run = run_distillation(&ensemble, &unlabeled, student_init, &dev, &cfg.train)?;
    save_soft_labels(&run.soft_labels, &ensemble, &ctx.output("soft_labels.jsonl"))?;
    ctx.outputs.push(PathBuf::from("soft_labels.jsonl.meta.json"));
    run.student.save(&ctx.output("student.json"))?;
    run.log.save(&ctx.output("runlog.jsonl"))?;
    let selected = run.log.selected();
    let report = DistillReport {
        teachers: a.teachers.clone(),
        weights,
        selected_step: selected.map(|s| s.0),
        dev_f1: selected.map(|s| s.1),
        test: test.as_ref().map(|t| evaluate(&run.student, t)).transpose()?,
    };
    let path = ctx.output("report.json");
    write_json(&path, &report)
}

fn cmd_evaluate(a: &EvaluateArgs, ctx: &mut RunContext) -> CliResult<()> {
    let report = match (&a.checkpoint, &a.test, &a.predictions, &a.gold) {
        (Some(ckpt), Some(test), None, _) => {
            let model = Tagger::load(ckpt)?;
            let data = load_corpus(test, DatasetRole::Evaluation)?;
            evaluate(&model, &data)?
        }
        (None, _, Some(pred), Some(gold)) => {
            let spans = |p: &Path| -> CliResult<Vec<SentenceSpans>> {
                let ds = load_corpus(p, DatasetRole::Evaluation)?;
                if ds.is_empty() {
                    return Err(Error::Empty(format!("{}", p.display())).into());
                }
                Ok(ds.iter().map(gold_spans).collect())
            };
            micro_f1(&spans(pred)?, &spans(gold)?)?
        }
        _ => {
            return Err(CliError::Usage(
                "give --checkpoint with --test, or --predictions with --gold".into(),
            ))
        }
    };
    println!("micro-F1 {:.4} (P {:.4}, R {:.4})", report.micro_f1, report.precision, report.recall);
    let path = ctx.output("report.json");
    write_json(&path, &report)
}

fn cmd_analyze_space(a: &AnalyzeArgs, ctx: &mut RunContext) -> CliResult<()> {
    let model = Tagger::load(&a.checkpoint)?;
    let mut samples = Vec::new();
    for p in &a.sentences {
        for s in load_sentences(p)? {
            samples.push(sentence_representation(&model, &s)?);
        }
    }
    let pca = pca_2d(&samples)?;
    save_pca_csv(&ctx.output("pca.csv"), &pca.points)?;
    let ch = language_ch(&samples)?;
    println!("Calinski-Harabasz {:.4} over {} sentences", ch.value, ch.points);
    let path = ctx.output("metrics.jsonl");
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io("open metrics log", e))?;
    let line = serde_json::json!({
        "metric": "calinski_harabasz",
        "checkpoint": a.checkpoint,
        "value": ch.value,
        "between": ch.between,
        "within": ch.within,
        "clusters": ch.clusters,
        "points": ch.points,
        "degenerate": ch.degenerate,
        "pca_variances": pca.variances,
    });
    writeln!(f, "{line}").map_err(|e| Error::io("write metrics log", e))?;
    Ok(())
}

/// Outcome of [`rerun`] for one output file.
#[derive(Debug, Serialize)]
struct RerunCheck {
    output: PathBuf,
    identical: bool,
}

fn rerun(manifest_path: &Path, run: &RunArgs) -> CliResult<PathBuf> {
    let bytes = fs::read(manifest_path).map_err(|e| Error::io(format!("read {}", manifest_path.display()), e))?;
    let manifest: RunManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::json("parse manifest", e))?;
    for input in &manifest.inputs {
        if file_sha256(&input.path)? != input.sha256 {
            return Err(CliError::Usage(format!("input {} changed since the run", input.path.display())));
        }
    }
    let original_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let target = match &run.run_dir {
        Some(d) => d.clone(),
        None => original_dir.with_file_name(format!(
            "{}-rerun",
            original_dir.file_name().unwrap_or_default().to_string_lossy()
        )),
    };
    // Strip the original run-location flags and point at the new directory.
    let mut args = vec!["clxabsa".to_string()];
    let mut it = manifest.args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--run-dir" | "--out" => {
                it.next();
            }
            "--overwrite" => {}
            s if s.starts_with("--run-dir=") || s.starts_with("--out=") => {}
            _ => args.push(a.clone()),
        }
    }
    args.push("--run-dir".into());
    args.push(target.display().to_string());
    if run.overwrite {
        args.push("--overwrite".into());
    }
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = execute(cli, args[1..].to_vec())?;
    let checks: Vec<RerunCheck> = manifest
        .outputs
        .iter()
        .map(|o| RerunCheck {
            output: o.clone(),
            identical: fs::read(original_dir.join(o)).ok() == fs::read(dir.join(o)).ok(),
        })
        .collect();
    let differing: Vec<_> = checks.iter().filter(|c| !c.identical).map(|c| c.output.display().to_string()).collect();
    write_json(&dir.join("rerun_check.json"), &checks)?;
    if differing.is_empty() {
        info!("all {} outputs reproduced byte-for-byte", checks.len());
        Ok(dir)
    } else {
        Err(Error::Analysis(format!("outputs differ from the original run: {}", differing.join(", "))).into())
    }
}
