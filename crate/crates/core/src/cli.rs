//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for user errors (bad flags, invalid input
//! files, missing fixtures), 2 for internal failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::agent::{self, AgentConfig, EvalRecord, Library, Mode};
use crate::codebank::{self, CodeBank};
use crate::dataset::{self, sha256_hex, Example};
use crate::domains::Domain;
use crate::gateway::{
    Backend, ChatRequest, GatewayError, HttpBackend, HttpConfig, RecordingBackend, ReplayBackend, ReplayMode,
};
use crate::preprocess::{self, BatchEntry, BatchManifest, CommentOutcome, Embedder, LocalEmbedder, RemoteEmbedder};
use crate::trainer::{self, TrainConfig, TrainError};

pub const MANIFEST_FILE: &str = "batches.json";
pub const RUNS_FILE: &str = "runs.jsonl";

#[derive(Parser, Debug)]
#[command(name = "abstractor", version, about = "Learn a verified helper library from example programs and use it to write new ones")]
struct Cli {
    /// JSON file with "train" and "test" sections of default settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long, global = true, env = "ABSTRACTOR_API_BASE")]
    api_base: Option<String>,
    #[arg(long, global = true, env = "ABSTRACTOR_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
    /// Directory of recorded completions. Replayed when no API is configured.
    #[arg(long, global = true, env = "ABSTRACTOR_FIXTURES_DIR")]
    fixtures: Option<PathBuf>,
    #[arg(long, global = true, env = "ABSTRACTOR_MODEL")]
    model: Option<String>,
    /// Answer missing fixtures with an empty completion instead of failing.
    #[arg(long, global = true)]
    lenient_replay: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster a training set into batches and order them.
    Preprocess(PreprocessArgs),
    /// Learn a code bank from a batch manifest.
    Train(TrainArgs),
    /// Write programs for a test set and score them.
    Test(TestArgs),
    /// Show a code bank or helper usage from a results file.
    Inspect(InspectArgs),
    /// Manage recorded completions.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long)]
    domain: Domain,
    /// Training set (JSON lines).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comment the programs before clustering (needs a model).
    #[arg(long, conflicts_with = "no_comments")]
    add_comments: bool,
    #[arg(long)]
    no_comments: bool,
    /// Use a remote embedding model instead of the built-in 3-gram embedder.
    #[arg(long)]
    embed_model: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Batch manifest written by `preprocess`.
    #[arg(long)]
    manifest: PathBuf,
    /// Where the banks, checkpoint and report go.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    edit_every: Option<u64>,
    #[arg(long)]
    prune_every: Option<u64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    min_uses: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_retry: bool,
    #[arg(long)]
    no_edit: bool,
    #[arg(long)]
    no_prune: bool,
    #[arg(long)]
    no_curriculum: bool,
    /// Skip the prune pass after training.
    #[arg(long)]
    no_filter: bool,
    /// Continue from the checkpoint in --out.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    domain: Option<Domain>,
    /// Directory holding codebank.json and demobank.json.
    #[arg(long)]
    banks: PathBuf,
    /// Training set, source of the primitive examples.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Results file (JSON lines); the summary goes next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Library)]
    mode: ModeArg,
    #[arg(long)]
    icl_budget: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    max_helpers: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    embed_model: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Library,
    Baseline,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Table,
    Json,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    banks: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Results file from `test`; prints helper usage.
    #[arg(long)]
    usage: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Subcommand, Debug)]
enum FixturesCommand {
    /// List recorded completions.
    List,
    /// Run another command, saving every completion into the fixtures directory.
    Record {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, required = true)]
        args: Vec<String>,
    },
}

#[derive(Debug)]
enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn user(e: impl ToString) -> CliError {
    CliError::User(e.to_string())
}

fn internal(e: impl ToString) -> CliError {
    CliError::Internal(e.to_string())
}

fn gateway_error(e: GatewayError) -> CliError {
    match e {
        GatewayError::ReplayMiss { .. } | GatewayError::Http { .. } => user(e),
        _ => internal(e),
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Gateway { source: GatewayError::ReplayMiss { .. }, .. } | TrainError::Config(_) | TrainError::Data(_) => user(e),
        _ => internal(e),
    }
}

/// One line of `runs.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub started: String,
    pub finished: String,
    pub config: Json,
    pub datasets: Vec<(String, String)>,
    pub backend: Option<String>,
    pub fixtures_sha256: Option<String>,
    pub outputs: Vec<String>,
}

/// Hash of every fixture file name and content, in name order.
pub fn fixtures_digest(dir: &Path) -> Option<String> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir).ok()?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    names.sort();
    let mut all = Vec::new();
    for p in names.iter().filter(|p| p.extension().is_some_and(|x| x == "json")) {
        all.extend_from_slice(p.file_name()?.as_encoded_bytes());
        all.extend_from_slice(&std::fs::read(p).ok()?);
    }
    Some(sha256_hex(&all))
}

struct Ctx {
    api_base: Option<String>,
    api_key: Option<String>,
    fixtures: Option<PathBuf>,
    model: Option<String>,
    lenient: bool,
    file_config: Json,
    injected: Option<Arc<dyn Backend>>,
    record: bool,
}

impl Ctx {
    /// The completion backend for this invocation, if one is configured.
    fn backend(&self) -> Result<Option<Arc<dyn Backend>>, CliError> {
        let inner: Option<Arc<dyn Backend>> = match (&self.injected, &self.api_base) {
            (Some(b), _) => Some(b.clone()),
            (None, Some(base)) => Some(Arc::new(HttpBackend::new(HttpConfig::new(base.clone(), self.api_key.clone())))),
            (None, None) => None,
        };
        if self.record {
            let dir = self.fixtures.clone().ok_or_else(|| user("recording needs --fixtures or ABSTRACTOR_FIXTURES_DIR"))?;
            let inner = inner.ok_or_else(|| user("recording needs --api-base or ABSTRACTOR_API_BASE"))?;
            return Ok(Some(Arc::new(RecordingBackend::new(inner, dir).map_err(internal)?)));
        }
        if inner.is_some() {
            return Ok(inner);
        }
        Ok(self.fixtures.as_ref().map(|dir| {
            let mode = if self.lenient { ReplayMode::Lenient(String::new()) } else { ReplayMode::Strict };
            Arc::new(ReplayBackend::new(dir.clone(), mode)) as Arc<dyn Backend>
        }))
    }

    fn require_backend(&self) -> Result<Arc<dyn Backend>, CliError> {
        self.backend()?.ok_or_else(|| {
            user("no model configured: set --api-base (ABSTRACTOR_API_BASE) or --fixtures (ABSTRACTOR_FIXTURES_DIR)")
        })
    }

    fn embedder(&self, model: &Option<String>) -> Result<Box<dyn Embedder>, CliError> {
        match model {
            None => Ok(Box::new(LocalEmbedder)),
            Some(m) => {
                let base = self.api_base.clone().ok_or_else(|| user("--embed-model needs --api-base"))?;
                Ok(Box::new(RemoteEmbedder {
                    backend: HttpBackend::new(HttpConfig::new(base, self.api_key.clone())),
                    model: m.clone(),
                }))
            }
        }
    }

    fn section(&self, name: &str) -> Json {
        self.file_config.get(name).cloned().unwrap_or(Json::Null)
    }

    fn fixtures_digest(&self) -> Option<String> {
        self.fixtures.as_deref().and_then(fixtures_digest)
    }
}

/// Overlay the keys of `layer` onto `base`.
fn overlay<T: Serialize + serde::de::DeserializeOwned>(base: T, layer: &Json) -> Result<T, CliError> {
    let Json::Object(layer) = layer else { return Ok(base) };
    let mut v = serde_json::to_value(base).map_err(internal)?;
    if let Json::Object(m) = &mut v {
        for (k, x) in layer {
            if !m.contains_key(k) {
                return Err(user(format!("unknown configuration key '{k}'")));
            }
            m.insert(k.clone(), x.clone());
        }
    }
    serde_json::from_value(v).map_err(|e| user(format!("invalid configuration: {e}")))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn append_manifest(dir: &Path, m: &RunManifest) -> Result<(), CliError> {
    use std::io::Write;
    std::fs::create_dir_all(dir).map_err(internal)?;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(dir.join(RUNS_FILE)).map_err(internal)?;
    writeln!(f, "{}", serde_json::to_string(m).map_err(internal)?).map_err(internal)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| internal(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))
}

fn load_examples(path: &Path) -> Result<(Vec<Example>, String), CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| user(format!("{} is not UTF-8", path.display())))?;
    let ex = dataset::parse_jsonl(&text).map_err(|e| user(format!("{}: {e}", path.display())))?;
    Ok((ex, sha256_hex(&bytes)))
}

fn cmd_preprocess(ctx: &Ctx, a: PreprocessArgs, out: &mut String) -> Result<(), CliError> {
    let started = now();
    let mut cfg = overlay(TrainConfig::for_domain(a.domain), &ctx.section("train"))?;
    cfg.domain = a.domain;
    if let Some(k) = a.batch_size {
        cfg.batch_size = k;
    }
    if a.add_comments {
        cfg.add_comments = true;
    }
    if a.no_comments {
        cfg.add_comments = false;
    }
    if cfg.batch_size == 0 {
        return Err(user("--batch-size must be at least 1"));
    }
    let (mut examples, mut digest) = load_examples(&a.data)?;
    if let Some(bad) = examples.iter().find(|e| e.program.trim().is_empty()) {
        return Err(user(format!("{}: training example '{}' has no program", a.data.display(), bad.id)));
    }
    let mut dataset_name = a.data.canonicalize().map_err(user)?.display().to_string();
    let mut outputs = Vec::new();
    if cfg.add_comments {
        let backend = ctx.backend()?.ok_or_else(|| {
            user("commenting needs a model: configure --api-base or --fixtures, or pass --no-comments")
        })?;
        let mut kept = 0;
        for e in examples.iter_mut() {
            let reg = e.registry(cfg.domain).map_err(user)?;
            let (c, how) = preprocess::add_comments(e, &*backend, &reg, cfg.budget).map_err(gateway_error)?;
            match how {
                CommentOutcome::Rejected(why) => log::warn!("{}: comments rejected: {why}", e.id),
                _ => kept += 1,
            }
            *e = c;
        }
        let text = dataset::to_jsonl(&examples);
        let path = a.out.join("train.commented.jsonl");
        write_file(&path, &text)?;
        digest = sha256_hex(text.as_bytes());
        dataset_name = "train.commented.jsonl".into();
        outputs.push(path.display().to_string());
        writeln!(out, "commented {kept} of {} programs", examples.len()).ok();
    }
    let embedder = ctx.embedder(&a.embed_model)?;
    let (batches, curriculum) = preprocess::plan_batches(&examples, &*embedder, cfg.batch_size).map_err(user)?;
    let manifest = BatchManifest {
        schema_version: preprocess::MANIFEST_VERSION,
        domain: cfg.domain,
        dataset: dataset_name,
        dataset_sha256: digest,
        batch_size: cfg.batch_size,
        embedder: embedder.id(),
        batches: batches
            .iter()
            .map(|b| BatchEntry {
                example_ids: b.iter().map(|&i| examples[i].id.clone()).collect(),
                mean_tokens: preprocess::mean_tokens(b, &examples),
            })
            .collect(),
        curriculum,
    };
    let path = a.out.join(MANIFEST_FILE);
    write_file(&path, &(serde_json::to_string_pretty(&manifest).map_err(internal)? + "\n"))?;
    outputs.push(path.display().to_string());
    writeln!(out, "{} examples in {} batches of up to {}; manifest written to {}", examples.len(), manifest.batches.len(), cfg.batch_size, path.display()).ok();
    append_manifest(
        &a.out,
        &RunManifest {
            command: "preprocess".into(),
            started,
            finished: now(),
            config: serde_json::to_value(&cfg).map_err(internal)?,
            datasets: vec![(a.data.display().to_string(), sha256_hex(&read_file(&a.data)?))],
            backend: if cfg.add_comments { ctx.backend()?.map(|b| b.id()) } else { None },
            fixtures_sha256: ctx.fixtures_digest(),
            outputs,
        },
    )
}

fn load_manifest(path: &Path) -> Result<(BatchManifest, Vec<Example>), CliError> {
    let text = String::from_utf8(read_file(path)?).map_err(user)?;
    let m: BatchManifest = serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))?;
    if m.schema_version != preprocess::MANIFEST_VERSION {
        return Err(user(format!("{}: manifest version {}, expected {}", path.display(), m.schema_version, preprocess::MANIFEST_VERSION)));
    }
    let data = Path::new(&m.dataset);
    let data = if data.is_absolute() { data.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).join(data) };
    let (examples, digest) = load_examples(&data)?;
    if digest != m.dataset_sha256 {
        return Err(user(format!("{} changed since it was preprocessed (sha256 {digest})", data.display())));
    }
    Ok((m, examples))
}

fn cmd_train(ctx: &Ctx, a: TrainArgs, out: &mut String) -> Result<(), CliError> {
    let started = now();
    let (manifest, examples) = load_manifest(&a.manifest)?;
    let backend = ctx.require_backend()?;
    let result = if a.resume {
        if !a.out.join(trainer::CHECKPOINT_FILE).exists() {
            return Err(user(format!("nothing to resume: no checkpoint in {}", a.out.display())));
        }
        trainer::resume(&examples, &manifest, &*backend, &a.out)
    } else {
        let mut cfg = overlay(TrainConfig::for_domain(manifest.domain), &ctx.section("train"))?;
        cfg.domain = manifest.domain;
        cfg.batch_size = manifest.batch_size;
        if let Some(m) = &ctx.model {
            cfg.model = m.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = a.$f { cfg.$f = v; } )* };
        }
        set!(rounds, edit_every, prune_every, theta, min_uses, budget, seed);
        cfg.retry &= !a.no_retry;
        cfg.edit &= !a.no_edit;
        cfg.prune &= !a.no_prune;
        cfg.curriculum &= !a.no_curriculum;
        cfg.filter_before_testing &= !a.no_filter;
        trainer::train(&examples, &manifest, cfg, &*backend, Some(&a.out))
    };
    let result = result.map_err(train_error)?;
    out.push_str(&result.report.summary());
    append_manifest(
        &a.out,
        &RunManifest {
            command: if a.resume { "train --resume" } else { "train" }.into(),
            started,
            finished: now(),
            config: serde_json::to_value(&result.report.config).map_err(internal)?,
            datasets: vec![
                (a.manifest.display().to_string(), sha256_hex(&read_file(&a.manifest)?)),
                (manifest.dataset.clone(), manifest.dataset_sha256.clone()),
            ],
            backend: Some(backend.id()),
            fixtures_sha256: ctx.fixtures_digest(),
            outputs: [codebank::CODEBANK_FILE, codebank::DEMOBANK_FILE, trainer::REPORT_FILE]
                .iter()
                .map(|f| a.out.join(f).display().to_string())
                .collect(),
        },
    )
}

/// Domain recorded with a trained bank, if any.
fn bank_domain(dir: &Path) -> Option<Domain> {
    let text = std::fs::read_to_string(dir.join(trainer::REPORT_FILE)).ok()?;
    let v: Json = serde_json::from_str(&text).ok()?;
    serde_json::from_value(v.get("config")?.get("domain")?.clone()).ok()
}

pub fn summary_path(results: &Path) -> PathBuf {
    let stem = results.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    results.with_file_name(format!("{stem}.summary.json"))
}

fn cmd_test(ctx: &Ctx, a: TestArgs, out: &mut String) -> Result<(), CliError> {
    let started = now();
    let recorded = bank_domain(&a.banks);
    let domain = match (a.domain, recorded) {
        (Some(d), Some(r)) if d != r => {
            return Err(user(format!("{} holds a {r} bank, not {d}", a.banks.display())));
        }
        (Some(d), _) | (None, Some(d)) => d,
        (None, None) => return Err(user("--domain is required: the bank directory has no training report")),
    };
    let mut cfg = overlay(AgentConfig { domain, ..AgentConfig::default() }, &ctx.section("test"))?;
    cfg.domain = domain;
    cfg.mode = match a.mode {
        ModeArg::Library => Mode::Library,
        ModeArg::Baseline => Mode::Baseline,
    };
    if let Some(m) = &ctx.model {
        cfg.model = m.clone();
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { cfg.$f = v; } )* };
    }
    set!(icl_budget, ratio, max_helpers, budget);
    cfg.validate().map_err(user)?;
    let (bank, demos) = codebank::load(&a.banks).map_err(user)?;
    let (train, train_sha) = load_examples(&a.train)?;
    let (test, test_sha) = load_examples(&a.test)?;
    let backend = ctx.require_backend()?;
    let embedder = ctx.embedder(&a.embed_model)?;
    let lib = Library::new(&*embedder, &train, &bank, &demos).map_err(user)?;
    let eval = agent::evaluate(&test, &lib, &*embedder, &*backend, &cfg).map_err(|e| match e {
        agent::AgentError::Gateway(g) => gateway_error(g),
        agent::AgentError::Config(_) => user(e),
        other => internal(other),
    })?;
    let mut lines = String::new();
    for r in &eval.records {
        lines.push_str(&serde_json::to_string(r).map_err(internal)?);
        lines.push('\n');
    }
    write_file(&a.out, &lines)?;
    let sp = summary_path(&a.out);
    write_file(&sp, &(serde_json::to_string_pretty(&eval.summary).map_err(internal)? + "\n"))?;
    let s = &eval.summary;
    writeln!(out, "{} mode: {}/{} correct (accuracy {:.3})", s.mode, s.correct, s.scored, s.accuracy).ok();
    if !s.skipped.is_empty() {
        writeln!(out, "skipped {} example(s) without a gold result: {}", s.skipped.len(), s.skipped.join(", ")).ok();
    }
    append_manifest(
        a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")),
        &RunManifest {
            command: format!("test --mode {}", cfg.mode),
            started,
            finished: now(),
            config: serde_json::to_value(&cfg).map_err(internal)?,
            datasets: vec![(a.train.display().to_string(), train_sha), (a.test.display().to_string(), test_sha)],
            backend: Some(backend.id()),
            fixtures_sha256: ctx.fixtures_digest(),
            outputs: vec![a.out.display().to_string(), sp.display().to_string()],
        },
    )
}

/// Table of helpers with score, uses and pass rate, followed by their sources.
pub fn bank_table(bank: &CodeBank) -> String {
    let mut s = format!("{:<32} {:>9} {:>5} {:>9}\n", "helper", "score", "uses", "pass-rate");
    for (f, score) in bank.ranked() {
        let rate = f.pass_rate().map_or("-".to_string(), |r| format!("{:.1}%", r * 100.0));
        s.push_str(&format!("{:<32} {:>9.3} {:>5} {:>9}\n", f.name, score, f.records.len(), rate));
    }
    for (f, _) in bank.ranked() {
        s.push('\n');
        s.push_str(&f.source);
    }
    s
}

fn cmd_inspect(a: InspectArgs, out: &mut String) -> Result<(), CliError> {
    if a.banks.is_none() && a.usage.is_none() {
        return Err(user("give --banks, --usage or both"));
    }
    if let Some(dir) = &a.banks {
        let path = dir.join(codebank::CODEBANK_FILE);
        let bank = if path.exists() { codebank::load_codebank(&path).map_err(user)? } else { return Err(user(format!("no code bank at {}", path.display()))) };
        match a.format {
            Format::Json => out.push_str(&codebank::codebank_json(&bank)),
            Format::Table => out.push_str(&bank_table(&bank)),
        }
    }
    if let Some(path) = &a.usage {
        let text = String::from_utf8(read_file(path)?).map_err(user)?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: EvalRecord = serde_json::from_str(line).map_err(|e| user(format!("{}:{}: {e}", path.display(), i + 1)))?;
            records.push(r);
        }
        let hist = agent::usage_histogram(&records, a.top);
        match a.format {
            Format::Json => {
                let m: serde_json::Map<String, Json> = hist.iter().map(|(n, c)| (n.clone(), Json::from(*c))).collect();
                out.push_str(&(serde_json::to_string_pretty(&m).map_err(internal)? + "\n"));
            }
            Format::Table => {
                out.push_str(&format!("{:<32} {:>6}\n", "helper", "calls"));
                for (n, c) in hist {
                    out.push_str(&format!("{n:<32} {c:>6}\n"));
                }
            }
        }
    }
    Ok(())
}

fn cmd_fixtures_list(ctx: &Ctx, out: &mut String) -> Result<(), CliError> {
    let dir = ctx.fixtures.as_ref().ok_or_else(|| user("give --fixtures or set ABSTRACTOR_FIXTURES_DIR"))?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| user(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for p in &paths {
        let v: Json = serde_json::from_slice(&read_file(p)?).map_err(|e| user(format!("{}: {e}", p.display())))?;
        let req: Option<ChatRequest> = v.get("request").and_then(|r| serde_json::from_value(r.clone()).ok());
        let first = req.as_ref().and_then(|r| r.prompt().lines().next().map(str::to_string)).unwrap_or_default();
        let key = v.get("key").and_then(Json::as_str).unwrap_or("?");
        writeln!(out, "{}  {}", &key[..key.len().min(16)], first.chars().take(70).collect::<String>()).ok();
    }
    writeln!(out, "{} fixture(s)", paths.len()).ok();
    Ok(())
}

fn dispatch(cli: Cli, injected: Option<Arc<dyn Backend>>, record: bool, out: &mut String) -> Result<(), CliError> {
    let file_config = match &cli.config {
        Some(p) => serde_json::from_slice(&read_file(p)?).map_err(|e| user(format!("{}: {e}", p.display())))?,
        None => Json::Null,
    };
    let ctx = Ctx {
        api_base: cli.api_base,
        api_key: cli.api_key,
        fixtures: cli.fixtures,
        model: cli.model,
        lenient: cli.lenient_replay,
        file_config,
        injected: injected.clone(),
        record,
    };
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&ctx, a, out),
        Command::Train(a) => cmd_train(&ctx, a, out),
        Command::Test(a) => cmd_test(&ctx, a, out),
        Command::Inspect(a) => cmd_inspect(a, out),
        Command::Fixtures(FixturesCommand::List) => cmd_fixtures_list(&ctx, out),
        Command::Fixtures(FixturesCommand::Record { args }) => {
            if record {
                return Err(user("fixtures record cannot be nested"));
            }
            let mut argv = vec!["abstractor".to_string()];
            if let Some(f) = &ctx.fixtures {
                argv.push("--fixtures".into());
                argv.push(f.display().to_string());
            }
            if let Some(b) = &ctx.api_base {
                argv.push("--api-base".into());
                argv.push(b.clone());
            }
            argv.extend(args);
            let inner = Cli::try_parse_from(argv).map_err(user)?;
            dispatch(inner, injected, true, out)
        }
    }
}

/// Run with `argv` (program name first) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, None)
}

/// Like [`run`], with completions served by `backend` instead of whatever
/// the flags select.
pub fn run_with<I, T>(argv: I, backend: Option<Arc<dyn Backend>>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut out = String::new();
    let result = dispatch(cli, backend, false, &mut out);
    print!("{out}");
    match result {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::User(m) | CliError::Internal(m)) = &e;
            eprintln!("error: {m}");
            e.code()
        }
    }
}
