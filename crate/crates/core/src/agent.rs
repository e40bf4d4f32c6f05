//! Test-time synthesis: retrieve demonstrations, primitive examples and
//! helpers for a query, ask the model for a program, run it and score it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codebank::{CodeBank, DemoBank};
use crate::dataset::Example;
use crate::domains::textcraft::CraftTask;
use crate::domains::{compare_results, result_of, Domain, DomainResult, Registry};
use crate::gateway::prompts::{self, Shot, MAX_PROMPT_HELPERS};
use crate::gateway::{extract_program, Backend, ChatRequest, GatewayError};
use crate::preprocess::embed::{EmbedError, Embedder};
use crate::proglang::{execute, parse, Env, Status, DEFAULT_BUDGET};
use crate::retrieval::{build_index, BuildError, EntryKind, IndexError, VectorIndex};
use crate::verify::{defined_names, helper_defs, resolve_helpers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Learned helpers and refactored demos in the prompt.
    Library,
    /// Primitive training programs only.
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Library => "library",
            Mode::Baseline => "baseline",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "library" => Ok(Mode::Library),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode '{other}' (expected library or baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub domain: Domain,
    pub mode: Mode,
    /// In-context examples per prompt.
    pub icl_budget: usize,
    /// Share of the budget given to demonstrations.
    pub ratio: f64,
    pub max_helpers: usize,
    pub budget: u64,
    pub model: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            domain: Domain::Logo,
            mode: Mode::Library,
            icl_budget: 10,
            ratio: 0.5,
            max_helpers: MAX_PROMPT_HELPERS,
            budget: DEFAULT_BUDGET,
            model: crate::gateway::DEFAULT_MODEL.into(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(AgentError::Config(format!("ratio must be within [0, 1], got {}", self.ratio)));
        }
        if self.max_helpers > MAX_PROMPT_HELPERS {
            return Err(AgentError::Config(format!("at most {MAX_PROMPT_HELPERS} helpers fit in a prompt")));
        }
        if self.icl_budget == 0 {
            return Err(AgentError::Config("the in-context budget must be at least 1".into()));
        }
        Ok(())
    }

    /// Demonstrations requested per prompt: `floor(ratio * budget)`, none
    /// for the baseline.
    pub fn demo_slots(&self) -> usize {
        match self.mode {
            Mode::Library => (self.ratio * self.icl_budget as f64).floor() as usize,
            Mode::Baseline => 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{0}")]
    Prompt(String),
}

impl From<BuildError> for AgentError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Embed(e) => AgentError::Embed(e),
            BuildError::Index(e) => AgentError::Index(e),
        }
    }
}

/// What went into one synthesis prompt and what came back.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub request: ChatRequest,
    pub demo_ids: Vec<String>,
    pub primitive_ids: Vec<String>,
    pub helper_names: Vec<String>,
    pub completion: String,
    pub program: Result<String, String>,
}

fn shot_query(query: &str, task: Option<&CraftTask>) -> String {
    match task {
        Some(t) => format!("{}\nCrafting commands:\n{}", query.trim(), t.commands.join("\n")),
        None => query.trim().to_string(),
    }
}

/// Retrieval corpora plus the banks they were built from.
pub struct Library<'a> {
    pub train: &'a [Example],
    pub bank: &'a CodeBank,
    pub demos: &'a DemoBank,
    pub index: VectorIndex,
    train_by_id: BTreeMap<&'a str, &'a Example>,
}

impl<'a> Library<'a> {
    pub fn new(embedder: &dyn Embedder, train: &'a [Example], bank: &'a CodeBank, demos: &'a DemoBank) -> Result<Self, AgentError> {
        let index = build_index(embedder, train, demos, bank)?;
        let train_by_id = train.iter().map(|e| (e.id.as_str(), e)).collect();
        Ok(Library { train, bank, demos, index, train_by_id })
    }

    /// Build the prompt for `example` and ask for a program.
    pub fn synthesize(
        &self,
        example: &Example,
        query_vec: &[f64],
        registry: &Registry,
        backend: &dyn Backend,
        config: &AgentConfig,
    ) -> Result<Synthesis, AgentError> {
        let mut demo_ids = Vec::new();
        let mut demo_shots = Vec::new();
        let wanted = config.demo_slots();
        if wanted > 0 {
            let n = self.index.count(EntryKind::Demo);
            let mut seen = BTreeSet::new();
            for (id, _) in self.index.topk(query_vec, n, EntryKind::Demo)? {
                if demo_ids.len() == wanted {
                    break;
                }
                let Some(d) = self.demos.get(&id) else { continue };
                // several epochs can store the same example; show it once
                if seen.insert(d.example_id.clone()) {
                    demo_shots.push(Shot::new(shot_query(&d.query, d.task.as_ref()), &d.program));
                    demo_ids.push(id);
                }
            }
        }
        let n_prim = config.icl_budget - demo_ids.len();
        let mut primitive_ids = Vec::new();
        let mut primitive_shots = Vec::new();
        for (id, _) in self.index.topk(query_vec, n_prim, EntryKind::TrainExample)? {
            let e = self.train_by_id[id.as_str()];
            primitive_shots.push(Shot::new(e.prompt_query(), &e.program));
            primitive_ids.push(id);
        }
        let mut helper_names = Vec::new();
        let mut helpers = Vec::new();
        if config.mode == Mode::Library && config.max_helpers > 0 {
            for (name, _) in self.index.topk(query_vec, config.max_helpers, EntryKind::Helper)? {
                if let Some(src) = self.bank.source_of(&name) {
                    helpers.push(src.to_string());
                    helper_names.push(name);
                }
            }
        }
        let request = prompts::build_agent_prompt(&example.prompt_query(), &helpers, &demo_shots, &primitive_shots, registry)
            .map_err(|e| AgentError::Prompt(e.to_string()))?
            .with_model(&config.model);
        let completion = backend.complete(&request)?;
        let program = extract_program(&completion);
        Ok(Synthesis { request, demo_ids, primitive_ids, helper_names, completion, program })
    }
}

/// One scored test example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub example_id: String,
    pub program: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub error: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub stdout: String,
    pub correct: bool,
    /// "gold-program" or "goal".
    pub scored_by: String,
    /// Bank helpers the program invoked, in name order.
    pub helpers_invoked: Vec<String>,
    /// Dynamic calls per bank helper.
    pub helper_calls: BTreeMap<String, u64>,
    pub prompt_demos: Vec<String>,
    pub prompt_primitives: Vec<String>,
    pub prompt_helpers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: Mode,
    pub domain: Domain,
    pub examples: usize,
    pub scored: usize,
    pub skipped: Vec<String>,
    pub correct: usize,
    pub accuracy: f64,
    /// Total dynamic calls per bank helper over all predictions.
    pub helper_usage: BTreeMap<String, u64>,
}

pub struct Evaluation {
    pub records: Vec<EvalRecord>,
    pub summary: EvalSummary,
}

enum Gold {
    Result(DomainResult),
    Goal,
}

fn gold_for(example: &Example, registry: &Arc<Registry>, budget: u64) -> Result<Gold, String> {
    if !example.program.trim().is_empty() {
        return example.gold_result(registry, budget).map(Gold::Result);
    }
    if example.task.is_some() {
        return Ok(Gold::Goal);
    }
    Err(format!("{}: no gold program and no goal to score against", example.id))
}

/// Run a predicted program with helpers resolved from the bank and score it.
fn score(
    id: &str,
    program: &str,
    gold: &Gold,
    registry: &Arc<Registry>,
    bank: &CodeBank,
    budget: u64,
) -> (Status, String, String, bool, BTreeMap<String, u64>) {
    let ast = match parse(program) {
        Ok(a) => a,
        Err(e) => return (Status::ParseError, e.to_string(), String::new(), false, BTreeMap::new()),
    };
    let lookup = |n: &str| bank.source_of(n).map(str::to_string);
    let helpers = match resolve_helpers(&ast, registry, &lookup) {
        Ok(h) => h,
        Err(name) => {
            return (Status::RuntimeError, format!("undefined function '{name}'"), String::new(), false, BTreeMap::new())
        }
    };
    let defs = match helper_defs(&helpers) {
        Ok(d) => d,
        Err(e) => return (Status::ParseError, e, String::new(), false, BTreeMap::new()),
    };
    let env = Env::new(registry.clone()).with_budget(budget).with_helpers(defs);
    let out = execute(&ast, &env);
    let own = defined_names(&ast);
    let calls: BTreeMap<String, u64> = out
        .call_counts
        .iter()
        .filter(|(n, c)| **c > 0 && !own.contains(*n) && bank.get(n).is_some())
        .map(|(n, c)| (n.clone(), *c))
        .collect();
    let correct = match (result_of(registry, &out), gold) {
        (Some(r), Gold::Result(g)) => compare_results(&r, g) == Ok(true),
        (Some(DomainResult::Crafting { goal_achieved, .. }), Gold::Goal) => goal_achieved,
        _ => false,
    };
    log::debug!("{id}: {} ({})", out.status, if correct { "correct" } else { "incorrect" });
    (out.status, out.error, out.stdout, correct, calls)
}

/// Synthesize and score every test example.
pub fn evaluate(
    test: &[Example],
    library: &Library<'_>,
    embedder: &dyn Embedder,
    backend: &dyn Backend,
    config: &AgentConfig,
) -> Result<Evaluation, AgentError> {
    config.validate()?;
    let queries: Vec<String> = test.iter().map(|e| e.query.clone()).collect();
    let vecs = if queries.is_empty() { Vec::new() } else { embedder.embed(&queries)? };
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (ex, v) in test.iter().zip(&vecs) {
        let prepared = ex.registry(config.domain).and_then(|reg| gold_for(ex, &reg, config.budget).map(|g| (reg, g)));
        let (registry, gold) = match prepared {
            Ok(x) => x,
            Err(e) => {
                log::warn!("skipping {e}");
                skipped.push(ex.id.clone());
                continue;
            }
        };
        let syn = library.synthesize(ex, v, &registry, backend, config)?;
        let (program, (status, error, stdout, correct, helper_calls)) = match &syn.program {
            Ok(p) => (p.clone(), score(&ex.id, p, &gold, &registry, library.bank, config.budget)),
            Err(e) => (
                String::new(),
                (Status::ParseError, format!("no parseable program in completion: {e}"), String::new(), false, BTreeMap::new()),
            ),
        };
        records.push(EvalRecord {
            example_id: ex.id.clone(),
            program,
            status,
            error,
            stdout,
            correct,
            scored_by: if matches!(gold, Gold::Goal) { "goal" } else { "gold-program" }.into(),
            helpers_invoked: helper_calls.keys().cloned().collect(),
            helper_calls,
            prompt_demos: syn.demo_ids,
            prompt_primitives: syn.primitive_ids,
            prompt_helpers: syn.helper_names,
        });
    }
    let summary = summarize(&records, skipped, test.len(), config);
    Ok(Evaluation { records, summary })
}

pub fn summarize(records: &[EvalRecord], skipped: Vec<String>, examples: usize, config: &AgentConfig) -> EvalSummary {
    let correct = records.iter().filter(|r| r.correct).count();
    let mut helper_usage: BTreeMap<String, u64> = BTreeMap::new();
    for r in records {
        for (n, c) in &r.helper_calls {
            *helper_usage.entry(n.clone()).or_default() += c;
        }
    }
    EvalSummary {
        mode: config.mode,
        domain: config.domain,
        examples,
        scored: records.len(),
        skipped,
        correct,
        accuracy: if records.is_empty() { 0.0 } else { correct as f64 / records.len() as f64 },
        helper_usage,
    }
}

/// Helper usage from a results file, most used first, ties by name.
pub fn usage_histogram(records: &[EvalRecord], top: usize) -> Vec<(String, u64)> {
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    for r in records {
        for (n, c) in &r.helper_calls {
            *totals.entry(n.clone()).or_default() += c;
        }
    }
    let mut v: Vec<(String, u64)> = totals.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(top);
    v
}
