//! The training loop: refactor each batch, verify by execution, retry the
//! failures once, commit, and periodically edit and prune the code bank.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebank::{self, AddOutcome, CodeBank, CodeBankError, Demo, DemoBank, HelperFunction};
use crate::dataset::Example;
use crate::domains::{Domain, DomainResult, Registry};
use crate::gateway::prompts::{self, EditCase, RetryItem, Shot, MAX_PROMPT_HELPERS};
use crate::gateway::{extract_program, parse_refactor_response, Backend, ChatRequest, GatewayError, RefactorProposal};
use crate::preprocess::BatchManifest;
use crate::proglang::{parse, DEFAULT_BUDGET};
use crate::verify::{run_and_compare, verify_program, Verdict};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub domain: Domain,
    pub batch_size: usize,
    pub edit_every: u64,
    pub prune_every: u64,
    /// Passes over the batch sequence.
    pub rounds: u32,
    pub theta: f64,
    pub min_uses: usize,
    pub add_comments: bool,
    pub filter_before_testing: bool,
    pub retry: bool,
    pub edit: bool,
    pub prune: bool,
    pub curriculum: bool,
    pub budget: u64,
    /// Drives the shuffle when the curriculum is off.
    pub seed: u64,
    pub model: String,
}

impl TrainConfig {
    pub fn for_domain(domain: Domain) -> Self {
        let (rounds, batch_size, add_comments, filter_before_testing) = match domain {
            Domain::Logo => (3, 5, true, true),
            Domain::Date => (1, 3, false, true),
            Domain::Textcraft => (1, 4, false, false),
        };
        TrainConfig {
            domain,
            batch_size,
            edit_every: 5,
            prune_every: 5,
            rounds,
            theta: 0.0,
            min_uses: 3,
            add_comments,
            filter_before_testing,
            retry: true,
            edit: true,
            prune: true,
            curriculum: true,
            budget: DEFAULT_BUDGET,
            seed: 0,
            model: crate::gateway::DEFAULT_MODEL.into(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.edit_every == 0 || self.prune_every == 0 {
            return bad("edit_every and prune_every must be at least 1");
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !self.theta.is_finite() {
            return bad("theta must be finite");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_domain(Domain::Logo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    /// Global 1-based batch counter across epochs.
    pub index: u64,
    pub epoch: u32,
    /// Position of the batch in the manifest.
    pub position: usize,
    pub example_ids: Vec<String>,
    pub proposed: usize,
    pub verified: usize,
    pub failed: usize,
    pub retried: usize,
    pub recovered: usize,
    pub helpers_added: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Edit,
    Prune,
    /// The prune pass run once after training.
    Filter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub kind: StageKind,
    pub after_batch: u64,
    pub epoch: u32,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub batches: Vec<BatchOutcome>,
    pub events: Vec<StageEvent>,
    pub helpers: usize,
    pub pruned: usize,
    pub demos: usize,
    pub successful_demos: usize,
}

impl TrainReport {
    fn new(config: TrainConfig) -> Self {
        TrainReport { config, batches: Vec::new(), events: Vec::new(), helpers: 0, pruned: 0, demos: 0, successful_demos: 0 }
    }

    pub fn events_of(&self, kind: StageKind) -> impl Iterator<Item = &StageEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn summary(&self) -> String {
        let proposed: usize = self.batches.iter().map(|b| b.proposed).sum();
        let verified: usize = self.batches.iter().map(|b| b.verified).sum();
        let retried: usize = self.batches.iter().map(|b| b.retried).sum();
        let recovered: usize = self.batches.iter().map(|b| b.recovered).sum();
        let mut s = format!(
            "{} batches over {} epoch(s): {verified}/{proposed} programs verified ({recovered} of {retried} recovered on retry)\n",
            self.batches.len(),
            self.config.rounds
        );
        for kind in [StageKind::Edit, StageKind::Prune, StageKind::Filter] {
            let ev: Vec<&StageEvent> = self.events_of(kind).collect();
            if !ev.is_empty() {
                let at: Vec<String> = ev.iter().map(|e| e.after_batch.to_string()).collect();
                let changes: usize = ev.iter().map(|e| e.details.len()).sum();
                let noun = if at.len() == 1 { "batch" } else { "batches" };
                s.push_str(&format!("{kind:?} after {noun} {}: {changes} change(s)\n", at.join(", ")));
            }
        }
        s.push_str(&format!(
            "code bank: {} helpers ({} pruned); demo bank: {} demos ({} successful)\n",
            self.helpers, self.pruned, self.demos, self.successful_demos
        ));
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("gateway error during batch {batch}: {source} (banks saved up to the previous batch)")]
    Gateway { batch: u64, source: GatewayError },
    #[error(transparent)]
    Bank(#[from] CodeBankError),
    #[error("{path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub struct TrainOutput {
    pub bank: CodeBank,
    pub demos: DemoBank,
    pub report: TrainReport,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    next_step: usize,
    finished: bool,
    report: TrainReport,
}

/// (epoch, manifest position) for every batch the run will process.
pub fn schedule(manifest: &BatchManifest, config: &TrainConfig) -> Vec<(u32, usize)> {
    let n = manifest.batches.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(n * config.rounds as usize);
    for epoch in 1..=config.rounds {
        let order: Vec<usize> = if config.curriculum {
            manifest.curriculum.clone()
        } else {
            let mut o: Vec<usize> = (0..n).collect();
            o.shuffle(&mut rng);
            o
        };
        out.extend(order.into_iter().map(|p| (epoch, p)));
    }
    out
}

struct Candidate {
    example_id: String,
    program: String,
    verdict: Verdict,
    /// A first attempt that failed and was replaced on retry.
    first_attempt: Option<(String, Verdict)>,
}

fn failed(feedback: impl Into<String>) -> Verdict {
    Verdict { passed: false, feedback: feedback.into(), helpers: BTreeMap::new(), outcome: None }
}

struct Trainer<'a> {
    config: TrainConfig,
    backend: &'a dyn Backend,
    examples: BTreeMap<String, &'a Example>,
    registries: BTreeMap<String, Arc<Registry>>,
    golds: BTreeMap<String, DomainResult>,
    bank: CodeBank,
    demos: DemoBank,
    report: TrainReport,
}

impl<'a> Trainer<'a> {
    fn new(examples: &'a [Example], manifest: &BatchManifest, config: TrainConfig, backend: &'a dyn Backend) -> Result<Self, TrainError> {
        config.validate()?;
        if manifest.domain != config.domain {
            return Err(TrainError::Config(format!(
                "batch manifest is for {}, configuration for {}",
                manifest.domain, config.domain
            )));
        }
        let by_id: BTreeMap<String, &Example> = examples.iter().map(|e| (e.id.clone(), e)).collect();
        let mut registries = BTreeMap::new();
        let mut golds = BTreeMap::new();
        for batch in &manifest.batches {
            for id in &batch.example_ids {
                let ex = by_id.get(id).ok_or_else(|| TrainError::Data(format!("batch manifest names unknown example '{id}'")))?;
                let reg = ex.registry(config.domain).map_err(TrainError::Data)?;
                golds.insert(id.clone(), ex.gold_result(&reg, config.budget).map_err(TrainError::Data)?);
                registries.insert(id.clone(), reg);
            }
        }
        Ok(Trainer {
            report: TrainReport::new(config.clone()),
            config,
            backend,
            examples: by_id,
            registries,
            golds,
            bank: CodeBank::new(),
            demos: DemoBank::new(),
        })
    }

    fn ask(&self, req: ChatRequest, step: u64) -> Result<String, TrainError> {
        self.backend
            .complete(&req.with_model(&self.config.model))
            .map_err(|source| TrainError::Gateway { batch: step, source })
    }

    fn registry(&self, example_id: &str) -> &Arc<Registry> {
        &self.registries[example_id]
    }

    fn live_sources(&self, except: Option<&str>) -> Vec<String> {
        self.bank.functions.values().filter(|f| Some(f.name.as_str()) != except).map(|f| f.source.clone()).collect()
    }

    fn verify_with(&self, program: &str, example_id: &str, layers: &[&BTreeMap<String, String>]) -> Verdict {
        let lookup = |n: &str| {
            layers.iter().find_map(|l| l.get(n).cloned()).or_else(|| self.bank.source_of(n).map(str::to_string))
        };
        verify_program(program, &self.golds[example_id], self.registry(example_id), &lookup, self.config.budget)
    }

    fn run_batch(&mut self, step: u64, epoch: u32, position: usize, ids: &[String]) -> Result<BatchOutcome, TrainError> {
        let shots: Vec<Shot> = ids.iter().map(|id| Shot::new(self.examples[id].prompt_query(), &self.examples[id].program)).collect();
        let prompt_reg = self.registry(&ids[0]).clone();
        let req = prompts::build_refactor_prompt(&shots, &self.live_sources(None), &prompt_reg)
            .map_err(|e| TrainError::Data(e.to_string()))?;
        let proposal = parse_refactor_response(&self.ask(req, step)?);
        let mut outcome = BatchOutcome {
            index: step,
            epoch,
            position,
            example_ids: ids.to_vec(),
            proposed: ids.len(),
            verified: 0,
            failed: 0,
            retried: 0,
            recovered: 0,
            helpers_added: Vec::new(),
            diagnostics: proposal.diagnostics.clone(),
        };
        let h_new = helper_map(&proposal);
        let mut cands: Vec<Candidate> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let (program, verdict) = match program_for(&proposal, i, ids.len()) {
                    Some(src) => (src.clone(), self.verify_with(&src, id, &[&h_new])),
                    None => (String::new(), failed(format!("no rewritten program was returned for query {}", i + 1))),
                };
                Candidate { example_id: id.clone(), program, verdict, first_attempt: None }
            })
            .collect();

        let failures: Vec<usize> = (0..cands.len()).filter(|&i| !cands[i].verdict.passed).collect();
        if self.config.retry && !failures.is_empty() {
            outcome.retried = failures.len();
            let items: Vec<RetryItem> = failures
                .iter()
                .map(|&i| {
                    let c = &cands[i];
                    let ex = self.examples[&c.example_id];
                    let mut failed_helpers: Vec<String> = c
                        .verdict
                        .helpers
                        .iter()
                        .filter(|(n, s)| self.bank.source_of(n) != Some(s.as_str()))
                        .map(|(_, s)| s.clone())
                        .collect();
                    if c.verdict.helpers.is_empty() {
                        failed_helpers = h_new.values().cloned().collect();
                    }
                    RetryItem {
                        query: ex.prompt_query(),
                        original: ex.program.clone(),
                        failed: c.program.clone(),
                        failed_helpers,
                        feedback: c.verdict.feedback.clone(),
                    }
                })
                .collect();
            let req = prompts::build_retry_prompt(&items, &self.live_sources(None), &prompt_reg)
                .map_err(|e| TrainError::Data(e.to_string()))?;
            let retry = parse_refactor_response(&self.ask(req, step)?);
            outcome.diagnostics.extend(retry.diagnostics.iter().map(|d| format!("retry: {d}")));
            let h_retry = helper_map(&retry);
            for (j, &i) in failures.iter().enumerate() {
                let Some(src) = program_for(&retry, j, failures.len()) else { continue };
                let v = self.verify_with(&src, &cands[i].example_id, &[&h_retry, &h_new]);
                if v.passed {
                    outcome.recovered += 1;
                    let c = &mut cands[i];
                    let old_prog = std::mem::replace(&mut c.program, src);
                    let old = std::mem::replace(&mut c.verdict, v);
                    c.first_attempt = Some((old_prog, old));
                }
            }
        }

        for c in &cands {
            let demo_id = format!("{}@e{epoch}", c.example_id);
            if let Some((prog, verdict)) = &c.first_attempt {
                self.commit(&format!("{demo_id}/attempt1"), &c.example_id, prog, verdict, epoch, step, &mut outcome)?;
            }
            self.commit(&demo_id, &c.example_id, &c.program, &c.verdict, epoch, step, &mut outcome)?;
        }
        outcome.verified = cands.iter().filter(|c| c.verdict.passed).count();
        outcome.failed = outcome.proposed - outcome.verified;
        Ok(outcome)
    }

    #[allow(clippy::too_many_arguments)]
    fn commit(
        &mut self,
        demo_id: &str,
        example_id: &str,
        program: &str,
        verdict: &Verdict,
        epoch: u32,
        step: u64,
        outcome: &mut BatchOutcome,
    ) -> Result<(), TrainError> {
        let n_p = verdict.helpers.len() as u32;
        if verdict.passed {
            for (name, src) in &verdict.helpers {
                if self.bank.source_of(name) == Some(src.as_str()) {
                    continue;
                }
                if let Some(old) = self.bank.source_of(name).map(str::to_string) {
                    let n = self.demos.retire(name, &old);
                    outcome.diagnostics.push(format!("{name} replaced by a new verified body; {n} demo(s) retired"));
                }
                match self.bank.add(HelperFunction::from_source(src, step)?) {
                    AddOutcome::Added | AddOutcome::Replaced => outcome.helpers_added.push(name.clone()),
                    AddOutcome::Tombstoned => outcome.diagnostics.push(format!("{name} matches a pruned helper; not re-added")),
                    AddOutcome::Duplicate => {}
                }
            }
        }
        for (name, src) in &verdict.helpers {
            if self.bank.source_of(name) == Some(src.as_str()) {
                self.bank.set_record(demo_id, name, verdict.passed, n_p)?;
            } else if !verdict.passed {
                self.bank.record_pending(demo_id, &HelperFunction::from_source(src, step)?, n_p);
            }
        }
        let ex = self.examples[example_id];
        self.demos.push(Demo {
            id: demo_id.into(),
            example_id: example_id.into(),
            query: ex.query.clone(),
            program: program.into(),
            success: verdict.passed,
            helpers: verdict.helpers.clone(),
            eligible: true,
            gold: self.golds[example_id].clone(),
            task: ex.task.clone(),
            epoch,
            batch: step,
        });
        Ok(())
    }

    /// Write the records a demo contributes to the live helpers it uses.
    fn record_demo(&mut self, demo: &Demo) -> Result<(), TrainError> {
        let n_p = demo.helpers.len() as u32;
        for (n, s) in &demo.helpers {
            if self.bank.source_of(n) == Some(s.as_str()) {
                self.bank.set_record(&demo.id, n, demo.success, n_p)?;
            }
        }
        Ok(())
    }

    fn edit_stage(&mut self, step: u64) -> Result<Vec<String>, TrainError> {
        let mut details = Vec::new();
        let targets: Vec<String> = self.bank.functions.values().filter(|f| f.fails() > 0).map(|f| f.name.clone()).collect();
        for name in targets {
            if let Some(d) = self.edit_function(&name, step)? {
                details.push(d);
            }
        }
        Ok(details)
    }

    fn edit_function(&mut self, name: &str, step: u64) -> Result<Option<String>, TrainError> {
        let Some(old_src) = self.bank.source_of(name).map(str::to_string) else { return Ok(None) };
        let tests: Vec<Demo> = self.demos.using(name, &old_src).cloned().collect();
        let Some(fail_demo) = tests.iter().find(|d| !d.success) else { return Ok(None) };
        let before = tests.iter().filter(|d| d.success).count();
        let reg = self.registry(&fail_demo.example_id).clone();
        let case = |d: &Demo, feedback: Option<String>| EditCase { query: self.examples[&d.example_id].prompt_query(), program: d.program.clone(), feedback };
        let feedback = match parse(&fail_demo.program) {
            Ok(ast) => run_and_compare(&ast, fail_demo.helpers.clone(), &fail_demo.gold, self.registry(&fail_demo.example_id), self.config.budget).feedback,
            Err(e) => format!("parse-error: {e}"),
        };
        let success = tests.iter().find(|d| d.success).map(|d| case(d, None));
        let mut others = self.live_sources(Some(name));
        others.truncate(MAX_PROMPT_HELPERS);
        let req = prompts::build_edit_prompt(&old_src, name, before, tests.len() - before, success.as_ref(), &case(fail_demo, Some(feedback)), &others, &reg)
            .map_err(|e| TrainError::Data(e.to_string()))?;
        let text = self.ask(req, step)?;
        let Some(new_src) = edited_definition(&text, name) else {
            return Ok(Some(format!("{name}: edit discarded (no parseable definition of {name})")));
        };
        if new_src == old_src {
            return Ok(Some(format!("{name}: edit discarded (unchanged)")));
        }
        let old_params = codebank::single_def(&old_src)?.params;
        let signature_changed = codebank::single_def(&new_src)?.params != old_params;

        let mut rerun: Vec<Demo> = Vec::with_capacity(tests.len());
        for d in &tests {
            let program = if signature_changed {
                let req = prompts::build_migration_prompt(name, &old_src, &new_src, &self.examples[&d.example_id].prompt_query(), &d.program);
                extract_program(&self.ask(req, step)?).unwrap_or_else(|_| d.program.clone())
            } else {
                d.program.clone()
            };
            let mut layer = d.helpers.clone();
            layer.insert(name.to_string(), new_src.clone());
            let v = self.verify_with(&program, &d.example_id, &[&layer]);
            let mut nd = d.clone();
            nd.program = program;
            nd.success = v.passed;
            nd.helpers = v.helpers;
            if !v.passed && nd.helpers.is_empty() {
                // keep the edited helper attached so the failure is still counted against it
                nd.helpers = layer;
            }
            rerun.push(nd);
        }
        let after = rerun.iter().filter(|d| d.success).count();
        if after <= before {
            return Ok(Some(format!("{name}: edit rejected ({after} vs {before} of {} unit tests pass)", tests.len())));
        }
        for d in &tests {
            for (n, s) in &d.helpers {
                if self.bank.source_of(n) == Some(s.as_str()) {
                    self.bank.remove_record(&d.id, n);
                }
            }
        }
        let mut helper = HelperFunction::from_source(&new_src, self.bank.get(name).map_or(step, |f| f.created_at))?;
        helper.records.clear();
        self.bank.functions.insert(name.to_string(), helper);
        for nd in rerun {
            self.record_demo(&nd)?;
            self.demos.push(nd);
        }
        Ok(Some(format!(
            "{name}: edit adopted ({before} -> {after} of {} unit tests pass{})",
            tests.len(),
            if signature_changed { ", unit tests migrated" } else { "" }
        )))
    }

    fn prune_stage(&mut self) -> Vec<String> {
        let pruned = self.bank.prune(self.config.theta, self.config.min_uses);
        pruned
            .into_iter()
            .map(|p| {
                let src = self.bank.tombstones[&p.name].source.clone();
                let n = self.demos.retire(&p.name, &src);
                format!("{}: pruned (score {:.3} over {} uses); {n} demo(s) retired", p.name, p.score, p.uses)
            })
            .collect()
    }

    fn finish_report(&mut self) {
        self.report.helpers = self.bank.len();
        self.report.pruned = self.bank.tombstones.len();
        self.report.demos = self.demos.len();
        self.report.successful_demos = self.demos.demos.iter().filter(|d| d.success).count();
    }

    fn save(&mut self, dir: &Path, next_step: usize, finished: bool) -> Result<(), TrainError> {
        self.finish_report();
        codebank::save(&self.bank, &self.demos, dir)?;
        let ck = Checkpoint { schema_version: CHECKPOINT_VERSION, next_step, finished, report: self.report.clone() };
        write_json(&dir.join(CHECKPOINT_FILE), &ck)?;
        if finished {
            write_json(&dir.join(REPORT_FILE), &self.report)?;
        }
        Ok(())
    }

    fn run(mut self, manifest: &BatchManifest, start: usize, out_dir: Option<&Path>) -> Result<TrainOutput, TrainError> {
        let plan = schedule(manifest, &self.config);
        for (s, &(epoch, position)) in plan.iter().enumerate().skip(start) {
            let step = s as u64 + 1;
            let before = (self.bank.clone(), self.demos.clone(), self.report.clone());
            match self.step(step, epoch, position, manifest) {
                Ok(()) => {}
                Err(e) => {
                    if let (Some(dir), TrainError::Gateway { .. }) = (out_dir, &e) {
                        (self.bank, self.demos, self.report) = before;
                        self.save(dir, s, false)?;
                    }
                    return Err(e);
                }
            }
            if let Some(dir) = out_dir {
                self.save(dir, s + 1, false)?;
            }
        }
        if self.config.filter_before_testing && self.config.prune {
            let details = self.prune_stage();
            let epoch = plan.last().map_or(1, |p| p.0);
            self.report.events.push(StageEvent { kind: StageKind::Filter, after_batch: plan.len() as u64, epoch, details });
        }
        match out_dir {
            Some(dir) => self.save(dir, plan.len(), true)?,
            None => self.finish_report(),
        }
        Ok(TrainOutput { bank: self.bank, demos: self.demos, report: self.report })
    }

    fn step(&mut self, step: u64, epoch: u32, position: usize, manifest: &BatchManifest) -> Result<(), TrainError> {
        let ids = &manifest.batches[position].example_ids;
        let outcome = self.run_batch(step, epoch, position, ids)?;
        log::info!(
            "batch {step} (epoch {epoch}): {}/{} verified, {} recovered on retry",
            outcome.verified,
            outcome.proposed,
            outcome.recovered
        );
        self.report.batches.push(outcome);
        if self.config.edit && step.is_multiple_of(self.config.edit_every) {
            let details = self.edit_stage(step)?;
            self.report.events.push(StageEvent { kind: StageKind::Edit, after_batch: step, epoch, details });
        }
        if self.config.prune && step.is_multiple_of(self.config.prune_every) {
            let details = self.prune_stage();
            self.report.events.push(StageEvent { kind: StageKind::Prune, after_batch: step, epoch, details });
        }
        Ok(())
    }
}

fn helper_map(p: &RefactorProposal) -> BTreeMap<String, String> {
    p.helpers.iter().map(|h| (h.name.clone(), h.source.clone())).collect()
}

/// Program `i` (0-based) of a proposal; a lone unnumbered program counts
/// for a one-member batch.
fn program_for(p: &RefactorProposal, i: usize, n: usize) -> Option<String> {
    p.program(i + 1)
        .or_else(|| if n == 1 { p.program(0) } else { None })
        .map(|x| x.source.clone())
}

/// The canonical definition of `name` in an edit response.
fn edited_definition(text: &str, name: &str) -> Option<String> {
    let src = extract_program(text).ok()?;
    let ast = parse(&src).ok()?;
    let def = ast.functions().find(|d| d.name == name)?;
    Some(crate::proglang::print_function(def))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TrainError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| TrainError::Checkpoint { path: path.display().to_string(), message: e.to_string() })
}

/// Train from scratch. With `out_dir`, banks and a checkpoint are written
/// after every batch.
pub fn train(
    examples: &[Example],
    manifest: &BatchManifest,
    config: TrainConfig,
    backend: &dyn Backend,
    out_dir: Option<&Path>,
) -> Result<TrainOutput, TrainError> {
    Trainer::new(examples, manifest, config, backend)?.run(manifest, 0, out_dir)
}

/// Continue an interrupted run from the checkpoint in `dir`, with the
/// configuration it was started with.
pub fn resume(examples: &[Example], manifest: &BatchManifest, backend: &dyn Backend, dir: &Path) -> Result<TrainOutput, TrainError> {
    let path = dir.join(CHECKPOINT_FILE);
    let bad = |message: String| TrainError::Checkpoint { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(&path).map_err(|e| bad(e.to_string()))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if ck.schema_version != CHECKPOINT_VERSION {
        return Err(bad(format!("checkpoint version {}, expected {CHECKPOINT_VERSION}", ck.schema_version)));
    }
    let (bank, demos) = codebank::load(dir)?;
    if ck.finished {
        return Ok(TrainOutput { bank, demos, report: ck.report });
    }
    let mut t = Trainer::new(examples, manifest, ck.report.config.clone(), backend)?;
    t.bank = bank;
    t.demos = demos;
    t.report = ck.report;
    t.run(manifest, ck.next_step, Some(dir))
}

/// Helpers whose records disagree with the demos that use them; empty when
/// the bank and demo bank are consistent.
pub fn record_mismatches(bank: &CodeBank, demos: &DemoBank) -> Vec<String> {
    let mut out = Vec::new();
    for f in bank.functions.values() {
        let mut users: Vec<&str> = demos.using(&f.name, &f.source).map(|d| d.id.as_str()).collect();
        let mut recs: Vec<&str> = f.records.iter().map(|r| r.program_id.as_str()).collect();
        users.sort_unstable();
        recs.sort_unstable();
        if users != recs {
            out.push(format!("{}: demos {users:?}, records {recs:?}", f.name));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::FnBackend;
    use crate::preprocess::BatchEntry;

    fn logo_ex(id: &str, query: &str, program: &str) -> Example {
        Example::new(id, query, program)
    }

    fn manifest(batches: Vec<Vec<&str>>) -> BatchManifest {
        let n = batches.len();
        BatchManifest {
            schema_version: 1,
            domain: Domain::Logo,
            dataset: "t.jsonl".into(),
            dataset_sha256: String::new(),
            batch_size: 2,
            embedder: "test".into(),
            batches: batches
                .into_iter()
                .map(|b| BatchEntry { example_ids: b.into_iter().map(String::from).collect(), mean_tokens: 1.0 })
                .collect(),
            curriculum: (0..n).collect(),
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig { rounds: 1, filter_before_testing: false, ..TrainConfig::for_domain(Domain::Logo) }
    }

    const SQ_HELPER: &str = "def draw_sq(n):\n    # draws a square\n    for i in range(4):\n        forward(n)\n        left(90.0)\n";

    fn examples() -> Vec<Example> {
        vec![
            logo_ex("a", "a small square", "for i in range(4):\n    forward(2)\n    left(90.0)\n"),
            logo_ex("b", "a big square", "for i in range(4):\n    forward(5)\n    left(90.0)\n"),
            logo_ex("c", "a line", "forward(3)\n"),
        ]
    }

    #[test]
    fn batch_of_two_shares_a_helper_and_commits() {
        let reply = format!("NEW PROGRAM 1:\ndraw_sq(2)\nNEW PROGRAM 2:\ndraw_sq(5)\nNEW HELPERS:\n{SQ_HELPER}");
        let b = FnBackend::new("t", move |_r: &ChatRequest| Ok(reply.clone()));
        let exs = examples();
        let out = train(&exs, &manifest(vec![vec!["a", "b"]]), cfg(), &b, None).unwrap();
        assert_eq!(out.bank.len(), 1);
        assert_eq!(out.bank.get("draw_sq").unwrap().passes(), 2);
        assert_eq!(out.demos.len(), 2);
        let bo = &out.report.batches[0];
        assert_eq!((bo.proposed, bo.verified, bo.failed), (2, 2, 0));
        assert!(record_mismatches(&out.bank, &out.demos).is_empty());
    }

    #[test]
    fn missing_program_fails_member_and_failing_helper_stays_out() {
        let reply = "NEW PROGRAM 1:\ndraw_bad()\nNEW HELPERS:\ndef draw_bad():\n    forward(9)\n".to_string();
        let b = FnBackend::new("t", move |_r: &ChatRequest| Ok(reply.clone()));
        let exs = examples();
        let c = TrainConfig { retry: false, ..cfg() };
        let out = train(&exs, &manifest(vec![vec!["a", "b"]]), c, &b, None).unwrap();
        let bo = &out.report.batches[0];
        assert_eq!((bo.verified, bo.failed, bo.retried), (0, 2, 0));
        assert!(out.bank.is_empty());
        assert_eq!(out.bank.pending.len(), 1);
        assert_eq!(out.demos.demos.iter().filter(|d| !d.success).count(), 2);
    }

    #[test]
    fn retry_recovers_an_undefined_helper() {
        let b = FnBackend::new("t", |r: &ChatRequest| {
            Ok(if r.prompt().contains("did not pass verification") {
                "NEW PROGRAM 1:\ndraw_line(3)\nNEW HELPERS:\ndef draw_line(n):\n    forward(n)\n".into()
            } else {
                "NEW PROGRAM 1:\ndraw_line(3)\nNEW HELPERS:\n".into()
            })
        });
        let exs = examples();
        let out = train(&exs, &manifest(vec![vec!["c"]]), cfg(), &b, None).unwrap();
        let bo = &out.report.batches[0];
        assert_eq!((bo.retried, bo.recovered, bo.verified), (1, 1, 1));
        assert!(out.bank.get("draw_line").is_some());
        let first = out.demos.get("c@e1/attempt1").unwrap();
        assert!(!first.success);
        assert!(out.demos.get("c@e1").unwrap().success);
    }

    #[test]
    fn cadence_and_filter() {
        let b = FnBackend::new("t", |_r: &ChatRequest| Ok("nothing useful".to_string()));
        let exs: Vec<Example> = (0..10).map(|i| logo_ex(&format!("e{i}"), &format!("line {i}"), &format!("forward({})\n", i + 1))).collect();
        let ids: Vec<String> = exs.iter().map(|e| e.id.clone()).collect();
        let m = manifest(ids.iter().map(|i| vec![i.as_str()]).collect());
        let c = TrainConfig { filter_before_testing: true, ..cfg() };
        let out = train(&exs, &m, c, &b, None).unwrap();
        let at = |k| out.report.events_of(k).map(|e| e.after_batch).collect::<Vec<_>>();
        assert_eq!(at(StageKind::Edit), [5, 10]);
        assert_eq!(at(StageKind::Prune), [5, 10]);
        assert_eq!(at(StageKind::Filter), [10]);
        let c = TrainConfig { edit: false, prune: false, filter_before_testing: true, ..cfg() };
        let out = train(&exs, &m, c, &b, None).unwrap();
        assert!(out.report.events.is_empty());
    }

    #[test]
    fn shuffled_schedule_is_seeded() {
        let m = manifest((0..8).map(|_| vec!["a"]).collect());
        let c = TrainConfig { curriculum: false, rounds: 2, ..cfg() };
        let s1 = schedule(&m, &c);
        assert_eq!(s1, schedule(&m, &c));
        assert_eq!(s1.len(), 16);
        assert_ne!(s1.iter().map(|x| x.1).take(8).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
        let other = schedule(&m, &TrainConfig { seed: 1, ..c.clone() });
        assert_ne!(s1, other);
    }

    #[test]
    fn edit_with_more_passes_is_adopted_and_migrates_calls() {
        // the first batch admits a square helper with a hardcoded size
        let fixed = "def draw_sq():\n    # draws a square\n    for i in range(4):\n        forward(2)\n        left(90.0)\n";
        let b = FnBackend::new("t", move |r: &ChatRequest| {
            let p = r.prompt();
            Ok(if p.contains("Refactor the following function") {
                format!("Thoughts:\n1. hardcoded size\nNEW PROGRAM:\n{SQ_HELPER}")
            } else if p.contains("was changed from") {
                if p.contains("forward(5)") || p.contains("a big square") {
                    "NEW PROGRAM:\ndraw_sq(5)\n".into()
                } else {
                    "NEW PROGRAM:\ndraw_sq(2)\n".into()
                }
            } else if p.contains("did not pass verification") {
                "NEW PROGRAM 1:\nforward(1)\n".into()
            } else {
                format!("NEW PROGRAM 1:\ndraw_sq()\nNEW PROGRAM 2:\ndraw_sq()\nNEW HELPERS:\n{fixed}")
            })
        });
        let exs = examples();
        let c = TrainConfig { edit_every: 1, prune: false, ..cfg() };
        let out = train(&exs, &manifest(vec![vec!["a", "b"]]), c, &b, None).unwrap();
        let ev = out.report.events_of(StageKind::Edit).next().unwrap();
        assert!(ev.details[0].contains("edit adopted (1 -> 2"), "{:?}", ev.details);
        let f = out.bank.get("draw_sq").unwrap();
        assert_eq!(f.def().params, ["n"]);
        assert_eq!(f.passes(), 2);
        assert_eq!(out.demos.get("b@e1").unwrap().program.trim(), "draw_sq(5)");
        assert!(record_mismatches(&out.bank, &out.demos).is_empty());
    }

    #[test]
    fn edit_without_improvement_is_rejected() {
        let fixed = "def draw_sq():\n    for i in range(4):\n        forward(2)\n        left(90.0)\n";
        let b = FnBackend::new("t", move |r: &ChatRequest| {
            let p = r.prompt();
            Ok(if p.contains("Refactor the following function") {
                "NEW PROGRAM:\ndef draw_sq():\n    for i in range(4):\n        forward(3)\n        left(90.0)\n".to_string()
            } else if p.contains("did not pass verification") {
                "no".into()
            } else {
                format!("NEW PROGRAM 1:\ndraw_sq()\nNEW PROGRAM 2:\ndraw_sq()\nNEW HELPERS:\n{fixed}")
            })
        });
        let exs = examples();
        let c = TrainConfig { edit_every: 1, prune: false, ..cfg() };
        let out = train(&exs, &manifest(vec![vec!["a", "b"]]), c, &b, None).unwrap();
        let ev = out.report.events_of(StageKind::Edit).next().unwrap();
        assert!(ev.details[0].contains("rejected"), "{:?}", ev.details);
        assert!(out.bank.get("draw_sq").unwrap().source.contains("forward(2)"));
    }

    #[test]
    fn gateway_error_saves_and_resume_continues() {
        let dir = tempfile::tempdir().unwrap();
        let exs = examples();
        let m = manifest(vec![vec!["a"], vec!["c"]]);
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let flaky = FnBackend::new("t", |r: &ChatRequest| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= 1 {
                return Err(GatewayError::Network("down".into()));
            }
            let _ = r;
            Ok(format!("NEW PROGRAM 1:\ndraw_sq(2)\nNEW HELPERS:\n{SQ_HELPER}"))
        });
        let c = TrainConfig { retry: false, ..cfg() };
        let err = train(&exs, &m, c, &flaky, Some(dir.path())).err().unwrap();
        assert!(matches!(err, TrainError::Gateway { batch: 2, .. }));
        let (bank, _) = codebank::load(dir.path()).unwrap();
        assert!(bank.get("draw_sq").is_some());
        let ok = FnBackend::new("t", |_r: &ChatRequest| Ok("NEW PROGRAM 1:\nforward(3)\n".to_string()));
        let out = resume(&exs, &m, &ok, dir.path()).unwrap();
        assert_eq!(out.report.batches.len(), 2);
        assert_eq!(out.report.batches[1].index, 2);
        assert_eq!(out.report.batches[1].verified, 1);
        assert!(dir.path().join(REPORT_FILE).exists());
    }
}
