//! The helper library and the store of refactored demonstrations.
//!
//! Every helper keeps one usage record per program that used it. A helper's
//! score is its number of passing programs minus, for each failing program,
//! one over the number of helpers that program used.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domains::textcraft::CraftTask;
use crate::domains::DomainResult;
use crate::proglang::{parse, print_function, FunctionDef};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODEBANK_FILE: &str = "codebank.json";
pub const DEMOBANK_FILE: &str = "demobank.json";

#[derive(Debug, thiserror::Error)]
pub enum CodeBankError {
    #[error("unknown helper '{0}'")]
    UnknownHelper(String),
    #[error("usage record for program '{0}' has n_p = 0")]
    ZeroUses(String),
    #[error("helper source must hold exactly one function definition: {0}")]
    BadSource(String),
    #[error("{path}: schema version {found}, expected {expected}")]
    Version { path: String, found: u32, expected: u32 },
    #[error("{path}: malformed bank file: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub program_id: String,
    pub passed: bool,
    /// Number of helpers the program used.
    pub n_p: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperFunction {
    pub name: String,
    pub source: String,
    pub description: String,
    /// Global batch counter when the helper entered the bank.
    pub created_at: u64,
    pub records: Vec<UsageRecord>,
}

impl HelperFunction {
    /// Parse `source`, which must define exactly one function. The stored
    /// source is the canonical printing.
    pub fn from_source(source: &str, created_at: u64) -> Result<Self, CodeBankError> {
        let def = single_def(source)?;
        Ok(HelperFunction {
            name: def.name.clone(),
            source: print_function(&def),
            description: def.description().unwrap_or("").to_string(),
            created_at,
            records: Vec::new(),
        })
    }

    pub fn def(&self) -> FunctionDef {
        single_def(&self.source).expect("bank sources are validated on entry")
    }

    pub fn passes(&self) -> usize {
        self.records.iter().filter(|r| r.passed).count()
    }

    pub fn fails(&self) -> usize {
        self.records.len() - self.passes()
    }

    pub fn pass_rate(&self) -> Option<f64> {
        (!self.records.is_empty()).then(|| self.passes() as f64 / self.records.len() as f64)
    }

    pub fn score(&self) -> Result<f64, CodeBankError> {
        score(&self.records)
    }
}

pub fn single_def(source: &str) -> Result<FunctionDef, CodeBankError> {
    let ast = parse(source).map_err(|e| CodeBankError::BadSource(e.to_string()))?;
    let mut defs = ast.functions();
    match (defs.next(), defs.next()) {
        (Some(d), None) if ast.body.len() == 1 => Ok(d.clone()),
        _ => Err(CodeBankError::BadSource(source.lines().next().unwrap_or("").to_string())),
    }
}

/// `|passing| - sum over failing of 1/n_p`.
pub fn score(records: &[UsageRecord]) -> Result<f64, CodeBankError> {
    let mut passed = 0.0;
    let mut penalty = 0.0;
    for r in records {
        if r.n_p == 0 {
            return Err(CodeBankError::ZeroUses(r.program_id.clone()));
        }
        if r.passed {
            passed += 1.0;
        } else {
            penalty += 1.0 / r.n_p as f64;
        }
    }
    Ok(passed - penalty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tombstone {
    pub name: String,
    pub source: String,
    pub score: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AddOutcome {
    Added,
    /// Same name and source already live.
    Duplicate,
    /// A different body with this name was live and has been dropped with
    /// its records.
    Replaced,
    /// Identical to a pruned helper.
    Tombstoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pruned {
    pub name: String,
    pub score: f64,
    pub uses: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodeBank {
    pub functions: BTreeMap<String, HelperFunction>,
    pub tombstones: BTreeMap<String, Tombstone>,
    /// Helpers seen only in failing programs, with those failures. Merged
    /// into the bank if the same definition later verifies.
    pub pending: Vec<HelperFunction>,
}

impl CodeBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&HelperFunction> {
        self.functions.get(name)
    }

    pub fn source_of(&self, name: &str) -> Option<&str> {
        self.functions.get(name).map(|f| f.source.as_str())
    }

    /// Live definitions in name order.
    pub fn sources(&self) -> Vec<String> {
        self.functions.values().map(|f| f.source.clone()).collect()
    }

    pub fn add(&mut self, mut helper: HelperFunction) -> AddOutcome {
        if let Some(t) = self.tombstones.get(&helper.name) {
            if t.source == helper.source {
                return AddOutcome::Tombstoned;
            }
        }
        let outcome = match self.functions.get(&helper.name) {
            Some(live) if live.source == helper.source => return AddOutcome::Duplicate,
            Some(_) => AddOutcome::Replaced,
            None => AddOutcome::Added,
        };
        self.tombstones.remove(&helper.name);
        if let Some(pos) = self.pending.iter().position(|p| p.name == helper.name && p.source == helper.source) {
            let p = self.pending.remove(pos);
            for r in p.records {
                if !helper.records.iter().any(|x| x.program_id == r.program_id) {
                    helper.records.push(r);
                }
            }
        }
        self.functions.insert(helper.name.clone(), helper);
        outcome
    }

    /// One record per helper, sharing `n_p = helpers.len()`. Repeating a
    /// (program, helper) pair has no effect.
    pub fn record_result(&mut self, program_id: &str, helpers: &[String], passed: bool) -> Result<(), CodeBankError> {
        if let Some(missing) = helpers.iter().find(|h| !self.functions.contains_key(*h)) {
            return Err(CodeBankError::UnknownHelper(missing.clone()));
        }
        let n_p = helpers.len() as u32;
        for h in helpers {
            let f = self.functions.get_mut(h).expect("checked above");
            if !f.records.iter().any(|r| r.program_id == program_id) {
                f.records.push(UsageRecord { program_id: program_id.into(), passed, n_p });
            }
        }
        Ok(())
    }

    /// Insert or overwrite the record of `program_id` on one live helper.
    pub fn set_record(&mut self, program_id: &str, name: &str, passed: bool, n_p: u32) -> Result<(), CodeBankError> {
        if n_p == 0 {
            return Err(CodeBankError::ZeroUses(program_id.into()));
        }
        let f = self.functions.get_mut(name).ok_or_else(|| CodeBankError::UnknownHelper(name.into()))?;
        let rec = UsageRecord { program_id: program_id.into(), passed, n_p };
        match f.records.iter_mut().find(|r| r.program_id == program_id) {
            Some(r) => *r = rec,
            None => f.records.push(rec),
        }
        Ok(())
    }

    pub fn remove_record(&mut self, program_id: &str, name: &str) {
        if let Some(f) = self.functions.get_mut(name) {
            f.records.retain(|r| r.program_id != program_id);
        }
    }

    /// Record a failure against a definition that is not in the bank.
    pub fn record_pending(&mut self, program_id: &str, helper: &HelperFunction, n_p: u32) {
        let pos = match self.pending.iter().position(|p| p.name == helper.name && p.source == helper.source) {
            Some(pos) => pos,
            None => {
                let mut h = helper.clone();
                h.records.clear();
                self.pending.push(h);
                self.pending.sort_by(|a, b| (&a.name, &a.source).cmp(&(&b.name, &b.source)));
                self.pending.iter().position(|p| p.name == helper.name && p.source == helper.source).unwrap()
            }
        };
        let p = &mut self.pending[pos];
        if !p.records.iter().any(|r| r.program_id == program_id) {
            p.records.push(UsageRecord { program_id: program_id.into(), passed: false, n_p });
        }
    }

    /// Remove helpers used at least `min_uses` times whose score is below
    /// `theta`. Returns what was removed, in name order.
    pub fn prune(&mut self, theta: f64, min_uses: usize) -> Vec<Pruned> {
        let mut out = Vec::new();
        let doomed: Vec<(String, f64)> = self
            .functions
            .values()
            .filter(|f| f.records.len() >= min_uses)
            .filter_map(|f| {
                let s = f.score().unwrap_or(f64::NEG_INFINITY);
                (s < theta).then(|| (f.name.clone(), s))
            })
            .collect();
        for (name, s) in doomed {
            let f = self.functions.remove(&name).expect("collected above");
            out.push(Pruned { name: name.clone(), score: s, uses: f.records.len() });
            self.tombstones.insert(name.clone(), Tombstone { name, source: f.source, score: s, reason: "pruned".into() });
        }
        out
    }

    /// Helpers sorted by descending score, then name.
    pub fn ranked(&self) -> Vec<(&HelperFunction, f64)> {
        let mut v: Vec<_> = self.functions.values().map(|f| (f, f.score().unwrap_or(f64::NAN))).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.name.cmp(&b.0.name)));
        v
    }
}

/// A refactored program kept as a demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub id: String,
    pub example_id: String,
    pub query: String,
    pub program: String,
    /// Whether the program reproduced the gold result when stored.
    pub success: bool,
    /// Definitions the program was verified with, by name.
    pub helpers: BTreeMap<String, String>,
    /// Cleared when a helper it relies on is pruned.
    pub eligible: bool,
    pub gold: DomainResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<CraftTask>,
    pub epoch: u32,
    pub batch: u64,
}

impl Demo {
    pub fn helper_names(&self) -> Vec<String> {
        self.helpers.keys().cloned().collect()
    }

    pub fn uses(&self, name: &str, source: &str) -> bool {
        self.helpers.get(name).is_some_and(|s| s == source)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemoBank {
    pub demos: Vec<Demo>,
}

impl DemoBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    /// Insert, replacing any demo with the same id.
    pub fn push(&mut self, demo: Demo) {
        match self.demos.iter_mut().find(|d| d.id == demo.id) {
            Some(d) => *d = demo,
            None => self.demos.push(demo),
        }
    }

    pub fn get(&self, id: &str) -> Option<&Demo> {
        self.demos.iter().find(|d| d.id == id)
    }

    pub fn using<'a>(&'a self, name: &'a str, source: &'a str) -> impl Iterator<Item = &'a Demo> + 'a {
        self.demos.iter().filter(move |d| d.uses(name, source))
    }

    /// Mark demos relying on this definition ineligible; returns how many changed.
    pub fn retire(&mut self, name: &str, source: &str) -> usize {
        let mut n = 0;
        for d in self.demos.iter_mut().filter(|d| d.eligible && d.uses(name, source)) {
            d.eligible = false;
            n += 1;
        }
        n
    }

    /// Demos usable as in-context examples: successful, eligible, and every
    /// helper they call still live with the same body.
    pub fn retrievable<'a>(&'a self, bank: &'a CodeBank) -> impl Iterator<Item = &'a Demo> + 'a {
        self.demos.iter().filter(move |d| {
            d.success && d.eligible && d.helpers.iter().all(|(n, s)| bank.source_of(n) == Some(s.as_str()))
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CodeBankFile {
    schema_version: u32,
    functions: Vec<HelperFunction>,
    tombstones: Vec<Tombstone>,
    pending: Vec<HelperFunction>,
}

#[derive(Serialize, Deserialize)]
struct DemoBankFile {
    schema_version: u32,
    demos: Vec<Demo>,
}

/// Canonical JSON: fixed field order, name-sorted maps, trailing newline.
pub fn codebank_json(bank: &CodeBank) -> String {
    let file = CodeBankFile {
        schema_version: SCHEMA_VERSION,
        functions: bank.functions.values().cloned().collect(),
        tombstones: bank.tombstones.values().cloned().collect(),
        pending: bank.pending.clone(),
    };
    serde_json::to_string_pretty(&file).expect("banks serialize") + "\n"
}

pub fn demobank_json(demos: &DemoBank) -> String {
    let file = DemoBankFile { schema_version: SCHEMA_VERSION, demos: demos.demos.clone() };
    serde_json::to_string_pretty(&file).expect("banks serialize") + "\n"
}

fn write(path: &Path, text: &str) -> Result<(), CodeBankError> {
    let io = |source| CodeBankError::Io { path: path.display().to_string(), source };
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn save(bank: &CodeBank, demos: &DemoBank, dir: &Path) -> Result<(), CodeBankError> {
    std::fs::create_dir_all(dir).map_err(|source| CodeBankError::Io { path: dir.display().to_string(), source })?;
    write(&dir.join(CODEBANK_FILE), &codebank_json(bank))?;
    write(&dir.join(DEMOBANK_FILE), &demobank_json(demos))
}

fn read_versioned<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CodeBankError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CodeBankError::Io { path: p.clone(), source })?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CodeBankError::Malformed { path: p.clone(), message: e.to_string() })?;
    let found = raw.get("schema_version").and_then(|v| v.as_u64()).ok_or_else(|| CodeBankError::Malformed {
        path: p.clone(),
        message: "missing schema_version".into(),
    })? as u32;
    if found != SCHEMA_VERSION {
        return Err(CodeBankError::Version { path: p, found, expected: SCHEMA_VERSION });
    }
    serde_json::from_value(raw).map_err(|e| CodeBankError::Malformed { path: p, message: e.to_string() })
}

pub fn load_codebank(path: &Path) -> Result<CodeBank, CodeBankError> {
    let file: CodeBankFile = read_versioned(path)?;
    let bad = |message: String| CodeBankError::Malformed { path: path.display().to_string(), message };
    let mut bank = CodeBank::new();
    for f in file.functions {
        let def = single_def(&f.source).map_err(|e| bad(e.to_string()))?;
        if def.name != f.name {
            return Err(bad(format!("helper '{}' defines '{}'", f.name, def.name)));
        }
        if bank.functions.insert(f.name.clone(), f).is_some() {
            return Err(bad("duplicate helper name".into()));
        }
    }
    for t in file.tombstones {
        if bank.functions.contains_key(&t.name) {
            return Err(bad(format!("'{}' is both live and pruned", t.name)));
        }
        bank.tombstones.insert(t.name.clone(), t);
    }
    bank.pending = file.pending;
    Ok(bank)
}

pub fn load_demobank(path: &Path) -> Result<DemoBank, CodeBankError> {
    let file: DemoBankFile = read_versioned(path)?;
    Ok(DemoBank { demos: file.demos })
}

pub fn load(dir: &Path) -> Result<(CodeBank, DemoBank), CodeBankError> {
    Ok((load_codebank(&dir.join(CODEBANK_FILE))?, load_demobank(&dir.join(DEMOBANK_FILE))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(passed: bool, n_p: u32) -> UsageRecord {
        UsageRecord { program_id: format!("p{n_p}{passed}"), passed, n_p }
    }

    fn helper(name: &str, body: &str) -> HelperFunction {
        HelperFunction::from_source(&format!("def {name}():\n    # {name} helper\n    {body}\n"), 1).unwrap()
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(&[rec(true, 1), rec(true, 2), rec(true, 3)]).unwrap(), 3.0);
        assert_eq!(score(&[rec(true, 1), rec(false, 2)]).unwrap(), 0.5);
        assert_eq!(score(&[rec(false, 1), rec(false, 1)]).unwrap(), -2.0);
        assert!(score(&[rec(false, 0)]).is_err());
    }

    #[test]
    fn prune_gates() {
        let mut bank = CodeBank::new();
        let mut a = helper("a", "forward(1)");
        a.records = vec![
            UsageRecord { program_id: "x".into(), passed: false, n_p: 1 },
            UsageRecord { program_id: "y".into(), passed: false, n_p: 1 },
        ];
        let mut b = helper("b", "forward(2)");
        b.records = vec![rec(true, 1), rec(false, 2)];
        let mut c = helper("c", "forward(3)");
        c.records = vec![rec(false, 1)];
        for h in [a, b, c] {
            bank.add(h);
        }
        let pruned = bank.prune(0.0, 2);
        assert_eq!(pruned, vec![Pruned { name: "a".into(), score: -2.0, uses: 2 }]);
        assert!(bank.tombstones.contains_key("a"));
        assert!(bank.get("b").is_some() && bank.get("c").is_some());
        assert!(bank.prune(0.0, 3).is_empty());
    }

    #[test]
    fn records_are_shared_and_idempotent() {
        let mut bank = CodeBank::new();
        bank.add(helper("f", "forward(1)"));
        bank.add(helper("g", "forward(2)"));
        let fg = vec!["f".to_string(), "g".to_string()];
        bank.record_result("p1", &fg, false).unwrap();
        bank.record_result("p1", &fg, false).unwrap();
        bank.record_result("p2", &["f".to_string()], true).unwrap();
        assert_eq!(bank.get("f").unwrap().records.len(), 2);
        assert_eq!(bank.get("g").unwrap().records, vec![UsageRecord { program_id: "p1".into(), passed: false, n_p: 2 }]);
        assert!(matches!(bank.record_result("p3", &["h".to_string()], true), Err(CodeBankError::UnknownHelper(_))));
    }

    #[test]
    fn tombstones_block_identical_readd() {
        let mut bank = CodeBank::new();
        let mut f = helper("f", "forward(1)");
        f.records = vec![rec(false, 1)];
        bank.add(f);
        bank.prune(0.0, 1);
        assert_eq!(bank.add(helper("f", "forward(1)")), AddOutcome::Tombstoned);
        assert_eq!(bank.add(helper("f", "forward(2)")), AddOutcome::Added);
        assert!(!bank.tombstones.contains_key("f"));
        assert_eq!(bank.add(helper("f", "forward(2)")), AddOutcome::Duplicate);
        assert_eq!(bank.add(helper("f", "forward(3)")), AddOutcome::Replaced);
        assert!(!bank.tombstones.contains_key("f"));
    }

    #[test]
    fn pending_failures_merge_on_admission() {
        let mut bank = CodeBank::new();
        let f = helper("f", "forward(1)");
        bank.record_pending("p1", &f, 1);
        bank.record_pending("p1", &f, 1);
        assert_eq!(bank.pending[0].records.len(), 1);
        bank.add(f);
        assert!(bank.pending.is_empty());
        assert_eq!(bank.get("f").unwrap().fails(), 1);
    }

    #[test]
    fn description_is_first_comment() {
        let f = helper("draw_small_9gon", "forward(2)");
        assert_eq!(f.description, "draw_small_9gon helper");
        assert!(HelperFunction::from_source("def f():\n    forward(1)\nforward(2)\n", 0).is_err());
    }

    fn sample() -> (CodeBank, DemoBank) {
        let mut bank = CodeBank::new();
        for i in 0..5 {
            bank.add(helper(&format!("h{i}"), &format!("forward({i})")));
            bank.record_result(&format!("d{i}"), &[format!("h{i}")], i % 2 == 0).unwrap();
        }
        let mut f = helper("gone", "left(1)");
        f.records = vec![rec(false, 1)];
        bank.add(f);
        bank.prune(0.0, 1);
        let mut demos = DemoBank::new();
        demos.push(Demo {
            id: "d0".into(),
            example_id: "e0".into(),
            query: "q".into(),
            program: "h0()\n".into(),
            success: true,
            helpers: BTreeMap::from([("h0".into(), bank.source_of("h0").unwrap().into())]),
            eligible: true,
            gold: DomainResult::Strokes { segments: vec![[0, 0, 1, 0]] },
            task: None,
            epoch: 0,
            batch: 1,
        });
        (bank, demos)
    }

    #[test]
    fn save_load_round_trip_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let (bank, demos) = sample();
        save(&bank, &demos, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join(CODEBANK_FILE)).unwrap();
        let (b2, d2) = load(dir.path()).unwrap();
        assert_eq!(b2, bank);
        assert_eq!(d2, demos);
        save(&b2, &d2, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join(CODEBANK_FILE)).unwrap(), first);
    }

    #[test]
    fn truncated_and_wrong_version_files() {
        let dir = tempfile::tempdir().unwrap();
        let (bank, demos) = sample();
        save(&bank, &demos, dir.path()).unwrap();
        let path = dir.path().join(CODEBANK_FILE);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_codebank(&path), Err(CodeBankError::Malformed { .. })));
        std::fs::write(&path, text.replace("\"schema_version\": 1", "\"schema_version\": 9")).unwrap();
        assert!(matches!(load_codebank(&path), Err(CodeBankError::Version { found: 9, .. })));
    }

    #[test]
    fn retrievable_needs_live_helpers() {
        let (mut bank, mut demos) = sample();
        assert_eq!(demos.retrievable(&bank).count(), 1);
        bank.functions.remove("h0");
        assert_eq!(demos.retrievable(&bank).count(), 0);
        let src = demos.demos[0].helpers["h0"].clone();
        assert_eq!(demos.retire("h0", &src), 1);
        assert!(!demos.demos[0].eligible);
    }
}
