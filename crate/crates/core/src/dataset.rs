//! Training and test examples stored as JSON lines.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domains::{registry_for, result_of, textcraft::CraftTask, CraftEnv, Domain, DomainResult, Registry};
use crate::proglang::{run_source, Env};

/// A query with its primitive program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub query: String,
    /// Gold program. May be empty for crafting test items, which are scored
    /// by the task goal instead.
    #[serde(default)]
    pub program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Crafting tasks carry their recipes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<CraftTask>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Example {
    pub fn new(id: impl Into<String>, query: impl Into<String>, program: impl Into<String>) -> Self {
        Example {
            id: id.into(),
            query: query.into(),
            program: program.into(),
            split: None,
            task: None,
            metadata: BTreeMap::new(),
        }
    }

    /// The query as shown in prompts; crafting tasks get their recipes appended.
    pub fn prompt_query(&self) -> String {
        match &self.task {
            Some(t) => format!("{}\nCrafting commands:\n{}", self.query.trim(), t.commands.join("\n")),
            None => self.query.trim().to_string(),
        }
    }

    pub fn registry(&self, domain: Domain) -> Result<Arc<Registry>, String> {
        let craft = match (&self.task, domain) {
            (Some(t), Domain::Textcraft) => Some(CraftEnv::from_task(t).map_err(|e| format!("{}: {e}", self.id))?),
            _ => None,
        };
        registry_for(domain, craft).map(Arc::new).map_err(|e| format!("{}: {e}", self.id))
    }

    /// Result of running the gold program.
    pub fn gold_result(&self, registry: &Arc<Registry>, budget: u64) -> Result<DomainResult, String> {
        if self.program.trim().is_empty() {
            return Err(format!("{}: no gold program", self.id));
        }
        let out = run_source(&self.program, &Env::new(registry.clone()).with_budget(budget));
        result_of(registry, &out).ok_or_else(|| format!("{}: gold program failed: {}", self.id, out.feedback()))
    }

    pub fn query_tokens(&self) -> usize {
        self.query.split_whitespace().count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid dataset:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Read and validate a JSON-lines file. All problems are reported together.
pub fn load_jsonl(path: &Path) -> Result<Vec<Example>, DatasetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_jsonl(&text)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Example>, DatasetError> {
    let mut problems = Vec::new();
    let mut out: Vec<Example> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Example>(line) {
            Ok(ex) if ex.id.trim().is_empty() => problems.push(format!("line {}: empty id", i + 1)),
            Ok(ex) if ex.query.trim().is_empty() => problems.push(format!("line {}: empty query", i + 1)),
            Ok(ex) => out.push(ex),
            Err(e) => problems.push(format!("line {}: {e}", i + 1)),
        }
    }
    let mut seen = BTreeSet::new();
    let dups: BTreeSet<&str> = out.iter().filter(|e| !seen.insert(e.id.as_str())).map(|e| e.id.as_str()).collect();
    if !dups.is_empty() {
        problems.push(format!("duplicate ids: {}", dups.into_iter().collect::<Vec<_>>().join(", ")));
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(DatasetError::Invalid(problems))
    }
}

pub fn to_jsonl(examples: &[Example]) -> String {
    examples.iter().map(|e| serde_json::to_string(e).expect("examples serialize") + "\n").collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
