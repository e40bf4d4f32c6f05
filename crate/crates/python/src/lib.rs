//! Python bindings: run and verify programs, inspect and prune code banks,
//! cluster and retrieve by embedding, and drive the command line.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use abstractor::codebank::{self, UsageRecord};
use abstractor::domains::textcraft::CraftTask;
use abstractor::domains::{registry_for, result_of, CraftEnv, Domain, Registry, World};
use abstractor::preprocess::{ward_cluster, Embedder, LocalEmbedder};
use abstractor::proglang::{interp::DEFAULT_BUDGET, run_source, Env};
use abstractor::retrieval::{self, EntryKind};
use abstractor::verify;
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn registry(domain: &str, task_json: Option<&str>) -> PyResult<Arc<Registry>> {
    let domain: Domain = domain.parse().map_err(value_err)?;
    let craft = match task_json {
        Some(t) => {
            let task: CraftTask = serde_json::from_str(t).map_err(value_err)?;
            Some(CraftEnv::from_task(&task).map_err(value_err)?)
        }
        None => None,
    };
    Ok(Arc::new(registry_for(domain, craft).map_err(value_err)?))
}

/// What one program run produced.
#[pyclass(frozen, get_all, module = "pyabstractor")]
struct Outcome {
    status: String,
    stdout: String,
    error: String,
    /// `repr` of the global `answer`, if bound.
    answer: Option<String>,
    call_counts: BTreeMap<String, u64>,
    steps: u64,
    /// Drawn segments as (x1, y1, x2, y2), LOGO only.
    segments: Vec<(f64, f64, f64, f64)>,
    /// Final (x, y, heading, pen_down), LOGO only.
    pose: Option<(f64, f64, f64, bool)>,
    inventory: BTreeMap<String, i64>,
    /// Domain result as JSON, when the run succeeded.
    result_json: Option<String>,
}

#[pymethods]
impl Outcome {
    fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn __repr__(&self) -> String {
        format!("Outcome(status={:?}, stdout={:?}, error={:?})", self.status, self.stdout, self.error)
    }
}

/// Run `source` in a domain ("logo", "date" or "textcraft"). Crafting needs
/// `task_json`: {"goal": ..., "commands": [...]}.
#[pyfunction]
#[pyo3(signature = (source, domain="logo", task_json=None, budget=DEFAULT_BUDGET, helpers=Vec::new()))]
fn run(source: &str, domain: &str, task_json: Option<&str>, budget: u64, helpers: Vec<String>) -> PyResult<Outcome> {
    let reg = registry(domain, task_json)?;
    let defs = helpers
        .iter()
        .map(|h| codebank::single_def(h).map_err(value_err))
        .collect::<PyResult<Vec<_>>>()?;
    let out = run_source(source, &Env::new(reg.clone()).with_budget(budget).with_helpers(defs));
    let (segments, pose, inventory) = match &out.world {
        World::Logo(t) => (
            t.segments.iter().map(|s| (s.x1, s.y1, s.x2, s.y2)).collect(),
            Some((t.x, t.y, t.heading, t.pen_down)),
            BTreeMap::new(),
        ),
        World::Craft(c) => (Vec::new(), None, c.inventory.clone()),
        World::Date => (Vec::new(), None, BTreeMap::new()),
    };
    let result_json = result_of(&reg, &out).map(|r| serde_json::to_string(&r)).transpose().map_err(value_err)?;
    Ok(Outcome {
        status: out.status.to_string(),
        stdout: out.stdout,
        error: out.error,
        answer: out.answer.as_ref().map(|v| v.repr()),
        call_counts: out.call_counts,
        steps: out.steps,
        segments,
        pose,
        inventory,
        result_json,
    })
}

/// Does `program`, using `helpers` (name -> source), reproduce what `gold`
/// produces? Returns (passed, feedback).
#[pyfunction]
#[pyo3(signature = (program, gold, domain="logo", helpers=BTreeMap::new(), task_json=None, budget=DEFAULT_BUDGET))]
fn verify_program(
    program: &str,
    gold: &str,
    domain: &str,
    helpers: BTreeMap<String, String>,
    task_json: Option<&str>,
    budget: u64,
) -> PyResult<(bool, String)> {
    let reg = registry(domain, task_json)?;
    let gold_out = run_source(gold, &Env::new(reg.clone()).with_budget(budget));
    let gold_result = result_of(&reg, &gold_out)
        .ok_or_else(|| PyValueError::new_err(format!("gold program failed: {}", gold_out.feedback())))?;
    let v = verify::verify_program(program, &gold_result, &reg, &|n| helpers.get(n).cloned(), budget);
    Ok((v.passed, v.feedback))
}

/// `passes - sum(1 / n_p)` over failing uses, from (passed, n_p) pairs.
#[pyfunction]
fn score(records: Vec<(bool, u32)>) -> PyResult<f64> {
    let recs: Vec<UsageRecord> = records
        .into_iter()
        .enumerate()
        .map(|(i, (passed, n_p))| UsageRecord { program_id: format!("r{i}"), passed, n_p })
        .collect();
    codebank::score(&recs).map_err(value_err)
}

/// Ward merges as (a, b, distance, size); ids past the leaf count name
/// earlier merges.
#[pyfunction]
fn ward(vectors: Vec<Vec<f64>>) -> PyResult<Vec<(usize, usize, f64, usize)>> {
    let d = ward_cluster(&vectors).map_err(value_err)?;
    Ok(d.merges.iter().map(|m| (m.a, m.b, m.distance, m.size)).collect())
}

#[pyfunction]
fn leaf_order(vectors: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    Ok(ward_cluster(&vectors).map_err(value_err)?.leaf_order())
}

/// The built-in hashed character n-gram embedding.
#[pyfunction]
fn embed(texts: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
    LocalEmbedder.embed(&texts).map_err(value_err)
}

/// Run the command line with `args` (without the program name); returns
/// the exit code.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("abstractor".to_string()).chain(args).collect();
    py.detach(|| abstractor::cli::run(argv))
}

/// A code bank loaded from a bank directory.
#[pyclass(module = "pyabstractor")]
struct CodeBank {
    bank: codebank::CodeBank,
    demos: codebank::DemoBank,
}

#[pymethods]
impl CodeBank {
    #[new]
    #[pyo3(signature = (directory=None))]
    fn new(directory: Option<PathBuf>) -> PyResult<Self> {
        let (bank, demos) = match directory {
            Some(d) => codebank::load(&d).map_err(value_err)?,
            None => Default::default(),
        };
        Ok(CodeBank { bank, demos })
    }

    fn __len__(&self) -> usize {
        self.bank.len()
    }

    fn names(&self) -> Vec<String> {
        self.bank.functions.keys().cloned().collect()
    }

    fn source(&self, name: &str) -> PyResult<String> {
        self.bank.source_of(name).map(str::to_string).ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }

    fn score(&self, name: &str) -> PyResult<f64> {
        let f = self.bank.get(name).ok_or_else(|| PyKeyError::new_err(name.to_string()))?;
        f.score().map_err(value_err)
    }

    /// (name, score) by descending score.
    fn ranked(&self) -> Vec<(String, f64)> {
        self.bank.ranked().into_iter().map(|(f, s)| (f.name.clone(), s)).collect()
    }

    /// Add a helper from its source. False when the same helper is already
    /// live or was pruned earlier.
    fn add(&mut self, source: &str) -> PyResult<bool> {
        let h = codebank::HelperFunction::from_source(source, 0).map_err(value_err)?;
        Ok(matches!(self.bank.add(h), codebank::AddOutcome::Added | codebank::AddOutcome::Replaced))
    }

    fn record(&mut self, program_id: &str, name: &str, passed: bool, n_p: u32) -> PyResult<()> {
        self.bank.set_record(program_id, name, passed, n_p).map_err(value_err)
    }

    /// Remove helpers with at least `min_uses` uses scoring below `theta`;
    /// returns their names.
    #[pyo3(signature = (theta=0.0, min_uses=3))]
    fn prune(&mut self, theta: f64, min_uses: usize) -> Vec<String> {
        self.bank.prune(theta, min_uses).into_iter().map(|p| p.name).collect()
    }

    fn demo_count(&self) -> usize {
        self.demos.len()
    }

    fn to_json(&self) -> String {
        codebank::codebank_json(&self.bank)
    }

    fn save(&self, directory: PathBuf) -> PyResult<()> {
        codebank::save(&self.bank, &self.demos, &directory).map_err(value_err)
    }
}

fn entry_kind(kind: &str) -> PyResult<EntryKind> {
    match kind {
        "train" => Ok(EntryKind::TrainExample),
        "demo" => Ok(EntryKind::Demo),
        "helper" => Ok(EntryKind::Helper),
        other => Err(PyValueError::new_err(format!("unknown kind '{other}' (train, demo or helper)"))),
    }
}

/// Cosine top-k over vectors tagged "train", "demo" or "helper".
#[pyclass(module = "pyabstractor")]
struct VectorIndex(retrieval::VectorIndex);

#[pymethods]
impl VectorIndex {
    #[new]
    #[pyo3(signature = (provider="local"))]
    fn new(provider: &str) -> Self {
        VectorIndex(retrieval::VectorIndex::new(provider))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn insert(&mut self, key: String, kind: &str, vector: Vec<f64>) -> PyResult<()> {
        self.0.insert(key, entry_kind(kind)?, vector).map_err(value_err)
    }

    fn topk(&self, query: Vec<f64>, n: usize, kind: &str) -> PyResult<Vec<(String, f64)>> {
        self.0.topk(&query, n, entry_kind(kind)?).map_err(value_err)
    }
}

#[pymodule]
fn pyabstractor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Outcome>()?;
    m.add_class::<CodeBank>()?;
    m.add_class::<VectorIndex>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify_program, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(ward, m)?)?;
    m.add_function(wrap_pyfunction!(leaf_order, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
