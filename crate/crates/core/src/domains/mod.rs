//! Executable domains: turtle graphics, calendar arithmetic and a crafting game.
//!
//! Each domain provides a primitive registry for the interpreter, a fresh
//! world state per execution, and an equivalence predicate over results.

pub mod date;
pub mod logo;
pub mod textcraft;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::proglang::{CallArgs, ExecError, ExecutionOutcome, Interpreter, Status, Value, BUILTINS};

pub use date::date_registry;
pub use logo::{compare_strokes, logo_registry, TurtleState};
pub use textcraft::{textcraft_registry, CraftEnv, CraftState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Logo,
    Date,
    Textcraft,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Logo => "logo",
            Domain::Date => "date",
            Domain::Textcraft => "textcraft",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logo" => Ok(Domain::Logo),
            "date" => Ok(Domain::Date),
            "textcraft" => Ok(Domain::Textcraft),
            other => Err(format!("unknown domain '{other}' (expected logo, date or textcraft)")),
        }
    }
}

pub type PrimitiveFn = fn(&mut Interpreter<'_>, CallArgs) -> Result<Value, ExecError>;

pub struct Primitive {
    pub name: &'static str,
    /// Call form shown to the model, e.g. `forward(x)`.
    pub signature: &'static str,
    pub doc: &'static str,
    pub func: PrimitiveFn,
}

/// Everything the interpreter needs from a domain.
pub struct Registry {
    pub domain: Domain,
    primitives: Vec<Primitive>,
    constants: Vec<(&'static str, Value)>,
    craft: Option<Arc<CraftEnv>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("domain", &self.domain)
            .field("primitives", &self.primitives.iter().map(|p| p.name).collect::<Vec<_>>())
            .finish()
    }
}

impl Registry {
    pub(crate) fn new(
        domain: Domain,
        primitives: Vec<Primitive>,
        constants: Vec<(&'static str, Value)>,
        craft: Option<Arc<CraftEnv>>,
    ) -> Self {
        Registry { domain, primitives, constants, craft }
    }

    pub fn primitive(&self, name: &str) -> Option<&Primitive> {
        self.primitives.iter().find(|p| p.name == name)
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn constant(&self, name: &str) -> Option<&Value> {
        self.constants.iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    pub fn constants(&self) -> &[(&'static str, Value)] {
        &self.constants
    }

    pub fn craft_env(&self) -> Option<&CraftEnv> {
        self.craft.as_deref()
    }

    /// Names a user function may not take.
    pub fn is_reserved(&self, name: &str) -> bool {
        self.primitive(name).is_some() || self.constant(name).is_some() || BUILTINS.contains(&name)
    }

    /// Callable without a user definition: primitives and builtins.
    pub fn is_known_callable(&self, name: &str) -> bool {
        self.primitive(name).is_some() || BUILTINS.contains(&name)
    }

    pub fn initial_world(&self) -> World {
        match self.domain {
            Domain::Logo => World::Logo(TurtleState::default()),
            Domain::Date => World::Date,
            Domain::Textcraft => World::Craft(CraftState::default()),
        }
    }

    /// Primitive description block used in prompts.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for p in &self.primitives {
            out.push_str(&format!("- {}: {}\n", p.signature, p.doc));
        }
        for (name, v) in &self.constants {
            out.push_str(&format!("- {name} = {}\n", v.repr()));
        }
        out
    }
}

/// Mutable domain state threaded through one execution.
#[derive(Debug, Clone, PartialEq)]
pub enum World {
    Logo(TurtleState),
    Date,
    Craft(CraftState),
}

/// Domain-level outcome of running a program, compared during verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainResult {
    /// Quantized, orientation-normalized segments, sorted.
    Strokes { segments: Vec<[i64; 4]> },
    /// Canonical string rendering of `answer`, if bound.
    Answer { value: Option<String> },
    Crafting {
        goal_achieved: bool,
        goal_count: i64,
        inventory: BTreeMap<String, i64>,
        trace: Vec<String>,
    },
}

impl DomainResult {
    pub fn kind(&self) -> &'static str {
        match self {
            DomainResult::Strokes { .. } => "strokes",
            DomainResult::Answer { .. } => "answer",
            DomainResult::Crafting { .. } => "crafting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot compare a {left} result with a {right} result")]
pub struct KindMismatch {
    pub left: &'static str,
    pub right: &'static str,
}

/// Domain result of a finished execution; `None` unless it ran to completion.
pub fn result_of(registry: &Registry, outcome: &ExecutionOutcome) -> Option<DomainResult> {
    if outcome.status != Status::Ok {
        return None;
    }
    Some(match (&outcome.world, registry.domain) {
        (World::Logo(t), _) => logo::strokes_result(t),
        (World::Craft(c), _) => {
            let env = registry.craft_env().expect("crafting registry carries its task");
            env.result(c)
        }
        (World::Date, _) => {
            DomainResult::Answer { value: outcome.answer.as_ref().map(Value::to_display) }
        }
    })
}

/// Equivalence used by verification. Strokes compare as multisets, answers by
/// canonical string, crafting by goal flag and goal-item count.
pub fn compare_results(a: &DomainResult, b: &DomainResult) -> Result<bool, KindMismatch> {
    match (a, b) {
        (DomainResult::Strokes { .. }, DomainResult::Strokes { .. }) => compare_strokes(a, b),
        (DomainResult::Answer { value: x }, DomainResult::Answer { value: y }) => Ok(x == y),
        (
            DomainResult::Crafting { goal_achieved: ga, goal_count: ca, .. },
            DomainResult::Crafting { goal_achieved: gb, goal_count: cb, .. },
        ) => Ok(ga == gb && ca == cb),
        _ => Err(KindMismatch { left: a.kind(), right: b.kind() }),
    }
}

/// Build the registry for `domain`. TextCraft needs its task.
pub fn registry_for(domain: Domain, craft: Option<CraftEnv>) -> Result<Registry, String> {
    match domain {
        Domain::Logo => Ok(logo_registry()),
        Domain::Date => Ok(date_registry()),
        Domain::Textcraft => craft
            .map(textcraft_registry)
            .ok_or_else(|| "textcraft programs need a task (goal and recipes)".to_string()),
    }
}

fn type_error(name: &str, what: &str, got: &Value) -> ExecError {
    ExecError::runtime(format!("{name}() expects {what}, got {}", got.type_name()))
}

fn number_arg(name: &str, v: &Value) -> Result<f64, ExecError> {
    match v {
        Value::Int(_) | Value::Float(_) | Value::Bool(_) => Ok(v.as_f64().unwrap_or(0.0)),
        other => Err(type_error(name, "a number", other)),
    }
}

fn str_arg<'v>(name: &str, v: &'v Value) -> Result<&'v str, ExecError> {
    match v {
        Value::Str(s) => Ok(s),
        other => Err(type_error(name, "a string", other)),
    }
}
