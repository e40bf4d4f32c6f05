//! Tree-walking interpreter.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::value::{self, Value};
use super::{parse, ParseError};
use crate::domains::{Registry, World};

pub const DEFAULT_BUDGET: u64 = 100_000;
const MAX_CALL_DEPTH: usize = 64;
/// Bound on nested exec/eval activations, so deep programs fail cleanly
/// instead of exhausting the native stack.
const MAX_NESTING: usize = 600;
const MAX_STDOUT: usize = 1 << 20;

/// Names the interpreter itself provides, independent of the domain.
pub const BUILTINS: &[&str] = &[
    "abs", "bool", "float", "int", "len", "list", "locals", "max", "min", "print", "range",
    "round", "sorted", "str", "sum",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    ParseError,
    RuntimeError,
    BudgetExceeded,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::ParseError => "parse-error",
            Status::RuntimeError => "runtime-error",
            Status::BudgetExceeded => "budget-exceeded",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionOutcome {
    pub status: Status,
    /// Value bound to the global `answer` when execution stopped.
    pub answer: Option<Value>,
    /// Domain state; kept even when execution failed part-way.
    pub world: World,
    pub stdout: String,
    /// Empty iff `status` is ok.
    pub error: String,
    /// Dynamic call count per user-defined function.
    pub call_counts: BTreeMap<String, u64>,
    pub steps: u64,
}

impl ExecutionOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    /// Text shown to the model when a candidate fails.
    pub fn feedback(&self) -> String {
        match self.status {
            Status::Ok => "program ran without errors".into(),
            _ => format!("{}: {}", self.status, self.error),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecError {
    Runtime { message: String, span: Option<Span> },
    Budget,
}

impl ExecError {
    pub fn runtime(message: impl Into<String>) -> Self {
        ExecError::Runtime { message: message.into(), span: None }
    }

    fn at(self, span: Span) -> Self {
        match self {
            ExecError::Runtime { message, span: None } => {
                ExecError::Runtime { message, span: Some(span) }
            }
            other => other,
        }
    }
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecError::Runtime { message, span: Some(s) } => write!(f, "line {}: {message}", s.line),
            ExecError::Runtime { message, span: None } => f.write_str(message),
            ExecError::Budget => f.write_str("step budget exhausted"),
        }
    }
}

impl From<String> for ExecError {
    fn from(message: String) -> Self {
        ExecError::runtime(message)
    }
}

/// Arguments as passed at a call site, already evaluated.
#[derive(Debug, Clone, Default)]
pub struct CallArgs {
    pub positional: Vec<Value>,
    pub keyword: Vec<(String, Value)>,
}

impl CallArgs {
    pub fn positional_only(&self, name: &str, n: usize) -> Result<&[Value], ExecError> {
        if let Some((k, _)) = self.keyword.first() {
            return Err(ExecError::runtime(format!(
                "{name}() got an unexpected keyword argument '{k}'"
            )));
        }
        if self.positional.len() != n {
            return Err(ExecError::runtime(format!(
                "{name}() takes {n} argument{} but {} were given",
                if n == 1 { "" } else { "s" },
                self.positional.len()
            )));
        }
        Ok(&self.positional)
    }
}

/// Execution environment: the domain registry, a step budget, and helper
/// functions made available to the program before it runs.
#[derive(Clone)]
pub struct Env {
    pub registry: Arc<Registry>,
    pub budget: u64,
    pub helpers: Vec<FunctionDef>,
}

impl Env {
    pub fn new(registry: Arc<Registry>) -> Self {
        Env { registry, budget: DEFAULT_BUDGET, helpers: Vec::new() }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_helpers(mut self, helpers: Vec<FunctionDef>) -> Self {
        self.helpers = helpers;
        self
    }
}

enum Flow {
    Normal,
    Return(Value),
}

type Scope = BTreeMap<String, Value>;

pub struct Interpreter<'r> {
    registry: &'r Registry,
    functions: HashMap<String, Rc<FunctionDef>>,
    globals: Scope,
    frames: Vec<Scope>,
    budget_left: u64,
    budget: u64,
    pub world: World,
    stdout: String,
    call_counts: BTreeMap<String, u64>,
    nesting: usize,
}

/// Parse and run `source`.
pub fn run_source(source: &str, env: &Env) -> ExecutionOutcome {
    match parse(source) {
        Ok(ast) => execute(&ast, env),
        Err(e) => ExecutionOutcome {
            status: Status::ParseError,
            answer: None,
            world: env.registry.initial_world(),
            stdout: String::new(),
            error: e.to_string(),
            call_counts: BTreeMap::new(),
            steps: 0,
        },
    }
}

pub fn execute(ast: &Ast, env: &Env) -> ExecutionOutcome {
    let mut it = Interpreter::new(&env.registry, env.budget);
    let result = it.load_helpers(&env.helpers).and_then(|_| it.run_block(&ast.body).map(|_| ()));
    it.finish(result)
}

/// Run `program_text` the way the LOGO `embed` primitive does, but from a
/// fresh interpreter: a child scope seeded with `bindings`. Returns the
/// outcome and the child scope's final bindings.
pub fn eval_embedded(
    program_text: &str,
    bindings: Vec<(String, Value)>,
    env: &Env,
) -> (ExecutionOutcome, BTreeMap<String, Value>) {
    let mut it = Interpreter::new(&env.registry, env.budget);
    let mut child = BTreeMap::new();
    let result = it.load_helpers(&env.helpers).and_then(|_| {
        child = it.eval_embedded(program_text, bindings)?;
        Ok(())
    });
    (it.finish(result), child)
}

fn dedent(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let margin = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start_matches(' ').len())
        .min()
        .unwrap_or(0);
    let mut out = String::new();
    for l in lines {
        if l.len() >= margin {
            out.push_str(&l[margin..]);
        } else {
            out.push_str(l.trim_start_matches(' '));
        }
        out.push('\n');
    }
    out
}

impl<'r> Interpreter<'r> {
    pub fn new(registry: &'r Registry, budget: u64) -> Self {
        Interpreter {
            registry,
            functions: HashMap::new(),
            globals: BTreeMap::new(),
            frames: Vec::new(),
            budget_left: budget,
            budget,
            world: registry.initial_world(),
            stdout: String::new(),
            call_counts: BTreeMap::new(),
            nesting: 0,
        }
    }

    pub fn registry(&self) -> &'r Registry {
        self.registry
    }

    fn finish(self, result: Result<(), ExecError>) -> ExecutionOutcome {
        let (status, error) = match result {
            Ok(()) => (Status::Ok, String::new()),
            Err(ExecError::Budget) => (
                Status::BudgetExceeded,
                format!("step budget of {} exhausted", self.budget),
            ),
            Err(e) => (Status::RuntimeError, e.to_string()),
        };
        ExecutionOutcome {
            status,
            answer: self.globals.get("answer").cloned(),
            world: self.world,
            stdout: self.stdout,
            error,
            call_counts: self.call_counts,
            steps: self.budget - self.budget_left,
        }
    }

    fn load_helpers(&mut self, helpers: &[FunctionDef]) -> Result<(), ExecError> {
        for def in helpers {
            self.define(def)?;
        }
        Ok(())
    }

    fn define(&mut self, def: &FunctionDef) -> Result<(), ExecError> {
        if self.registry.is_reserved(&def.name) {
            return Err(ExecError::runtime(format!(
                "cannot define '{}': the name is a built-in or primitive",
                def.name
            )));
        }
        self.functions.insert(def.name.clone(), Rc::new(def.clone()));
        Ok(())
    }

    fn tick(&mut self) -> Result<(), ExecError> {
        if self.budget_left == 0 {
            return Err(ExecError::Budget);
        }
        self.budget_left -= 1;
        Ok(())
    }

    /// Execute `program_text` in a child scope seeded with `bindings`; returns the child scope.
    pub fn eval_embedded(
        &mut self,
        program_text: &str,
        bindings: Vec<(String, Value)>,
    ) -> Result<Scope, ExecError> {
        let ast = parse(&dedent(program_text)).map_err(|e: ParseError| {
            ExecError::runtime(format!("parse error in embedded program: {e}"))
        })?;
        if self.frames.len() >= MAX_CALL_DEPTH {
            return Err(ExecError::runtime("maximum recursion depth exceeded"));
        }
        self.frames.push(bindings.into_iter().collect());
        let result = self.run_block(&ast.body);
        let child = self.frames.pop().expect("frame pushed above");
        match result {
            Ok(_) => Ok(child),
            Err(ExecError::Runtime { message, .. }) => {
                Err(ExecError::runtime(format!("in embedded program: {message}")))
            }
            Err(e) => Err(e),
        }
    }

    fn run_block(&mut self, body: &[Stmt]) -> Result<Flow, ExecError> {
        for stmt in body {
            if let Flow::Return(v) = self.exec(stmt)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, stmt: &Stmt) -> Result<Flow, ExecError> {
        if matches!(stmt.kind, StmtKind::Comment(_)) {
            return Ok(Flow::Normal);
        }
        self.tick()?;
        self.enter()?;
        let r = self.exec_inner(stmt).map_err(|e| e.at(stmt.span));
        self.nesting -= 1;
        r
    }

    fn enter(&mut self) -> Result<(), ExecError> {
        if self.nesting >= MAX_NESTING {
            return Err(ExecError::runtime("maximum recursion depth exceeded"));
        }
        self.nesting += 1;
        Ok(())
    }

    fn exec_inner(&mut self, stmt: &Stmt) -> Result<Flow, ExecError> {
        match &stmt.kind {
            StmtKind::Comment(_) => {}
            StmtKind::FunctionDef(def) => self.define(def)?,
            StmtKind::Assign { target, value } => {
                let v = self.eval(value)?;
                self.assign(target, v)?;
            }
            StmtKind::AugAssign { target, op, value } => {
                let current = match target {
                    Target::Name(n) => self.lookup(n)?,
                    Target::Index { name, index } => {
                        let container = self.lookup(name)?;
                        let idx = self.eval(index)?;
                        container.index(&idx)?
                    }
                };
                let rhs = self.eval(value)?;
                let v = value::binary_op(*op, &current, &rhs)?;
                self.assign(target, v)?;
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
            StmtKind::For { var, iter, body } => {
                let it = self.eval(iter)?;
                if let Value::Range { start, step, .. } = it {
                    for i in 0..it.range_len() {
                        self.set_var(var, Value::Int(start + i * step));
                        if let Flow::Return(v) = self.run_block(body)? {
                            return Ok(Flow::Return(v));
                        }
                    }
                } else {
                    for item in it.iter_items()? {
                        self.set_var(var, item);
                        if let Flow::Return(v) = self.run_block(body)? {
                            return Ok(Flow::Return(v));
                        }
                    }
                }
            }
            StmtKind::While { cond, body } => {
                while self.eval(cond)?.truthy() {
                    if let Flow::Return(v) = self.run_block(body)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::If { branches, orelse } => {
                for b in branches {
                    if self.eval(&b.cond)?.truthy() {
                        return self.run_block(&b.body);
                    }
                }
                if let Some(orelse) = orelse {
                    return self.run_block(orelse);
                }
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn current_scope(&mut self) -> &mut Scope {
        match self.frames.last_mut() {
            Some(f) => f,
            None => &mut self.globals,
        }
    }

    fn set_var(&mut self, name: &str, v: Value) {
        self.current_scope().insert(name.to_string(), v);
    }

    fn assign(&mut self, target: &Target, v: Value) -> Result<(), ExecError> {
        match target {
            Target::Name(n) => {
                self.set_var(n, v);
                Ok(())
            }
            Target::Index { name, index } => {
                let idx = self.eval(index)?;
                let slot = match self.frames.last_mut().and_then(|f| f.get_mut(name)) {
                    Some(slot) => slot,
                    None => self
                        .globals
                        .get_mut(name)
                        .ok_or_else(|| ExecError::runtime(format!("name '{name}' is not defined")))?,
                };
                slot.set_index(idx, v)?;
                Ok(())
            }
        }
    }

    fn lookup(&self, name: &str) -> Result<Value, ExecError> {
        if let Some(v) = self.frames.last().and_then(|f| f.get(name)) {
            return Ok(v.clone());
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        if let Some(v) = self.registry.constant(name) {
            return Ok(v.clone());
        }
        if self.functions.contains_key(name) || self.registry.is_reserved(name) {
            return Err(ExecError::runtime(format!(
                "'{name}' is a function and can only be called"
            )));
        }
        Err(ExecError::runtime(format!("name '{name}' is not defined")))
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Value, ExecError> {
        self.tick()?;
        self.enter()?;
        let r = self.eval_inner(e).map_err(|err| err.at(e.span));
        self.nesting -= 1;
        r
    }

    fn eval_inner(&mut self, e: &Expr) -> Result<Value, ExecError> {
        Ok(match &e.kind {
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Float(x) => Value::Float(*x),
            ExprKind::Str(s) => Value::Str(s.clone()),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::None => Value::None,
            ExprKind::Name(n) => self.lookup(n)?,
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.eval(item)?);
                }
                Value::List(out)
            }
            ExprKind::Dict(pairs) => {
                let mut d = Value::Dict(Vec::with_capacity(pairs.len()));
                for (k, v) in pairs {
                    let k = self.eval(k)?;
                    let v = self.eval(v)?;
                    d.set_index(k, v)?;
                }
                d
            }
            ExprKind::Call { func, args, kwargs } => {
                let mut call = CallArgs::default();
                for a in args {
                    call.positional.push(self.eval(a)?);
                }
                for (k, v) in kwargs {
                    let v = self.eval(v)?;
                    call.keyword.push((k.clone(), v));
                }
                self.call(func, call)?
            }
            ExprKind::Binary { op, left, right } => {
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                value::binary_op(*op, &l, &r)?
            }
            ExprKind::Compare { left, ops } => {
                let mut l = self.eval(left)?;
                for (op, rhs) in ops {
                    let r = self.eval(rhs)?;
                    if !value::compare(*op, &l, &r)? {
                        return Ok(Value::Bool(false));
                    }
                    l = r;
                }
                Value::Bool(true)
            }
            ExprKind::BoolOp { op, left, right } => {
                let l = self.eval(left)?;
                match (op, l.truthy()) {
                    (BoolOp::And, false) | (BoolOp::Or, true) => l,
                    _ => self.eval(right)?,
                }
            }
            ExprKind::Not(inner) => Value::Bool(!self.eval(inner)?.truthy()),
            ExprKind::Neg(inner) => value::negate(&self.eval(inner)?)?,
            ExprKind::Subscript { value, index } => {
                let v = self.eval(value)?;
                let i = self.eval(index)?;
                v.index(&i)?
            }
        })
    }

    fn call(&mut self, name: &str, args: CallArgs) -> Result<Value, ExecError> {
        if let Some(def) = self.functions.get(name).cloned() {
            *self.call_counts.entry(name.to_string()).or_insert(0) += 1;
            return self.call_user(&def, args);
        }
        if BUILTINS.contains(&name) {
            return self.call_builtin(name, args);
        }
        if let Some(p) = self.registry.primitive(name) {
            return (p.func)(self, args);
        }
        Err(ExecError::runtime(format!("undefined function '{name}'")))
    }

    fn call_user(&mut self, def: &FunctionDef, args: CallArgs) -> Result<Value, ExecError> {
        let name = &def.name;
        if args.positional.len() > def.params.len() {
            return Err(ExecError::runtime(format!(
                "{name}() takes {} positional argument{} but {} were given",
                def.params.len(),
                if def.params.len() == 1 { "" } else { "s" },
                args.positional.len()
            )));
        }
        let mut frame: Scope = def.params.iter().cloned().zip(args.positional).collect();
        for (k, v) in args.keyword {
            if !def.params.contains(&k) {
                return Err(ExecError::runtime(format!(
                    "{name}() got an unexpected keyword argument '{k}'"
                )));
            }
            if frame.contains_key(&k) {
                return Err(ExecError::runtime(format!(
                    "{name}() got multiple values for argument '{k}'"
                )));
            }
            frame.insert(k, v);
        }
        if let Some(missing) = def.params.iter().find(|p| !frame.contains_key(*p)) {
            return Err(ExecError::runtime(format!(
                "{name}() missing required argument '{missing}'"
            )));
        }
        if self.frames.len() >= MAX_CALL_DEPTH {
            return Err(ExecError::runtime("maximum recursion depth exceeded"));
        }
        self.frames.push(frame);
        let result = self.run_block(&def.body);
        self.frames.pop();
        match result? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(Value::None),
        }
    }

    fn call_builtin(&mut self, name: &str, args: CallArgs) -> Result<Value, ExecError> {
        if let Some((k, _)) = args.keyword.first() {
            if !(name == "round" && k == "ndigits") {
                return Err(ExecError::runtime(format!(
                    "{name}() got an unexpected keyword argument '{k}'"
                )));
            }
        }
        let a = &args.positional;
        let int_arg = |v: &Value| {
            v.as_int().ok_or_else(|| {
                ExecError::runtime(format!("{name}() expects an integer, got {}", v.type_name()))
            })
        };
        Ok(match name {
            "range" => {
                let (start, stop, step) = match a.len() {
                    1 => (0, int_arg(&a[0])?, 1),
                    2 => (int_arg(&a[0])?, int_arg(&a[1])?, 1),
                    3 => (int_arg(&a[0])?, int_arg(&a[1])?, int_arg(&a[2])?),
                    n => return Err(ExecError::runtime(format!("range expected 1 to 3 arguments, got {n}"))),
                };
                if step == 0 {
                    return Err(ExecError::runtime("range() arg 3 must not be zero"));
                }
                Value::Range { start, stop, step }
            }
            "len" => Value::Int(args.positional_only(name, 1)?[0].len()?),
            "print" => {
                let line: Vec<String> = a.iter().map(Value::to_display).collect();
                if self.stdout.len() < MAX_STDOUT {
                    self.stdout.push_str(&line.join(" "));
                    self.stdout.push('\n');
                }
                Value::None
            }
            "str" => match a.len() {
                0 => Value::Str(String::new()),
                _ => Value::Str(args.positional_only(name, 1)?[0].to_display()),
            },
            "bool" => match a.len() {
                0 => Value::Bool(false),
                _ => Value::Bool(args.positional_only(name, 1)?[0].truthy()),
            },
            "int" => {
                let v = &args.positional_only(name, 1)?[0];
                match v {
                    Value::Float(x) => {
                        if !x.is_finite() || x.abs() >= 9.2e18 {
                            return Err(ExecError::runtime("cannot convert float to integer"));
                        }
                        Value::Int(x.trunc() as i64)
                    }
                    Value::Str(s) => Value::Int(s.trim().parse().map_err(|_| {
                        ExecError::runtime(format!("invalid literal for int(): '{s}'"))
                    })?),
                    other => Value::Int(int_arg(other)?),
                }
            }
            "float" => {
                let v = &args.positional_only(name, 1)?[0];
                match v {
                    Value::Str(s) => Value::Float(s.trim().parse().map_err(|_| {
                        ExecError::runtime(format!("could not convert string to float: '{s}'"))
                    })?),
                    other => Value::Float(other.as_f64().ok_or_else(|| {
                        ExecError::runtime(format!("float() argument must be a number, not '{}'", other.type_name()))
                    })?),
                }
            }
            "abs" => match &args.positional_only(name, 1)?[0] {
                Value::Float(x) => Value::Float(x.abs()),
                other => {
                    let i = int_arg(other)?;
                    Value::Int(i.checked_abs().ok_or_else(|| ExecError::runtime("integer overflow"))?)
                }
            },
            "min" | "max" => {
                let items = if a.len() == 1 { a[0].iter_items()? } else { a.clone() };
                let mut best: Option<Value> = None;
                for v in items {
                    best = Some(match best {
                        None => v,
                        Some(b) => {
                            let ord = value::py_cmp(&v, &b)?;
                            let better = if name == "min" { ord.is_lt() } else { ord.is_gt() };
                            if better {
                                v
                            } else {
                                b
                            }
                        }
                    });
                }
                best.ok_or_else(|| ExecError::runtime(format!("{name}() arg is an empty sequence")))?
            }
            "round" => {
                let digits_arg = match (a.len(), args.keyword.first()) {
                    (1, None) => None,
                    (1, Some((_, v))) => Some(v),
                    (2, None) => Some(&a[1]),
                    _ => return Err(ExecError::runtime("round() takes 1 or 2 arguments")),
                };
                let ndigits = match digits_arg {
                    None | Some(Value::None) => None,
                    Some(v) => Some(int_arg(v)?),
                };
                round_value(&a[0], ndigits)?
            }
            "sum" => {
                let mut total = Value::Int(0);
                for v in args.positional_only(name, 1)?[0].iter_items()? {
                    total = value::binary_op(BinOp::Add, &total, &v)?;
                }
                total
            }
            "list" => match a.len() {
                0 => Value::List(Vec::new()),
                _ => Value::List(args.positional_only(name, 1)?[0].iter_items()?),
            },
            "sorted" => {
                let mut items = args.positional_only(name, 1)?[0].iter_items()?;
                let mut err = None;
                items.sort_by(|x, y| {
                    value::py_cmp(x, y).unwrap_or_else(|e| {
                        err.get_or_insert(e);
                        std::cmp::Ordering::Equal
                    })
                });
                if let Some(e) = err {
                    return Err(ExecError::runtime(e));
                }
                Value::List(items)
            }
            "locals" => {
                args.positional_only(name, 0)?;
                let scope = self.frames.last().unwrap_or(&self.globals);
                Value::Dict(scope.iter().map(|(k, v)| (Value::Str(k.clone()), v.clone())).collect())
            }
            _ => unreachable!("BUILTINS lists only names handled here"),
        })
    }
}

/// Round half to even, as the host language does.
fn round_value(v: &Value, ndigits: Option<i64>) -> Result<Value, ExecError> {
    match (v, ndigits) {
        (Value::Float(x), None) => {
            let r = x.round_ties_even();
            if !r.is_finite() || r.abs() >= 9.2e18 {
                return Err(ExecError::runtime("cannot convert float to integer"));
            }
            Ok(Value::Int(r as i64))
        }
        (Value::Float(x), Some(n)) => {
            let n = n.clamp(-308, 308) as i32;
            let scale = 10f64.powi(n);
            Ok(Value::Float((x * scale).round_ties_even() / scale))
        }
        (other, _) => other
            .as_int()
            .map(Value::Int)
            .ok_or_else(|| ExecError::runtime(format!("type {} doesn't define __round__", other.type_name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{date_registry, logo_registry, World};

    fn logo_env() -> Env {
        Env::new(Arc::new(logo_registry()))
    }

    fn date_env() -> Env {
        Env::new(Arc::new(date_registry()))
    }

    #[test]
    fn arithmetic_answer() {
        let out = run_source("x = 1 + 2\nanswer = x\n", &date_env());
        assert!(out.is_ok(), "{}", out.error);
        assert_eq!(out.answer, Some(Value::Int(3)));
        assert!(out.error.is_empty());
    }

    #[test]
    fn nontermination_hits_budget() {
        let env = date_env().with_budget(10_000);
        let out = run_source("while True:\n    x = 1\n", &env);
        assert_eq!(out.status, Status::BudgetExceeded);
        assert!(out.steps <= 10_000);
    }

    #[test]
    fn pentagon_draws_five_segments() {
        let out = run_source("for i in range(5): forward(2); left(72.0)\n", &logo_env());
        assert!(out.is_ok(), "{}", out.error);
        let World::Logo(t) = &out.world else { panic!() };
        assert_eq!(t.segments.len(), 5);
    }

    #[test]
    fn scope_isolation() {
        let src = "x = 1\ndef f(x):\n    x = x + 10\n    y = 5\n    return x\nz = f(x)\nanswer = [x, z]\n";
        let out = run_source(src, &date_env());
        assert_eq!(out.answer, Some(Value::List(vec![Value::Int(1), Value::Int(11)])));
        let out = run_source("def f():\n    y = 5\nf()\nanswer = y\n", &date_env());
        assert_eq!(out.status, Status::RuntimeError);
        assert!(out.error.contains("'y' is not defined"), "{}", out.error);
    }

    #[test]
    fn value_semantics_for_lists() {
        let out = run_source("a = [1, 2]\nb = a\nb[0] = 9\nanswer = a[0]\n", &date_env());
        assert_eq!(out.answer, Some(Value::Int(1)));
    }

    #[test]
    fn unbound_and_undefined() {
        let out = run_source("answer = nope\n", &date_env());
        assert!(out.error.contains("'nope' is not defined"));
        let out = run_source("draw_circle(3)\n", &logo_env());
        assert!(out.error.contains("undefined function 'draw_circle'"), "{}", out.error);
        assert!(out.error.starts_with("line 1:"));
    }

    #[test]
    fn arity_errors() {
        let out = run_source("def f(a, b):\n    return a\nf(1)\n", &date_env());
        assert!(out.error.contains("missing required argument 'b'"), "{}", out.error);
        let out = run_source("forward(1, 2)\n", &logo_env());
        assert!(out.error.contains("takes 1 argument"), "{}", out.error);
    }

    #[test]
    fn primitive_shadowing_is_rejected() {
        let out = run_source("def forward(x):\n    return x\n", &logo_env());
        assert_eq!(out.status, Status::RuntimeError);
        assert!(out.error.contains("cannot define 'forward'"));
        let out = run_source("def len(x):\n    return 0\n", &logo_env());
        assert_eq!(out.status, Status::RuntimeError);
    }

    #[test]
    fn division_by_zero() {
        let out = run_source("answer = 1 / 0\n", &date_env());
        assert_eq!(out.status, Status::RuntimeError);
        assert!(out.error.contains("division by zero"));
    }

    #[test]
    fn kwargs_bind_to_params() {
        let out = run_source("def f(a, b):\n    return a - b\nanswer = f(b=1, a=5)\n", &date_env());
        assert_eq!(out.answer, Some(Value::Int(4)));
    }

    #[test]
    fn embedded_child_scope() {
        let (out, child) = eval_embedded("x = y + 1", vec![("y".into(), Value::Int(2))], &date_env());
        assert!(out.is_ok(), "{}", out.error);
        assert_eq!(child.get("x"), Some(&Value::Int(3)));
        assert_eq!(out.answer, None);
    }

    #[test]
    fn embedded_parse_error() {
        let (out, _) = eval_embedded("oops(", vec![], &logo_env());
        assert_eq!(out.status, Status::RuntimeError);
        assert!(out.error.contains("parse error in embedded program"), "{}", out.error);
    }

    #[test]
    fn recursion_is_bounded() {
        let out = run_source("def f(n):\n    return f(n + 1)\nf(0)\n", &date_env());
        assert!(out.error.contains("recursion"), "{}", out.error);
    }

    #[test]
    fn deep_expressions_inside_recursion_fail_cleanly() {
        let deep = format!("{}n{}", "(".repeat(60), " + 1)".repeat(60));
        let src = format!("def f(n):\n    return f({deep})\nf(0)\n");
        let out = run_source(&src, &date_env());
        assert_eq!(out.status, Status::RuntimeError);
        assert!(out.error.contains("recursion"), "{}", out.error);
    }

    #[test]
    fn call_counts_are_dynamic() {
        let src = "def g():\n    return 1\ndef f():\n    return g() + g()\nfor i in range(3):\n    f()\n";
        let out = run_source(src, &date_env());
        assert_eq!(out.call_counts.get("f"), Some(&3));
        assert_eq!(out.call_counts.get("g"), Some(&6));
    }

    #[test]
    fn builtins() {
        let src = "answer = [len('abc'), min(3, 1, 2), max([4, 9]), sum(range(5)), round(2.5), round(3.5), abs(-2), int('7'), str(1.0), sorted([3, 1])]\n";
        let out = run_source(src, &date_env());
        assert!(out.is_ok(), "{}", out.error);
        assert_eq!(
            out.answer.unwrap().repr(),
            "[3, 1, 9, 10, 2, 4, 2, 7, '1.0', [1, 3]]"
        );
        let out = run_source("print('a', 1)\nprint(2.0)\n", &date_env());
        assert_eq!(out.stdout, "a 1\n2.0\n");
    }

    #[test]
    fn deterministic() {
        let src = "for i in range(HALF_INF):\n    forward(EPS_DIST * 2)\n    left(EPS_ANGLE)\n";
        let a = run_source(src, &logo_env());
        let b = run_source(src, &logo_env());
        assert_eq!(format!("{:?}", a.world), format!("{:?}", b.world));
        assert_eq!(a.steps, b.steps);
    }
}
