//! The scripting language every corpus program and helper is written in.
//!
//! A small indentation-delimited imperative language: functions, loops,
//! conditionals, arithmetic, lists and dicts. No classes, imports,
//! comprehensions or exceptions. See `docs/grammar.md` for the EBNF.

pub mod ast;
pub mod interp;
mod lexer;
mod parser;
pub mod printer;
pub mod value;

use std::collections::BTreeSet;
use std::fmt;

pub use ast::{Ast, Expr, ExprKind, FunctionDef, Span, Stmt, StmtKind};
pub use interp::{
    eval_embedded, execute, run_source, CallArgs, Env, ExecError, ExecutionOutcome, Interpreter,
    Status, BUILTINS, DEFAULT_BUDGET,
};
pub use printer::{print_ast, print_function};
pub use value::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub line: usize,
    pub col: usize,
}

impl ParseError {
    pub fn new(message: impl Into<String>, line: usize, col: usize) -> Self {
        ParseError { message: message.into(), line, col }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for ParseError {}

pub fn parse(source: &str) -> Result<Ast, ParseError> {
    parser::parse_source(source)
}

/// Names called by `ast` that it does not define itself and that `is_known`
/// (primitives, builtins) does not cover. These are the helpers it depends on.
pub fn free_names(ast: &Ast, is_known: impl Fn(&str) -> bool) -> BTreeSet<String> {
    let defined: BTreeSet<&str> = {
        let mut s = BTreeSet::new();
        ast.walk_stmts(&mut |st| {
            if let StmtKind::FunctionDef(def) = &st.kind {
                s.insert(def.name.as_str());
            }
        });
        s
    };
    let mut out = BTreeSet::new();
    ast.walk_exprs(&mut |e| {
        if let ExprKind::Call { func, .. } = &e.kind {
            if !defined.contains(func.as_str()) && !is_known(func) && !BUILTINS.contains(&func.as_str()) {
                out.insert(func.clone());
            }
        }
    });
    out
}

/// Calls to `names` inside string literals, e.g. helpers invoked from an
/// `embed` program body. Embedded code is only parsed when run, so a plain
/// tree walk cannot see these.
pub fn embedded_calls(ast: &Ast, is_known: impl Fn(&str) -> bool) -> BTreeSet<String> {
    embedded_calls_dyn(ast, &is_known)
}

fn embedded_calls_dyn(ast: &Ast, is_known: &dyn Fn(&str) -> bool) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    ast.walk_exprs(&mut |e| {
        if let ExprKind::Str(s) = &e.kind {
            if let Ok(inner) = parse(&dedent_for_scan(s)) {
                out.extend(free_names(&inner, is_known));
                out.extend(embedded_calls_dyn(&inner, is_known));
            }
        }
    });
    out
}

fn dedent_for_scan(s: &str) -> String {
    let margin = s
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start_matches(' ').len())
        .min()
        .unwrap_or(0);
    s.lines()
        .map(|l| if l.len() >= margin { &l[margin..] } else { l.trim_start() })
        .collect::<Vec<_>>()
        .join("\n")
}
