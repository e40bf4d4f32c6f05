//! Execution-based checking of rewritten programs against gold results.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::domains::{compare_results, result_of, Domain, DomainResult, Registry};
use crate::proglang::{embedded_calls, execute, free_names, parse, Ast, Env, ExecutionOutcome, FunctionDef, StmtKind};

/// Names of functions defined anywhere in `ast`.
pub fn defined_names(ast: &Ast) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    ast.walk_stmts(&mut |s| {
        if let StmtKind::FunctionDef(d) = &s.kind {
            out.insert(d.name.clone());
        }
    });
    out
}

/// Helper names `ast` needs that it does not define, including calls made
/// from embedded program strings.
pub fn needed_helpers(ast: &Ast, registry: &Registry) -> BTreeSet<String> {
    let known = |n: &str| registry.is_known_callable(n);
    let defined = defined_names(ast);
    let mut names = free_names(ast, known);
    names.extend(embedded_calls(ast, known).into_iter().filter(|n| !defined.contains(n)));
    names
}

/// Transitive helper closure of `ast`. `lookup` maps a name to its
/// definition. Fails with the first name that cannot be found.
pub fn resolve_helpers(
    ast: &Ast,
    registry: &Registry,
    lookup: &dyn Fn(&str) -> Option<String>,
) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    let mut queue: Vec<String> = needed_helpers(ast, registry).into_iter().rev().collect();
    while let Some(name) = queue.pop() {
        if out.contains_key(&name) {
            continue;
        }
        let source = lookup(&name).ok_or_else(|| name.clone())?;
        let inner = parse(&source).map_err(|_| name.clone())?;
        for n in needed_helpers(&inner, registry).into_iter().rev() {
            if !out.contains_key(&n) && n != name {
                queue.push(n);
            }
        }
        out.insert(name, source);
    }
    Ok(out)
}

pub fn helper_defs(helpers: &BTreeMap<String, String>) -> Result<Vec<FunctionDef>, String> {
    let mut defs = Vec::new();
    for (name, src) in helpers {
        let ast = parse(src).map_err(|e| format!("helper {name} does not parse: {e}"))?;
        defs.extend(ast.functions().cloned());
    }
    Ok(defs)
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub passed: bool,
    /// Empty when passed. For LOGO never includes the drawing itself.
    pub feedback: String,
    /// Definitions the program was run with.
    pub helpers: BTreeMap<String, String>,
    pub outcome: Option<ExecutionOutcome>,
}

impl Verdict {
    fn fail(feedback: String, helpers: BTreeMap<String, String>, outcome: Option<ExecutionOutcome>) -> Self {
        Verdict { passed: false, feedback, helpers, outcome }
    }
}

/// Run `program` with helpers found through `lookup` and compare with `gold`.
pub fn verify_program(
    program: &str,
    gold: &DomainResult,
    registry: &Arc<Registry>,
    lookup: &dyn Fn(&str) -> Option<String>,
    budget: u64,
) -> Verdict {
    let ast = match parse(program) {
        Ok(a) => a,
        Err(e) => return Verdict::fail(format!("parse-error: {e}"), BTreeMap::new(), None),
    };
    let helpers = match resolve_helpers(&ast, registry, lookup) {
        Ok(h) => h,
        Err(name) => return Verdict::fail(format!("runtime-error: undefined function '{name}'"), BTreeMap::new(), None),
    };
    run_and_compare(&ast, helpers, gold, registry, budget)
}

pub fn run_and_compare(
    ast: &Ast,
    helpers: BTreeMap<String, String>,
    gold: &DomainResult,
    registry: &Arc<Registry>,
    budget: u64,
) -> Verdict {
    let defs = match helper_defs(&helpers) {
        Ok(d) => d,
        Err(e) => return Verdict::fail(format!("parse-error: {e}"), helpers, None),
    };
    let env = Env::new(registry.clone()).with_budget(budget).with_helpers(defs);
    let outcome = execute(ast, &env);
    let Some(result) = result_of(registry, &outcome) else {
        return Verdict::fail(outcome.feedback(), helpers, Some(outcome));
    };
    match compare_results(&result, gold) {
        Ok(true) => Verdict { passed: true, feedback: String::new(), helpers, outcome: Some(outcome) },
        Ok(false) => Verdict::fail(mismatch_feedback(registry.domain, &result, gold, &outcome), helpers, Some(outcome)),
        Err(e) => Verdict::fail(e.to_string(), helpers, Some(outcome)),
    }
}

fn mismatch_feedback(domain: Domain, got: &DomainResult, gold: &DomainResult, outcome: &ExecutionOutcome) -> String {
    let mut msg = match (domain, got, gold) {
        (Domain::Logo, _, _) => "the program ran without errors, but its drawing differs from the original program's drawing".into(),
        (_, DomainResult::Answer { value: a }, DomainResult::Answer { value: b }) => format!(
            "the program ran without errors, but answer = {} while the original program gives {}",
            a.as_deref().unwrap_or("(unset)"),
            b.as_deref().unwrap_or("(unset)")
        ),
        (
            _,
            DomainResult::Crafting { goal_achieved, goal_count, trace, .. },
            DomainResult::Crafting { goal_achieved: want, goal_count: want_count, .. },
        ) => {
            let mut m = format!(
                "the program ran without errors, but the goal was {}achieved ({goal_count} made); the original {}achieves it ({want_count} made)",
                if *goal_achieved { "" } else { "not " },
                if *want { "" } else { "never " },
            );
            let failures: Vec<&String> = trace.iter().filter(|t| t.contains("fail")).take(5).collect();
            if !failures.is_empty() {
                m.push_str("; failed actions: ");
                m.push_str(&failures.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; "));
            }
            m
        }
        _ => "the program's result differs from the original".into(),
    };
    if domain != Domain::Logo && !outcome.stdout.trim().is_empty() {
        let out: String = outcome.stdout.chars().take(500).collect();
        msg.push_str(&format!("\noutput:\n{}", out.trim_end()));
    }
    msg
}
