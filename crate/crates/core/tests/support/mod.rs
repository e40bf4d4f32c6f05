//! Shared pieces for the integration tests: a deterministic stand-in for the
//! model that understands the toy LOGO corpus, corpus paths, and an
//! independent helper-call counter.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use abstractor::codebank::CodeBank;
use abstractor::domains::Registry;
use abstractor::gateway::{Backend, ChatRequest, GatewayError};
use abstractor::proglang::{run_source, Env};

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/logo_toy")
}

pub fn replay_dir() -> PathBuf {
    toy_dir().join("replay")
}

/// One figure in a toy query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Part {
    Poly(i64, i64),
    Semi(i64),
    Circle(i64),
    Line(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Single(Part),
    SideBySide(Part, Part),
    Followed(Part, Part),
}

fn size_word(w: &str) -> Option<i64> {
    match w {
        "small" => Some(2),
        "medium" => Some(4),
        "big" => Some(6),
        _ => None,
    }
}

pub fn parse_part(p: &str) -> Option<Part> {
    let rest = p.trim().strip_prefix("a ")?;
    let (size, shape) = rest.split_once(' ')?;
    let x = size_word(size)?;
    Some(match shape {
        "triangle" => Part::Poly(3, x),
        "square" => Part::Poly(4, x),
        "pentagon" => Part::Poly(5, x),
        "hexagon" => Part::Poly(6, x),
        "semicircle" => Part::Semi(x),
        "circle" => Part::Circle(x),
        "line" => Part::Line(x),
        other => Part::Poly(other.strip_suffix(" gon")?.parse().ok()?, x),
    })
}

pub fn parse_query(q: &str) -> Option<Layout> {
    let q = q.trim();
    if let Some(both) = q.strip_suffix(" side by side") {
        let (a, b) = both.split_once(" and ")?;
        return Some(Layout::SideBySide(parse_part(a)?, parse_part(b)?));
    }
    if let Some((a, b)) = q.split_once(" followed by ") {
        return Some(Layout::Followed(parse_part(a)?, parse_part(b)?));
    }
    parse_part(q).map(Layout::Single)
}

fn angle(n: i64) -> String {
    if 360 % n == 0 {
        format!("{}.0", 360 / n)
    } else {
        format!("360.0 / {n}")
    }
}

pub fn primitive(p: Part) -> String {
    match p {
        Part::Poly(n, x) => format!("for i in range({n}):\n    forward({x})\n    left({})\n", angle(n)),
        Part::Semi(x) => format!("for i in range(HALF_INF):\n    forward(EPS_DIST * {x})\n    left(EPS_ANGLE)\n"),
        Part::Circle(x) => format!("for i in range(HALF_INF * 2):\n    forward(EPS_DIST * {x})\n    left(EPS_ANGLE)\n"),
        Part::Line(x) => format!("forward({x})\n"),
    }
}

fn gap(p: Part) -> i64 {
    match p {
        Part::Poly(_, x) => x + 1,
        Part::Line(x) => x,
        Part::Semi(_) | Part::Circle(_) => 1,
    }
}

fn join(layout: &Layout, render: &mut dyn FnMut(Part) -> String) -> String {
    match *layout {
        Layout::Single(a) => render(a),
        Layout::Followed(a, b) => render(a) + &render(b),
        Layout::SideBySide(a, b) => render(a) + &format!("penup()\nforward({})\npendown()\n", gap(a)) + &render(b),
    }
}

/// The corpus program for a query.
pub fn gold_program(q: &str) -> Option<String> {
    parse_query(q).map(|l| join(&l, &mut primitive))
}

pub const DRAW_POLYGON: &str = "def draw_polygon(sides, length):\n    # draws a regular polygon with the given number of sides\n    for i in range(sides):\n        forward(length)\n        left(360.0 / sides)\n";
pub const DRAW_SEMICIRCLE: &str = "def draw_semicircle():\n    # draws a small half circle\n    for i in range(HALF_INF):\n        forward(EPS_DIST * 2)\n        left(EPS_ANGLE)\n";
pub const DRAW_SQUARE_FIXED: &str = "def draw_square():\n    # draws a square\n    for i in range(4):\n        forward(2)\n        left(90.0)\n";
pub const DRAW_SQUARE: &str = "def draw_square(size):\n    # draws a square with sides of the given size\n    for i in range(4):\n        forward(size)\n        left(90.0)\n";
/// Wrong turning angle: 140 is the interior angle, not the exterior one.
pub const DRAW_9GON_BAD: &str = "def draw_9gon(length):\n    # draws a nine sided polygon\n    for i in range(9):\n        forward(length)\n        left(140.0)\n";

/// A primitive program split back into figures and pen moves.
#[derive(Debug, Clone, PartialEq)]
enum Seg {
    Part(Part),
    Raw(String),
}

fn segments(program: &str) -> Vec<Seg> {
    let lines: Vec<&str> = program.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#')).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let l = lines[i].trim_end();
        if let Some(n) = l.strip_prefix("for i in range(").and_then(|r| r.strip_suffix("):")) {
            let fwd = lines.get(i + 1).map(|s| s.trim()).unwrap_or("");
            let arg = fwd.strip_prefix("forward(").and_then(|r| r.strip_suffix(')')).unwrap_or("");
            let seg = match (n, arg.strip_prefix("EPS_DIST * ")) {
                ("HALF_INF", Some(x)) => x.parse().ok().map(Part::Semi),
                ("HALF_INF * 2", Some(x)) => x.parse().ok().map(Part::Circle),
                (n, None) => n.parse().ok().zip(arg.parse().ok()).map(|(n, x)| Part::Poly(n, x)),
                _ => None,
            };
            if let Some(p) = seg {
                out.push(Seg::Part(p));
                i += 3;
                continue;
            }
        }
        out.push(Seg::Raw(format!("{}\n", l.trim())));
        i += 1;
    }
    out
}

/// Text of the helper block that precedes the first query.
fn listed_helpers(prompt: &str) -> &str {
    let start = prompt.find("following helper functions:\n").map_or(0, |i| i);
    let end = prompt[start..].find("QUERY 1:").map_or(prompt.len(), |i| start + i);
    &prompt[start..end]
}

struct Rewrite {
    code: String,
    uses: Vec<&'static str>,
}

/// `fixed` is true for retries, which never repeat the planted mistakes.
fn rewrite(program: &str, listed: &str, fixed: bool) -> Rewrite {
    let mut code = String::new();
    let mut uses = Vec::new();
    for seg in segments(program) {
        match seg {
            Seg::Part(Part::Poly(4, x)) if listed.contains("def draw_square(size)") => {
                code.push_str(&format!("draw_square({x})\n"));
                uses.push(DRAW_SQUARE);
            }
            Seg::Part(Part::Poly(4, _)) if !fixed => {
                code.push_str("draw_square()\n");
                uses.push(DRAW_SQUARE_FIXED);
            }
            Seg::Part(Part::Poly(9, x)) if !fixed => {
                code.push_str(&format!("draw_9gon({x})\n"));
                uses.push(DRAW_9GON_BAD);
            }
            Seg::Part(Part::Poly(n, x)) => {
                code.push_str(&format!("draw_polygon({n}, {x})\n"));
                uses.push(DRAW_POLYGON);
            }
            Seg::Part(Part::Semi(2)) => {
                code.push_str("draw_semicircle()\n");
                uses.push(DRAW_SEMICIRCLE);
            }
            Seg::Part(p) => code.push_str(&primitive(p)),
            Seg::Raw(r) => code.push_str(&r),
        }
    }
    Rewrite { code, uses }
}

fn helper_name(src: &str) -> &str {
    src.trim_start_matches("def ").split('(').next().unwrap_or("")
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let s = text.find(start)? + start.len();
    let e = text[s..].find(end).map_or(text.len(), |e| s + e);
    Some(&text[s..e])
}

/// (query, program) pairs of a refactor or retry prompt.
fn items(prompt: &str, program_label: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for i in 1.. {
        let Some(q) = between(prompt, &format!("QUERY {i}: "), "\n") else { break };
        let stop = if program_label == "PROGRAM" { format!("QUERY {}: ", i + 1) } else { format!("FAILED PROGRAM {i}:") };
        let stop = if prompt.contains(&stop) { stop } else { "Please format your answer as:".to_string() };
        let p = between(prompt, &format!("\n{program_label} {i}:\n"), &stop).unwrap_or("");
        out.push((q.to_string(), p.to_string()));
    }
    out
}

fn refactor_reply(prompt: &str, program_label: &str, fixed: bool) -> String {
    let listed = listed_helpers(prompt);
    let mut reply = String::new();
    let mut new_helpers: Vec<&str> = Vec::new();
    for (i, (query, program)) in items(prompt, program_label).iter().enumerate() {
        let r = rewrite(program, listed, fixed);
        let first = r.uses.first().map_or("none", |h| helper_name(h));
        reply.push_str(&format!(
            "NEW PROGRAM {}:\n# Thoughts:\n# 1. The query asks for: {query}\n# 2. {query} can be solved by drawing its parts in order.\n# 3. I will use helper function {first} to draw it.\n{}",
            i + 1,
            r.code
        ));
        for h in r.uses {
            if !listed.contains(&format!("def {}(", helper_name(h))) && !new_helpers.contains(&h) {
                new_helpers.push(h);
            }
        }
    }
    reply.push_str("NEW HELPERS:\n");
    for h in new_helpers {
        reply.push_str(h);
        reply.push('\n');
    }
    reply
}

fn agent_reply(prompt: &str) -> String {
    let query = prompt.rsplit("Query: ").next().and_then(|t| t.split('\n').next()).unwrap_or("").trim();
    let Some(layout) = parse_query(query) else { return "# Thought: I do not know this shape.\nforward(1)\n".into() };
    let helpers = between(prompt, "You can also use the following helper functions:\n", "\nYou will be given a query").unwrap_or("");
    let library = !helpers.is_empty();
    let mut render = |p: Part| match p {
        Part::Poly(4, x) if helpers.contains("def draw_square(size)") => format!("draw_square({x})\n"),
        Part::Poly(n, x) if helpers.contains("def draw_polygon(") => format!("draw_polygon({n}, {x})\n"),
        // the baseline rounds the 7-gon angle and gets it wrong
        Part::Poly(7, x) if !library => format!("for i in range(7):\n    forward({x})\n    left(51.4)\n"),
        Part::Semi(_) if helpers.contains("def draw_semicircle(") => "draw_semicircle()\n".to_string(),
        Part::Circle(_) if library => "draw_circle()\n".to_string(),
        p => primitive(p),
    };
    format!("# Thought: the query asks for {query}, so I will draw its parts in order.\n{}", join(&layout, &mut render))
}

fn edit_reply(prompt: &str) -> String {
    let function = between(prompt, "FUNCTION:\n```\n", "```").unwrap_or("");
    if function.starts_with("def draw_square():") {
        format!("Thoughts:\n1. The function passes some tests and fails others because the size is hardcoded.\n2. The failing queries asked for other sizes.\n3. The program failed because it always draws sides of length 2.\n4. This can be addressed by adding a size parameter.\nNEW PROGRAM:\n{DRAW_SQUARE}")
    } else {
        format!("Thoughts:\n1. The function looks right.\nNEW PROGRAM:\n{function}")
    }
}

fn migration_reply(prompt: &str) -> String {
    let query = between(prompt, "Query: ", "\n").unwrap_or("");
    let program = between(prompt, "\nProgram:\n", "Output the rewritten program").unwrap_or("");
    let size = match parse_query(query) {
        Some(Layout::Single(Part::Poly(4, x))) => x,
        Some(Layout::SideBySide(Part::Poly(4, x), _) | Layout::SideBySide(_, Part::Poly(4, x))) => x,
        _ => 2,
    };
    format!("NEW PROGRAM:\n{}", program.replace("draw_square()", &format!("draw_square({size})")))
}

fn comment_reply(prompt: &str) -> String {
    let tail = prompt.rsplit("\nQuery: ").next().unwrap_or("");
    let query = tail.lines().next().unwrap_or("");
    let code = between(tail, "Code:\n", "\nQuery (decomposed):").unwrap_or("");
    format!("# {query}\n{}\n", code.trim_end())
}

/// Replies the toy corpus needs, keyed off the shape of each prompt.
pub fn respond(prompt: &str) -> String {
    if prompt.starts_with("Please rewrite the following") {
        refactor_reply(prompt, "PROGRAM", false)
    } else if prompt.contains("did not pass verification") {
        refactor_reply(prompt, "ORIGINAL PROGRAM", true)
    } else if prompt.starts_with("Refactor the following function") {
        edit_reply(prompt)
    } else if prompt.contains("was changed from:") {
        migration_reply(prompt)
    } else if prompt.starts_with("You are an expert coder. For each query below, decompose") {
        let q = prompt.rsplit("Query: ").next().and_then(|t| t.lines().next()).unwrap_or("");
        format!("The query asks: {q}\nThis can be decomposed into:\n1. draw the shapes in order\n")
    } else if prompt.starts_with("Please add comments") {
        comment_reply(prompt)
    } else if prompt.contains("Thought and Program:") {
        agent_reply(prompt)
    } else {
        String::new()
    }
}

pub struct Scripted;

impl Backend for Scripted {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        Ok(respond(req.prompt()))
    }

    fn id(&self) -> String {
        "scripted-toy".into()
    }
}

pub fn scripted() -> Arc<dyn Backend> {
    Arc::new(Scripted)
}

/// Calls per bank helper, counted by running the program with every bank
/// helper rewritten to print a marker on entry. Programs that reference an
/// undefined function count nothing, since they are never run for scoring.
pub fn count_calls_by_print(program: &str, bank: &CodeBank, registry: &Arc<Registry>) -> BTreeMap<String, u64> {
    let mut src = String::new();
    for f in bank.functions.values() {
        if program.contains(&format!("def {}(", f.name)) {
            continue;
        }
        let mut lines = f.source.lines();
        src.push_str(lines.next().unwrap_or(""));
        src.push('\n');
        src.push_str(&format!("    print(\"@@call {}\")\n", f.name));
        for l in lines {
            src.push_str(l);
            src.push('\n');
        }
    }
    src.push_str(program);
    let out = run_source(&src, &Env::new(registry.clone()));
    let mut counts = BTreeMap::new();
    if out.error.contains("undefined function") {
        return counts;
    }
    for line in out.stdout.lines() {
        if let Some(name) = line.strip_prefix("@@call ") {
            *counts.entry(name.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

/// Run the CLI. With `record`, completions come from `backend` and are
/// saved into the replay directory; otherwise they are replayed from it.
pub fn cli(args: &[&str], record: bool, backend: Option<Arc<dyn Backend>>) -> i32 {
    let fixtures = replay_dir().display().to_string();
    let mut argv: Vec<String> = vec!["abstractor".into(), "--fixtures".into(), fixtures];
    if record {
        argv.extend(["fixtures", "record", "--"].map(String::from));
    }
    argv.extend(args.iter().map(|s| s.to_string()));
    abstractor::cli::run_with(argv, backend)
}

/// Preprocess, train and test both arms on the toy corpus inside `work`.
pub fn run_pipeline(work: &std::path::Path, record: bool, backend: Option<Arc<dyn Backend>>) {
    let toy = toy_dir();
    let p = |x: PathBuf| x.display().to_string();
    let w = |x: &str| p(work.join(x));
    let steps: Vec<Vec<String>> = vec![
        vec!["preprocess".into(), "--domain".into(), "logo".into(), "--data".into(), p(toy.join("train.jsonl")), "--out".into(), w(""), "--batch-size".into(), "5".into()],
        vec!["train".into(), "--manifest".into(), w("batches.json"), "--out".into(), w("banks")],
        vec!["test".into(), "--banks".into(), w("banks"), "--train".into(), w("train.commented.jsonl"), "--test".into(), p(toy.join("test.jsonl")), "--out".into(), w("library/results.jsonl"), "--mode".into(), "library".into()],
        vec!["test".into(), "--banks".into(), w("banks"), "--train".into(), w("train.commented.jsonl"), "--test".into(), p(toy.join("test.jsonl")), "--out".into(), w("baseline/results.jsonl"), "--mode".into(), "baseline".into()],
    ];
    for s in steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        assert_eq!(cli(&args, record, backend.clone()), 0, "step failed: {}", s.join(" "));
    }
}
