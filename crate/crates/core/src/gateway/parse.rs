//! Pulling programs and helpers out of free-form model text.
//!
//! Nothing here fails: text that cannot be used is dropped and a diagnostic
//! is recorded instead.

use crate::proglang::{parse, print_function, Ast, StmtKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ProposedProgram {
    /// 1-based position in the batch; 0 for an unnumbered `NEW PROGRAM:`.
    pub index: usize,
    pub source: String,
    /// Leading comment lines (the numbered thoughts).
    pub thought: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposedHelper {
    pub name: String,
    /// Canonically printed definition.
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefactorProposal {
    pub programs: Vec<ProposedProgram>,
    pub helpers: Vec<ProposedHelper>,
    pub diagnostics: Vec<String>,
}

impl RefactorProposal {
    pub fn program(&self, index: usize) -> Option<&ProposedProgram> {
        self.programs.iter().find(|p| p.index == index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Marker {
    Program(usize),
    Helpers,
}

/// Recognizes `NEW PROGRAM 3:` and `NEW HELPERS:`, tolerating markdown
/// decoration. Returns the marker and any text after the colon.
fn marker(line: &str) -> Option<(Marker, String)> {
    let t = line.trim().trim_start_matches(['#', '*', '>', ' ']).trim_end_matches(['*', ' ']);
    let upper = t.to_ascii_uppercase();
    if let Some(rest) = upper.strip_prefix("NEW PROGRAM") {
        let rest = rest.trim_start_matches('S');
        let digits: String = rest.trim_start().chars().take_while(|c| c.is_ascii_digit()).collect();
        let after = rest.trim_start()[digits.len()..].trim_start();
        let tail = after.strip_prefix(':')?;
        let index = if digits.is_empty() { 0 } else { digits.parse().ok()? };
        let tail_start = t.len() - tail.len();
        return Some((Marker::Program(index), t[tail_start..].trim_matches('*').trim().to_string()));
    }
    if let Some(rest) = upper.strip_prefix("NEW HELPERS").or_else(|| upper.strip_prefix("NEW HELPER")) {
        let rest = rest.trim_start();
        if rest.is_empty() || rest.starts_with(':') {
            let tail = rest.strip_prefix(':').unwrap_or("");
            let tail_start = t.len() - tail.len();
            return Some((Marker::Helpers, t[tail_start..].trim_matches('*').trim().to_string()));
        }
    }
    None
}

fn split_sections(text: &str) -> Vec<(Marker, String)> {
    let mut out: Vec<(Marker, String)> = Vec::new();
    for line in text.lines() {
        if let Some((m, tail)) = marker(line) {
            out.push((m, if tail.is_empty() { String::new() } else { format!("{tail}\n") }));
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    out
}

/// Drop markdown fences. When fences are present only their contents are kept.
fn strip_fences(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let is_fence = |l: &str| l.trim_start().starts_with("```");
    if !lines.iter().any(|l| is_fence(l)) {
        return text.to_string();
    }
    let mut inside = false;
    let mut kept = Vec::new();
    for l in lines {
        if is_fence(l) {
            inside = !inside;
        } else if inside {
            kept.push(l);
        }
    }
    kept.join("\n") + "\n"
}

fn dedent(lines: &[&str]) -> Vec<String> {
    let margin = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start_matches(' ').len())
        .min()
        .unwrap_or(0);
    lines.iter().map(|l| if l.len() >= margin { l[margin..].to_string() } else { l.trim().to_string() }).collect()
}

fn has_code(ast: &Ast) -> bool {
    ast.body.iter().any(|s| !matches!(s.kind, StmtKind::Comment(_)))
}

/// Longest parseable stretch of `text`: leading lines are dropped while the
/// first line itself fails, trailing lines from the failing line onward
/// otherwise. Each step removes at least one line.
fn tolerant_parse(text: &str) -> Result<(String, Ast), String> {
    let raw: Vec<&str> = text.lines().collect();
    let mut lines = dedent(&raw);
    let mut first_error = None;
    loop {
        while lines.first().is_some_and(|l| l.trim().is_empty()) {
            lines.remove(0);
        }
        while lines.last().is_some_and(|l| l.trim().is_empty()) {
            lines.pop();
        }
        if lines.is_empty() {
            return Err(first_error.unwrap_or_else(|| "no code found".to_string()));
        }
        let src = lines.join("\n") + "\n";
        match parse(&src) {
            Ok(ast) if has_code(&ast) => return Ok((src, ast)),
            Ok(_) => return Err(first_error.unwrap_or_else(|| "only comments, no code".to_string())),
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
                if e.line <= 1 || e.line > lines.len() {
                    if e.line > lines.len() {
                        lines.pop();
                    } else {
                        lines.remove(0);
                    }
                } else {
                    lines.truncate(e.line - 1);
                }
                let refreshed = dedent(&lines.iter().map(String::as_str).collect::<Vec<_>>());
                lines = refreshed;
            }
        }
    }
}

fn leading_comments(src: &str) -> String {
    src.lines()
        .take_while(|l| l.trim_start().starts_with('#') || l.trim().is_empty())
        .filter(|l| !l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// The first usable program in a completion. Honors a `NEW PROGRAM:` marker
/// when there is one.
pub fn extract_program(text: &str) -> Result<String, String> {
    let sections = split_sections(text);
    let body = sections
        .iter()
        .find(|(m, _)| matches!(m, Marker::Program(_)))
        .map(|(_, b)| b.clone())
        .unwrap_or_else(|| text.to_string());
    tolerant_parse(&strip_fences(&body)).map(|(src, _)| src)
}

fn split_helper_chunks(text: &str) -> Vec<String> {
    let mut chunks: Vec<String> = Vec::new();
    let mut pending = String::new();
    for line in text.lines() {
        if line.starts_with("def ") {
            chunks.push(std::mem::take(&mut pending));
        }
        pending.push_str(line);
        pending.push('\n');
    }
    chunks.push(pending);
    chunks.into_iter().filter(|c| c.lines().any(|l| l.starts_with("def "))).collect()
}

fn parse_helpers(text: &str, out: &mut RefactorProposal) {
    let cleaned = strip_fences(text);
    let lines: Vec<&str> = cleaned.lines().collect();
    let cleaned = dedent(&lines).join("\n");
    for chunk in split_helper_chunks(&cleaned) {
        let first = chunk.lines().find(|l| l.starts_with("def ")).unwrap_or("").to_string();
        match tolerant_parse(&chunk) {
            Ok((_, ast)) => {
                let defs: Vec<_> = ast.functions().collect();
                let Some(def) = defs.first() else {
                    out.diagnostics.push(format!("helper `{}` did not parse", first.trim()));
                    continue;
                };
                if ast.body.iter().any(|s| !matches!(s.kind, StmtKind::Comment(_) | StmtKind::FunctionDef(_))) {
                    out.diagnostics.push(format!("dropped top-level statements around helper {}", def.name));
                }
                if out.helpers.iter().any(|h| h.name == def.name) {
                    out.diagnostics.push(format!("duplicate helper {} ignored", def.name));
                    continue;
                }
                out.helpers.push(ProposedHelper { name: def.name.clone(), source: print_function(def) });
            }
            Err(e) => out.diagnostics.push(format!("helper `{}` did not parse: {e}", first.trim())),
        }
    }
}

pub fn parse_refactor_response(text: &str) -> RefactorProposal {
    let mut out = RefactorProposal::default();
    let sections = split_sections(text);
    if sections.is_empty() {
        out.diagnostics.push("no NEW PROGRAM or NEW HELPERS markers found".into());
        return out;
    }
    for (m, body) in sections {
        match m {
            Marker::Program(index) => {
                if out.program(index).is_some() {
                    out.diagnostics.push(format!("program {index} given twice; keeping the first"));
                    continue;
                }
                match tolerant_parse(&strip_fences(&body)) {
                    Ok((source, _)) => {
                        let thought = leading_comments(&source);
                        out.programs.push(ProposedProgram { index, source, thought });
                    }
                    Err(e) => out.diagnostics.push(format!("program {index} did not parse: {e}")),
                }
            }
            Marker::Helpers => parse_helpers(&body, &mut out),
        }
    }
    out
}
