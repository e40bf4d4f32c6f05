//! Prompt builders. Every builder returns a complete [`ChatRequest`].

use super::ChatRequest;
use crate::domains::{Domain, Registry};

const SYSTEM: &str = "You are an expert programmer. You write programs in a small Python-like language \
using only the functions you are given.";

const LOGO_EMBED_NOTE: &str = "If the original function uses `embed`, you will likely need to use `embed` in \
your version. All code to be repeated needs to be included within the triple quotes passed to embed.";

pub const MAX_PROMPT_HELPERS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("prompt precondition violated: {0}")]
pub struct PromptError(pub String);

/// A query with a program, as shown to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub query: String,
    pub program: String,
}

impl Shot {
    pub fn new(query: impl Into<String>, program: impl Into<String>) -> Self {
        Shot { query: query.into(), program: program.into() }
    }
}

fn number_word(n: usize) -> String {
    const WORDS: [&str; 11] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

fn helper_block(helpers: &[String]) -> String {
    if helpers.is_empty() {
        return "(none yet)\n".into();
    }
    let mut out = String::new();
    for h in helpers {
        out.push_str(h.trim_end());
        out.push_str("\n\n");
    }
    out
}

fn with_newline(s: &str) -> String {
    let mut s = s.trim_end().to_string();
    s.push('\n');
    s
}

fn primitive_block(registry: &Registry) -> String {
    format!("Your programs can use the following primitive functions:\n{}", registry.describe())
}

fn output_format(n: usize) -> String {
    let mut out = String::from("Please format your answer as:\n");
    for i in 1..=n {
        out.push_str(&format!("NEW PROGRAM {i}:\n"));
    }
    out.push_str("NEW HELPERS:\n\nDo not include any text that is not valid Python code.\n");
    out.push_str("Recall that no matter what, your program MUST be formatted in the following fashion:\n");
    for i in 1..=n {
        out.push_str(&format!(
            "NEW PROGRAM {i}:\n# Thoughts:\n# 1. The query asks for: <query intention>\n\
             # 2. <query> can be solved by <components>.\n\
             # 3. I will use helper function <function> to <goal>.\n<code for program {i}>\n"
        ));
    }
    out
}

fn closing(registry: &Registry) -> String {
    let mut out = String::from(
        "Try to make your new programs as short as possible by introducing shared helper functions. \
         Helper function parameters should be as general as possible and helper functions should be informatively named.\n",
    );
    if registry.domain == Domain::Logo {
        out.push_str(LOGO_EMBED_NOTE);
        out.push('\n');
    }
    out
}

/// Batch refactoring prompt.
pub fn build_refactor_prompt(batch: &[Shot], helpers: &[String], registry: &Registry) -> Result<ChatRequest, PromptError> {
    if batch.is_empty() {
        return Err(PromptError("refactoring needs at least one program".into()));
    }
    let mut p = format!("Please rewrite the following {} programs to be more efficient.\n", number_word(batch.len()));
    p.push_str(&primitive_block(registry));
    p.push_str("The resulting programs MUST execute to the same result as the original programs.\n");
    p.push_str("Start by writing helper functions that can reduce the size of the code.\n");
    p.push_str("You can also choose from the following helper functions:\n");
    p.push_str(&helper_block(helpers));
    p.push('\n');
    for (i, shot) in batch.iter().enumerate() {
        let i = i + 1;
        p.push_str(&format!("QUERY {i}: {}\nPROGRAM {i}:\n{}\n", shot.query.trim(), with_newline(&shot.program)));
    }
    p.push_str(&output_format(batch.len()));
    p.push('\n');
    p.push_str(&closing(registry));
    Ok(ChatRequest::new(SYSTEM, p))
}

/// One failed candidate for the retry prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryItem {
    pub query: String,
    pub original: String,
    pub failed: String,
    /// Definitions the failed program relied on from its own proposal.
    pub failed_helpers: Vec<String>,
    pub feedback: String,
}

pub fn build_retry_prompt(items: &[RetryItem], helpers: &[String], registry: &Registry) -> Result<ChatRequest, PromptError> {
    if items.is_empty() {
        return Err(PromptError("retry needs at least one failure".into()));
    }
    let mut p = format!(
        "The following {} rewritten programs did not pass verification. Each rewritten program MUST execute \
         to the same result as its original program.\n",
        number_word(items.len())
    );
    p.push_str(&primitive_block(registry));
    p.push_str("You can also choose from the following helper functions:\n");
    p.push_str(&helper_block(helpers));
    p.push('\n');
    for (i, it) in items.iter().enumerate() {
        let i = i + 1;
        p.push_str(&format!("QUERY {i}: {}\n", it.query.trim()));
        p.push_str(&format!("ORIGINAL PROGRAM {i}:\n{}", with_newline(&it.original)));
        p.push_str(&format!("FAILED PROGRAM {i}:\n{}", with_newline(&it.failed)));
        if !it.failed_helpers.is_empty() {
            p.push_str(&format!("HELPERS USED BY FAILED PROGRAM {i}:\n{}", helper_block(&it.failed_helpers)));
        }
        p.push_str(&format!("FEEDBACK {i}: {}\n\n", it.feedback.trim()));
    }
    p.push_str("Use the feedback to fix each failed program and any helper functions it needs.\n");
    p.push_str(&output_format(items.len()));
    p.push('\n');
    p.push_str(&closing(registry));
    Ok(ChatRequest::new(SYSTEM, p))
}

pub fn build_decompose_prompt(query: &str) -> Result<ChatRequest, PromptError> {
    if query.trim().is_empty() {
        return Err(PromptError("empty query".into()));
    }
    let p = format!(
        "You are an expert coder. For each query below, decompose it into its parts.\n\
         Example:\n\
         Query: Do some action 5 times and then do another action\n\
         Query (decomposed):\n\
         The query asks: Do some action and then do another action\n\
         This can be decomposed into:\n\
         1. repeat an action\n\
         2. some action\n\
         3. another action\n\n\
         Query: {}\n\
         Query (decomposed):\n",
        query.trim()
    );
    Ok(ChatRequest::new(SYSTEM, p))
}

pub fn build_comment_prompt(query: &str, program: &str, decomposition: &str, registry: &Registry) -> Result<ChatRequest, PromptError> {
    if query.trim().is_empty() {
        return Err(PromptError("empty query".into()));
    }
    let p = format!(
        "Please add comments to the following program to explain what each chunk of code does with respect to the query.\n\
         First, decompose the query into parts. Then comment the code with the query parts.\n\
         Example:\n\
         Query: Do some action and then do another action\n\
         Code:\n\
         do_some_action()\n\
         do_another_action()\n\n\
         Query: Do some action 5 times and then do another action\n\
         Query (decomposed):\n\
         The query asks: Do some action and then do another action\n\
         This can be decomposed into:\n\
         1. repeat an action\n\
         2. some action\n\
         3. another action\n\
         Commented code:\n\
         # repeat an action\n\
         for i in range(5):\n    \
         # do some action\n    \
         do_some_action()\n\
         # do another action\n\
         do_another_action()\n\n\
         {}\n\
         Query: {}\n\
         Code:\n\
         {}\n\
         Query (decomposed):\n\
         {}\n\
         Commented code:\n",
        primitive_block(registry).trim_end(),
        query.trim(),
        program.trim_end(),
        decomposition.trim()
    );
    Ok(ChatRequest::new(SYSTEM, p))
}

/// Both commenting prompts; the second needs the first one's output, so it
/// is returned as a closure over that text.
pub fn build_comment_prompts<'a>(
    query: &'a str,
    program: &'a str,
    registry: &'a Registry,
) -> Result<(ChatRequest, impl Fn(&str) -> ChatRequest + 'a), PromptError> {
    let decompose = build_decompose_prompt(query)?;
    let comment = move |decomposition: &str| {
        build_comment_prompt(query, program, decomposition, registry).expect("query checked above")
    };
    Ok((decompose, comment))
}

/// A unit test of a helper: the demo program and, for failures, what went wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct EditCase {
    pub query: String,
    pub program: String,
    pub feedback: Option<String>,
}

pub fn build_edit_prompt(
    function: &str,
    name: &str,
    passed: usize,
    failed: usize,
    success: Option<&EditCase>,
    failure: &EditCase,
    helpers: &[String],
    registry: &Registry,
) -> Result<ChatRequest, PromptError> {
    if failed == 0 {
        return Err(PromptError(format!("{name} has no failing cases to fix")));
    }
    let total = (passed + failed) as f64;
    let pass_perc = passed as f64 / total;
    let fail_perc = failed as f64 / total;
    let case = |c: &EditCase| {
        let mut s = format!("Query: {}\nProgram:\n{}", c.query.trim(), with_newline(&c.program));
        if let Some(fb) = &c.feedback {
            s.push_str(&format!("Feedback: {}\n", fb.trim()));
        }
        s
    };
    let mut p = format!("Refactor the following function to improve performance.\nFUNCTION:\n```\n{}```\n\n", with_newline(function));
    p.push_str(&primitive_block(registry));
    p.push('\n');
    p.push_str("You may also use the following helper functions:\n");
    p.push_str(&helper_block(helpers));
    p.push('\n');
    p.push_str(
        "Try to increase the number of passing programs. Try to make programs general. For example, you can add \
         parameters instead of hardcoded values or call other helper functions. First, for each failing query, explain \
         why the programs do not accomplish the query's goal. Output this reasoning as:\n\
         Thoughts:\n\
         1. The function passes some tests and fails others because <reason>.\n\
         2. The failing queries <repeat queries here> asked for <intent>.\n\
         3. The program failed because <reason>.\n\
         4. This can be addressed by <change>.\n\
         Then output your program so that all test cases pass, using the following format: NEW PROGRAM: <program>\n",
    );
    p.push_str(&format!(
        "Currently, {name} passes in {:.1}% of cases and fails in {:.1}%.\n\n",
        pass_perc * 100.0,
        fail_perc * 100.0
    ));
    p.push_str("SUCCEEDED:\n");
    match success {
        Some(c) => p.push_str(&case(c)),
        None => p.push_str("(no passing cases yet)\n"),
    }
    p.push_str("FAILED:\n");
    p.push_str(&case(failure));
    p.push_str("Thoughts:\n");
    Ok(ChatRequest::new(SYSTEM, p))
}

/// Rewrites a unit test after a helper's signature changed.
pub fn build_migration_prompt(name: &str, old: &str, new: &str, query: &str, program: &str) -> ChatRequest {
    let p = format!(
        "The helper function {name} was changed from:\n{}to:\n{}\n\
         Rewrite the following program so that it calls the new version of {name} and still does what the query asks. \
         Only change the calls to {name}.\n\
         Query: {}\nProgram:\n{}\
         Output the rewritten program as: NEW PROGRAM: <program>\n",
        with_newline(old),
        with_newline(new),
        query.trim(),
        with_newline(program)
    );
    ChatRequest::new(SYSTEM, p)
}

fn agent_header(registry: &Registry) -> String {
    match registry.domain {
        Domain::Logo => format!(
            "Your task is to draw simple figures using python Turtle graphics.\n\
             You will use a custom turtle library, similar to the built-in library, which is sufficient for all tasks.\n\n\
             Here's a description of the custom library:\n{}",
            registry.describe()
        ),
        Domain::Date => format!(
            "Your task is to solve simple word problems by creating Python programs.\n\
             Store the final result in a variable named answer.\n{}",
            primitive_block(registry)
        ),
        Domain::Textcraft => format!(
            "Your task is to craft objects in a text-based crafting game by creating Python programs.\n{}",
            primitive_block(registry)
        ),
    }
}

/// Test-time synthesis prompt. `demos` are refactored programs from the demo
/// bank, `primitives` are original training programs; they are interleaved,
/// demos first.
pub fn build_agent_prompt(
    query: &str,
    helpers: &[String],
    demos: &[Shot],
    primitives: &[Shot],
    registry: &Registry,
) -> Result<ChatRequest, PromptError> {
    if helpers.len() > MAX_PROMPT_HELPERS {
        return Err(PromptError(format!("{} helpers exceed the limit of {MAX_PROMPT_HELPERS}", helpers.len())));
    }
    if query.trim().is_empty() {
        return Err(PromptError("empty query".into()));
    }
    let mut p = agent_header(registry);
    if !helpers.is_empty() {
        p.push_str("\nYou can also use the following helper functions:\n");
        p.push_str(&helper_block(helpers));
    }
    p.push_str(
        "\nYou will be given a query and have to produce a program. Begin your program with a comment that explains \
         your reasoning. For example, you might write:\n# Thought: the query asks for a line, so I will use the forward() function.\n",
    );
    p.push_str("Examples:\n");
    let mut shots = Vec::with_capacity(demos.len() + primitives.len());
    let (mut d, mut q) = (demos.iter(), primitives.iter());
    loop {
        match (d.next(), q.next()) {
            (None, None) => break,
            (a, b) => shots.extend(a.into_iter().chain(b)),
        }
    }
    for s in shots {
        p.push_str(&format!("Query: {}\nThought and Program:\n{}\n", s.query.trim(), with_newline(&s.program)));
    }
    p.push_str("Please generate ONLY the code to produce the answer and nothing else.\n");
    p.push_str(&format!("Query: {}\nThought and Program:\n", query.trim()));
    Ok(ChatRequest::new(SYSTEM, p))
}
