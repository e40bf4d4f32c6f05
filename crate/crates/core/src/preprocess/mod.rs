//! Turning a training set into an ordered list of batches of related
//! examples: optional commenting, query embedding, Ward clustering, chunking
//! in leaf order, and sorting batches by mean query length.

pub mod embed;
pub mod ward;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::domains::{compare_results, result_of, Domain, Registry};
use crate::gateway::{extract_program, prompts, Backend, GatewayError};
use crate::proglang::{parse, run_source, Env};

pub use embed::{cosine, Embedder, LocalEmbedder, RemoteEmbedder};
pub use ward::{ward_cluster, Dendrogram, Merge};

pub const MANIFEST_VERSION: u32 = 1;

/// Consecutive chunks of `order` of size `k`; the last may be shorter.
pub fn batchify(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    assert!(k >= 1, "batch size must be at least 1");
    order.chunks(k).map(<[usize]>::to_vec).collect()
}

/// Mean whitespace-token count of the queries in a batch.
pub fn mean_tokens(batch: &[usize], examples: &[Example]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    batch.iter().map(|&i| examples[i].query_tokens() as f64).sum::<f64>() / batch.len() as f64
}

/// Batch indices ordered by ascending mean length; ties keep their order.
pub fn curriculum_order(means: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..means.len()).collect();
    idx.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    idx
}

pub fn curriculum_sort(batches: Vec<Vec<usize>>, examples: &[Example]) -> Vec<Vec<usize>> {
    let means: Vec<f64> = batches.iter().map(|b| mean_tokens(b, examples)).collect();
    let order = curriculum_order(&means);
    let mut slots: Vec<Option<Vec<usize>>> = batches.into_iter().map(Some).collect();
    order.into_iter().map(|i| slots[i].take().expect("a permutation")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub example_ids: Vec<String>,
    pub mean_tokens: f64,
}

/// Preprocessing output. `batches` is in leaf order; `curriculum` lists
/// batch positions shortest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub schema_version: u32,
    pub domain: Domain,
    /// Dataset the ids refer to, relative to the manifest when possible.
    pub dataset: String,
    pub dataset_sha256: String,
    pub batch_size: usize,
    pub embedder: String,
    pub batches: Vec<BatchEntry>,
    pub curriculum: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Embed(#[from] embed::EmbedError),
    #[error(transparent)]
    Cluster(#[from] ward::ClusterError),
    #[error("batch size must be at least 1")]
    BatchSize,
    #[error("no examples")]
    Empty,
}

/// Embed, cluster, chunk and order. Returns batches of example indices in
/// leaf order plus the curriculum permutation.
pub fn plan_batches(
    examples: &[Example],
    embedder: &dyn Embedder,
    k: usize,
) -> Result<(Vec<Vec<usize>>, Vec<usize>), PreprocessError> {
    if k == 0 {
        return Err(PreprocessError::BatchSize);
    }
    if examples.is_empty() {
        return Err(PreprocessError::Empty);
    }
    let texts: Vec<String> = examples.iter().map(|e| e.query.clone()).collect();
    let vecs = embedder.embed(&texts)?;
    embed::check_vectors(&vecs)?;
    let tree = ward_cluster(&vecs)?;
    let batches = batchify(&tree.leaf_order(), k);
    let means: Vec<f64> = batches.iter().map(|b| mean_tokens(b, examples)).collect();
    Ok((batches, curriculum_order(&means)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommentOutcome {
    /// Same program once comments are ignored.
    ExactMatch,
    /// Different code, same domain result.
    Execution,
    Rejected(String),
}

/// Ask the model to comment `example.program` and keep the commented version
/// only if it still does the same thing.
pub fn add_comments(
    example: &Example,
    backend: &dyn Backend,
    registry: &Arc<Registry>,
    budget: u64,
) -> Result<(Example, CommentOutcome), GatewayError> {
    let rejected = |why: String| Ok((example.clone(), CommentOutcome::Rejected(why)));
    let query = example.prompt_query();
    let Ok((decompose, comment)) = prompts::build_comment_prompts(&query, &example.program, registry) else {
        return rejected("empty query".into());
    };
    let decomposition = backend.complete(&decompose)?;
    let text = backend.complete(&comment(&decomposition))?;
    let commented = match extract_program(&text) {
        Ok(c) => c,
        Err(e) => return rejected(format!("no program in response: {e}")),
    };
    let (Ok(orig), Ok(new)) = (parse(&example.program), parse(&commented)) else {
        return rejected("commented program does not parse".into());
    };
    let mut out = example.clone();
    out.program = commented.clone();
    if orig.without_comments() == new.without_comments() {
        return Ok((out, CommentOutcome::ExactMatch));
    }
    let env = Env::new(registry.clone()).with_budget(budget);
    let a = result_of(registry, &run_source(&example.program, &env));
    let b = result_of(registry, &run_source(&commented, &env));
    match (a, b) {
        (Some(a), Some(b)) if compare_results(&a, &b) == Ok(true) => Ok((out, CommentOutcome::Execution)),
        _ => rejected("commented program does not reproduce the original result".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::logo_registry;
    use crate::gateway::{ChatRequest, FnBackend};

    fn ex(q: &str) -> Example {
        Example::new(q, q, "forward(1)\n")
    }

    #[test]
    fn batchify_shapes() {
        let order: Vec<usize> = (0..10).collect();
        assert_eq!(batchify(&order, 5).iter().map(Vec::len).collect::<Vec<_>>(), [5, 5]);
        assert_eq!(batchify(&order[..7], 3).iter().map(Vec::len).collect::<Vec<_>>(), [3, 3, 1]);
        assert_eq!(batchify(&[2, 0, 1], 1), vec![vec![2], vec![0], vec![1]]);
    }

    #[test]
    fn curriculum_examples() {
        assert_eq!(curriculum_order(&[7.5, 4.0]), [1, 0]);
        assert_eq!(curriculum_order(&[3.0, 3.0, 1.0]), [2, 0, 1]);
        assert_eq!(curriculum_order(&[6.0, 2.0, 4.0]), [1, 2, 0]);
        let exs = vec![ex("a b c d e f"), ex("a b"), ex("a b c d")];
        let sorted = curriculum_sort(vec![vec![0], vec![1], vec![2]], &exs);
        assert_eq!(sorted, vec![vec![1], vec![2], vec![0]]);
    }

    #[test]
    fn plan_groups_similar_queries() {
        let exs = vec![ex("draw a small square"), ex("what day is tomorrow"), ex("draw a big square"), ex("what day was yesterday")];
        let (batches, cur) = plan_batches(&exs, &LocalEmbedder, 2).unwrap();
        let mut groups: Vec<Vec<usize>> = batches.iter().map(|b| {
            let mut b = b.clone();
            b.sort();
            b
        }).collect();
        groups.sort();
        assert_eq!(groups, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(cur.len(), 2);
    }

    fn commenter(reply: &'static str) -> FnBackend<impl Fn(&ChatRequest) -> Result<String, GatewayError>> {
        FnBackend::new("c", move |r: &ChatRequest| {
            Ok(if r.prompt().contains("Commented code:\n# repeat") && r.prompt().ends_with("Commented code:\n") {
                reply.to_string()
            } else {
                "1. a line".to_string()
            })
        })
    }

    #[test]
    fn comments_accepted_by_exact_match() {
        let reg = Arc::new(logo_registry());
        let b = commenter("```\n# draw a line\nforward(1)\n```");
        let (out, how) = add_comments(&ex("a line"), &b, &reg, 1000).unwrap();
        assert_eq!(how, CommentOutcome::ExactMatch);
        assert_eq!(out.program, "# draw a line\nforward(1)\n");
    }

    #[test]
    fn comments_accepted_by_execution() {
        let reg = Arc::new(logo_registry());
        let b = commenter("# draw a line in two halves\nforward(0.5)\nforward(0.5)\n");
        let mut e = ex("a line");
        e.program = "forward(0.5)\nforward(0.5)\nleft(0)\n".into();
        let (_, how) = add_comments(&e, &b, &reg, 1000).unwrap();
        assert_eq!(how, CommentOutcome::Execution);
    }

    #[test]
    fn different_shape_rejected() {
        let reg = Arc::new(logo_registry());
        let b = commenter("# a longer line\nforward(2)\n");
        let (out, how) = add_comments(&ex("a line"), &b, &reg, 1000).unwrap();
        assert!(matches!(how, CommentOutcome::Rejected(_)));
        assert_eq!(out.program, "forward(1)\n");
    }
}
