//! Exact cosine top-k over training queries, demos and helpers.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::codebank::{CodeBank, DemoBank};
use crate::dataset::Example;
use crate::preprocess::embed::{EmbedError, Embedder};
use crate::preprocess::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    TrainExample,
    Demo,
    Helper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub kind: EntryKind,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("vector for {key} has dimension {got}, index uses {expected}")]
    Dimension { key: String, got: usize, expected: usize },
    #[error("duplicate {kind:?} key {key}")]
    Duplicate { key: String, kind: EntryKind },
    #[error("vector for {0} has zero norm")]
    ZeroNorm(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    pub provider: String,
    dim: Option<usize>,
    entries: Vec<Entry>,
}

impl VectorIndex {
    pub fn new(provider: impl Into<String>) -> Self {
        VectorIndex { provider: provider.into(), dim: None, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: EntryKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    pub fn insert(&mut self, key: impl Into<String>, kind: EntryKind, vector: Vec<f64>) -> Result<(), IndexError> {
        let key = key.into();
        let expected = *self.dim.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(IndexError::Dimension { key, got: vector.len(), expected });
        }
        if vector.iter().all(|x| *x == 0.0) {
            return Err(IndexError::ZeroNorm(key));
        }
        if self.entries.iter().any(|e| e.kind == kind && e.key == key) {
            return Err(IndexError::Duplicate { key, kind });
        }
        self.entries.push(Entry { key, kind, vector });
        Ok(())
    }

    /// Up to `n` entries of `kind`, most similar first; equal similarity
    /// falls back to key order.
    pub fn topk(&self, query: &[f64], n: usize, kind: EntryKind) -> Result<Vec<(String, f64)>, IndexError> {
        if let Some(d) = self.dim {
            if query.len() != d {
                return Err(IndexError::Dimension { key: "<query>".into(), got: query.len(), expected: d });
            }
        }
        let mut scored: Vec<(&str, f64)> = self
            .entries
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| (e.key.as_str(), cosine(query, &e.vector)))
            .collect();
        scored.sort_by(|a, b| match b.1.partial_cmp(&a.1) {
            Some(Ordering::Equal) | None => a.0.cmp(b.0),
            Some(o) => o,
        });
        Ok(scored.into_iter().take(n).map(|(k, s)| (k.to_string(), s)).collect())
    }
}

/// Text a helper is retrieved by: its name with underscores as spaces, then
/// its description.
pub fn helper_text(name: &str, description: &str) -> String {
    let words = name.replace('_', " ");
    let d = description.trim();
    if d.is_empty() {
        words
    } else {
        format!("{words} {d}")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Index training queries, retrievable demos (by query) and live helpers.
pub fn build_index(
    embedder: &dyn Embedder,
    train: &[Example],
    demos: &DemoBank,
    bank: &CodeBank,
) -> Result<VectorIndex, BuildError> {
    let mut items: Vec<(String, EntryKind, String)> = Vec::new();
    for e in train {
        items.push((e.id.clone(), EntryKind::TrainExample, e.query.clone()));
    }
    for d in demos.retrievable(bank) {
        items.push((d.id.clone(), EntryKind::Demo, d.query.clone()));
    }
    for f in bank.functions.values() {
        items.push((f.name.clone(), EntryKind::Helper, helper_text(&f.name, &f.description)));
    }
    let texts: Vec<String> = items.iter().map(|i| i.2.clone()).collect();
    let vecs = if texts.is_empty() { Vec::new() } else { embedder.embed(&texts)? };
    let mut index = VectorIndex::new(embedder.id());
    for ((key, kind, _), v) in items.into_iter().zip(vecs) {
        index.insert(key, kind, v)?;
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebank::HelperFunction;
    use crate::preprocess::LocalEmbedder;

    #[test]
    fn exact_match_first_orthogonal_last() {
        let mut ix = VectorIndex::new("t");
        ix.insert("a", EntryKind::Helper, vec![1.0, 0.0]).unwrap();
        ix.insert("b", EntryKind::Helper, vec![0.0, 1.0]).unwrap();
        ix.insert("c", EntryKind::Helper, vec![1.0, 1.0]).unwrap();
        ix.insert("a", EntryKind::Demo, vec![0.0, 1.0]).unwrap();
        let r = ix.topk(&[1.0, 0.0], 10, EntryKind::Helper).unwrap();
        assert_eq!(r[0], ("a".to_string(), 1.0));
        assert_eq!(r.last().unwrap(), &("b".to_string(), 0.0));
        assert_eq!(r.len(), 3);
        assert!(ix.insert("a", EntryKind::Helper, vec![1.0, 0.0]).is_err());
        assert!(ix.insert("d", EntryKind::Helper, vec![1.0]).is_err());
        assert!(ix.topk(&[1.0], 1, EntryKind::Helper).is_err());
    }

    #[test]
    fn ties_by_key() {
        let mut ix = VectorIndex::new("t");
        for k in ["z", "m", "a"] {
            ix.insert(k, EntryKind::Demo, vec![2.0, 0.0]).unwrap();
        }
        let keys: Vec<String> = ix.topk(&[1.0, 0.0], 2, EntryKind::Demo).unwrap().into_iter().map(|x| x.0).collect();
        assert_eq!(keys, ["a", "m"]);
    }

    #[test]
    fn helper_text_rule() {
        assert_eq!(helper_text("draw_small_9gon", "draws a small 9-gon"), "draw small 9gon draws a small 9-gon");
        assert_eq!(helper_text("f", ""), "f");
    }

    #[test]
    fn pruned_helpers_and_failed_demos_are_not_indexed() {
        let mut bank = CodeBank::new();
        bank.add(HelperFunction::from_source("def keep():\n    forward(1)\n", 1).unwrap());
        bank.tombstones.insert(
            "gone".into(),
            crate::codebank::Tombstone { name: "gone".into(), source: String::new(), score: -1.0, reason: "pruned".into() },
        );
        let ix = build_index(&LocalEmbedder, &[Example::new("t1", "a line", "forward(1)")], &DemoBank::new(), &bank).unwrap();
        assert_eq!(ix.count(EntryKind::Helper), 1);
        assert_eq!(ix.count(EntryKind::TrainExample), 1);
        assert_eq!(ix.count(EntryKind::Demo), 0);
    }
}
