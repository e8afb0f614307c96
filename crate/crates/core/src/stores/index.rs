//! Exact cosine-similarity index.

use std::collections::{BTreeSet, HashMap};

use crate::error::{validation, Error, Result};

/// Cosine similarity, 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingIndex {
    dim: Option<usize>,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    pos: HashMap<String, usize>,
}

impl EmbeddingIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dim(dim: usize) -> Self {
        EmbeddingIndex { dim: Some(dim), ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.pos.get(id).map(|&i| self.vectors[i].as_slice())
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if let Some(d) = self.dim {
            if v.len() != d {
                return Err(validation(format!("vector length {} does not match index width {d}", v.len())));
            }
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(validation("embedding contains non-finite values"));
        }
        Ok(())
    }

    /// Add a new entry; duplicate ids are a conflict.
    pub fn insert(&mut self, id: &str, vector: Vec<f64>) -> Result<()> {
        if self.pos.contains_key(id) {
            return Err(Error::Conflict(format!("index already holds {id}")));
        }
        self.check(&vector)?;
        self.dim.get_or_insert(vector.len());
        self.pos.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.vectors.push(vector);
        Ok(())
    }

    /// Insert or replace.
    pub fn upsert(&mut self, id: &str, vector: Vec<f64>) -> Result<()> {
        match self.pos.get(id) {
            Some(&i) => {
                self.check(&vector)?;
                self.vectors[i] = vector;
                Ok(())
            }
            None => self.insert(id, vector),
        }
    }

    /// Top-k ids by cosine similarity, ties broken by ascending id.
    pub fn top_k(&self, query: &[f64], k: usize, exclude: &BTreeSet<String>) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(validation("k must be at least 1"));
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        self.check(query)?;
        let mut scored: Vec<(f64, &str)> = self
            .ids
            .iter()
            .zip(&self.vectors)
            .filter(|(id, _)| !exclude.contains(*id))
            .map(|(id, v)| (cosine(query, v), id.as_str()))
            .collect();
        let by_rank = |a: &(f64, &str), b: &(f64, &str)| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored.into_iter().map(|(s, id)| (id.to_string(), s)).collect())
    }
}
