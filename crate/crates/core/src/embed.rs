//! Fixed node features and cosine-kNN document similarity.
//!
//! Embedding files are JSON Lines, `{"key": "doc:en-1", "vector": [0.1, ...]}`,
//! keyed by the node-key scheme of [`crate::graph::NodeKey`].

use std::borrow::Cow;
use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fnv1a64, splitmix64};

#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    keys: Vec<String>,
    entries: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize, Serialize)]
struct Row {
    key: String,
    vector: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ..Default::default()
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let key = key.into();
        if vector.is_empty() {
            return Err(Error::Embedding(format!("{key:?}: empty vector")));
        }
        if self.entries.is_empty() && self.dim == 0 {
            self.dim = vector.len();
        }
        if vector.len() != self.dim {
            return Err(Error::Embedding(format!(
                "{key:?}: dimension {} does not match {}",
                vector.len(),
                self.dim
            )));
        }
        if let Some(i) = vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::Embedding(format!(
                "{key:?}: component {i} is not finite"
            )));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::Embedding(format!("duplicate key {key:?}")));
        }
        self.keys.push(key.clone());
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut table = EmbeddingTable::new(0);
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let at_line = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg,
            };
            // serde_json rejects NaN/Infinity literals, which covers non-finite input.
            let row: Row = serde_json::from_str(line)
                .map_err(|e| at_line(format!("malformed or non-finite row: {e}")))?;
            table
                .insert(row.key, row.vector)
                .map_err(|e| at_line(e.to_string()))?;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Keys in insertion order.
    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for key in &self.keys {
            let row = Row {
                key: key.clone(),
                vector: self.entries[key].clone(),
            };
            out.push_str(&serde_json::to_string(&row).expect("finite vectors serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading embeddings {}", path.display()), e))?;
    EmbeddingTable::parse(&text, path)
}

/// Deterministic pseudo-random features for `key`. Component `i` is drawn
/// from a counter-based generator keyed on a 64-bit hash of `(key, seed)`,
/// uniform in `[-1/√dim, 1/√dim)`.
pub fn hashed_features(key: &str, dim: usize, seed: u64) -> Vec<f64> {
    let base = splitmix64(fnv1a64(key.as_bytes()) ^ splitmix64(seed));
    let bound = 1.0 / (dim as f64).sqrt();
    (0..dim as u64)
        .map(|i| {
            let bits = splitmix64(base.wrapping_add(i.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            let unit = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            (2.0 * unit - 1.0) * bound
        })
        .collect()
}

/// File entries first, hashed fallback for missing keys unless forbidden.
#[derive(Debug, Clone)]
pub struct FeatureSource {
    table: EmbeddingTable,
    dim: usize,
    hash_seed: u64,
    allow_fallback: bool,
}

impl FeatureSource {
    /// `fallback_dim` is used only when the table is empty.
    pub fn new(
        table: EmbeddingTable,
        fallback_dim: usize,
        hash_seed: u64,
        allow_fallback: bool,
    ) -> Self {
        let dim = if table.is_empty() {
            fallback_dim
        } else {
            table.dim()
        };
        FeatureSource {
            table,
            dim,
            hash_seed,
            allow_fallback,
        }
    }

    /// Hashed features only.
    pub fn hashed(dim: usize, hash_seed: u64) -> Self {
        FeatureSource::new(EmbeddingTable::new(dim), dim, hash_seed, true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn vector(&self, key: &str) -> Result<Cow<'_, [f64]>> {
        if let Some(v) = self.table.get(key) {
            return Ok(Cow::Borrowed(v));
        }
        if !self.allow_fallback {
            return Err(Error::Embedding(format!(
                "no embedding for {key:?} and hashed fallback is disabled"
            )));
        }
        Ok(Cow::Owned(hashed_features(key, self.dim, self.hash_seed)))
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(cosine_with_norms(u, v, dot(u, u).sqrt(), dot(v, v).sqrt()))
}

fn cosine_with_norms(u: &[f64], v: &[f64], nu: f64, nv: f64) -> f64 {
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Exact brute-force kNN over `vectors`, symmetrized by union.
///
/// Returns unordered pairs `(i, j)` with `i < j`, sorted and deduplicated.
/// Ties are broken toward the neighbor with the lower index.
pub fn knn_pairs(vectors: &[Cow<'_, [f64]>], k: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(Error::Config("kNN needs K >= 1".into()));
    }
    let n = vectors.len();
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().position(|v| v.len() != first.len()) {
            return Err(Error::Shape(format!(
                "vector {bad} has dimension {}, expected {}",
                vectors[bad].len(),
                first.len()
            )));
        }
    }
    let norms: Vec<f64> = vectors.iter().map(|v| dot(v, v).sqrt()).collect();
    let directed: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cands: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (
                        cosine_with_norms(&vectors[i], &vectors[j], norms[i], norms[j]),
                        j,
                    )
                })
                .collect();
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            cands.truncate(k);
            cands.into_iter().map(|(_, j)| j).collect()
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = directed
        .iter()
        .enumerate()
        .flat_map(|(i, nbrs)| nbrs.iter().map(move |&j| (i.min(j), i.max(j))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

/// kNN similarity pairs over document keys looked up in `table`.
/// Pairs are positions into `doc_keys`.
pub fn knn_similar_docs(
    table: &EmbeddingTable,
    doc_keys: &[String],
    k: usize,
) -> Result<Vec<(usize, usize)>> {
    let vectors = doc_keys
        .iter()
        .map(|key| {
            table
                .get(key)
                .map(Cow::Borrowed)
                .ok_or_else(|| Error::Embedding(format!("no embedding for {key:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    knn_pairs(&vectors, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(0);
        for (k, v) in rows {
            t.insert(*k, v.to_vec()).unwrap();
        }
        t
    }

    fn keys(ks: &[&str]) -> Vec<String> {
        ks.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_rows() {
        let text = r#"{"key":"doc:a","vector":[1,2,3,4]}
{"key":"doc:b","vector":[0,0,0,1]}
{"key":"word:en:x","vector":[0.5,0.5,0.5,0.5]}
"#;
        let t = EmbeddingTable::parse(text, Path::new("e.jsonl")).unwrap();
        assert_eq!((t.dim(), t.len()), (4, 3));
    }

    #[test]
    fn parse_errors() {
        let dup = "{\"key\":\"a\",\"vector\":[1]}\n{\"key\":\"a\",\"vector\":[2]}\n";
        let err = EmbeddingTable::parse(dup, Path::new("e"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("duplicate key \"a\""), "{err}");

        let nonfinite = "{\"key\":\"a\",\"vector\":[1]}\n{\"key\":\"b\",\"vector\":[NaN]}\n";
        let err = EmbeddingTable::parse(nonfinite, Path::new("e"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("e:2:"), "{err}");

        let overflow = "{\"key\":\"b\",\"vector\":[1e999]}\n";
        assert!(EmbeddingTable::parse(overflow, Path::new("e")).is_err());

        let dims = "{\"key\":\"a\",\"vector\":[1,2]}\n{\"key\":\"b\",\"vector\":[1]}\n";
        let err = EmbeddingTable::parse(dims, Path::new("e"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("dimension"), "{err}");
    }

    #[test]
    fn hashed_features_are_deterministic_and_bounded() {
        assert_eq!(
            hashed_features("doc:a", 16, 3),
            hashed_features("doc:a", 16, 3)
        );
        let v = hashed_features("anything", 1, 9);
        assert_eq!(v.len(), 1);
        assert!((-1.0..=1.0).contains(&v[0]));
        let bound = 1.0 / 8.0;
        assert!(hashed_features("k", 64, 0).iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn hashed_features_depend_on_seed() {
        for i in 0..100 {
            let key = format!("word:en:w{i}");
            assert_ne!(hashed_features(&key, 8, 0), hashed_features(&key, 8, 1));
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn knn_two_docs() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(
            knn_similar_docs(&t, &keys(&["a", "b"]), 3).unwrap(),
            vec![(0, 1)]
        );
    }

    #[test]
    fn knn_identical_vectors_pick_earliest() {
        let t = table(&[("a", &[1.0]), ("b", &[1.0]), ("c", &[1.0]), ("d", &[1.0])]);
        let pairs = knn_similar_docs(&t, &keys(&["a", "b", "c", "d"]), 1).unwrap();
        // a→b, b→a, c→a, d→a
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn knn_missing_key_and_zero_k() {
        let t = table(&[("a", &[1.0])]);
        assert!(knn_similar_docs(&t, &keys(&["a", "zz"]), 1).is_err());
        assert!(knn_similar_docs(&t, &keys(&["a"]), 0).is_err());
        assert!(knn_similar_docs(&t, &keys(&["a"]), 1).unwrap().is_empty());
    }

    #[test]
    fn fallback_policy() {
        let t = table(&[("doc:a", &[1.0, 2.0])]);
        let src = FeatureSource::new(t.clone(), 7, 0, true);
        assert_eq!(src.dim(), 2);
        assert_eq!(&*src.vector("doc:a").unwrap(), &[1.0, 2.0]);
        assert_eq!(src.vector("doc:b").unwrap().len(), 2);
        let strict = FeatureSource::new(t, 7, 0, false);
        assert!(strict.vector("doc:b").is_err());
    }
}
