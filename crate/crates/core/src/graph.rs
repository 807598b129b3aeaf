//! Heterogeneous document-word graph construction.
//!
//! Node order: documents first (corpus order), then word nodes in order of
//! first occurrence. Word nodes are scoped by language. Edges:
//!
//! * doc-word TF-IDF edges, one type per POS tag (or a single untyped type),
//! * doc-doc cosine-kNN similarity edges,
//! * doc-doc translation edges,
//! * one self-loop per node under [`EdgeType::SelfLoop`].

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::corpus::{translation_pairs, CorpusStore, Split, UdTag};
use crate::dense::Matrix;
use crate::embed::{knn_pairs, FeatureSource};
use crate::error::{Error, Result};
use crate::sparse::{dump_slices, sym_normalize_and_slice, CooEntry, CsrMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKey {
    Doc(String),
    Word { language: String, surface: String },
}

impl NodeKey {
    pub fn kind(&self) -> &'static str {
        match self {
            NodeKey::Doc(_) => "doc",
            NodeKey::Word { .. } => "word",
        }
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKey::Doc(id) => write!(f, "doc:{id}"),
            NodeKey::Word { language, surface } => write!(f, "word:{language}:{surface}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    WordDoc(UdTag),
    WordDocUntyped,
    Similarity,
    Translation,
    SelfLoop,
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeType::WordDoc(tag) => write!(f, "WORDDOC:{tag}"),
            EdgeType::WordDocUntyped => f.write_str("WORDDOC_UNTYPED"),
            EdgeType::Similarity => f.write_str("SIMILARITY"),
            EdgeType::Translation => f.write_str("TRANSLATION"),
            EdgeType::SelfLoop => f.write_str("SELF"),
        }
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "WORDDOC_UNTYPED" => EdgeType::WordDocUntyped,
            "SIMILARITY" => EdgeType::Similarity,
            "TRANSLATION" => EdgeType::Translation,
            "SELF" => EdgeType::SelfLoop,
            other => {
                let tag = other
                    .strip_prefix("WORDDOC:")
                    .and_then(UdTag::parse)
                    .ok_or_else(|| Error::Graph(format!("unknown edge type {other:?}")))?;
                EdgeType::WordDoc(tag)
            }
        })
    }
}

/// Which edge families and document groups enter the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphToggles {
    pub word_doc: bool,
    pub pos_tags: bool,
    pub translation_edges: bool,
    pub similarity_edges: bool,
    pub unlabeled_docs: bool,
}

impl Default for GraphToggles {
    fn default() -> Self {
        GraphToggles::full()
    }
}

impl GraphToggles {
    pub fn full() -> Self {
        GraphToggles {
            word_doc: true,
            pos_tags: true,
            translation_edges: true,
            similarity_edges: true,
            unlabeled_docs: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pos_tags && !self.word_doc {
            return Err(Error::Config(
                "pos_tags requires word_doc: POS typing applies to doc-word edges".into(),
            ));
        }
        Ok(())
    }

    /// Whether `doc` is a node of the graph under these toggles.
    pub fn admits(&self, split: Split, is_translation: bool) -> bool {
        (self.unlabeled_docs || split != Split::Unlabeled)
            && (self.translation_edges || !is_translation)
    }
}

impl fmt::Display for GraphToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "word_doc={} pos_tags={} translation_edges={} similarity_edges={} unlabeled_docs={}",
            self.word_doc,
            self.pos_tags,
            self.translation_edges,
            self.similarity_edges,
            self.unlabeled_docs
        )
    }
}

/// Graph variants of the ablation study; 8 is the full model.
pub fn apply_variant(variant: u8) -> Result<GraphToggles> {
    let (word_doc, pos_tags, translation_edges, similarity_edges, unlabeled_docs) = match variant {
        1 => (true, false, false, false, false),
        2 => (false, false, true, true, true),
        3 => (true, false, false, true, true),
        4 => (true, false, true, true, true),
        5 => (true, true, false, true, true),
        6 => (true, true, true, false, true),
        7 => (true, true, true, true, false),
        8 => (true, true, true, true, true),
        other => {
            return Err(Error::Config(format!(
                "variant must be in 1..=8, got {other}"
            )));
        }
    };
    Ok(GraphToggles {
        word_doc,
        pos_tags,
        translation_edges,
        similarity_edges,
        unlabeled_docs,
    })
}

/// Corpus positions of the documents that become graph nodes, in corpus order.
pub fn graph_docs(store: &CorpusStore, toggles: &GraphToggles) -> Vec<usize> {
    store
        .docs()
        .iter()
        .enumerate()
        .filter(|(_, d)| toggles.admits(d.split, d.translation_of.is_some()))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone)]
pub struct Vocab {
    /// Corpus positions of the graph's documents; graph doc row `r` is `docs[r]`.
    pub docs: Vec<usize>,
    /// `(language, lowercased surface)` in first-occurrence order.
    pub words: Vec<(String, String)>,
    /// Document frequency of each word over `docs`.
    pub df: Vec<usize>,
    index: HashMap<(String, String), usize>,
}

impl Vocab {
    pub fn lookup(&self, language: &str, surface: &str) -> Option<usize> {
        self.index
            .get(&(language.to_string(), surface.to_string()))
            .copied()
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }
}

/// Word nodes with document frequency `>= min_df` over the graph's documents.
/// Empty when doc-word edges are off.
pub fn build_vocab(store: &CorpusStore, toggles: &GraphToggles, min_df: usize) -> Result<Vocab> {
    if min_df == 0 {
        return Err(Error::Config("min_df must be >= 1".into()));
    }
    let docs = graph_docs(store, toggles);
    let mut order: Vec<(String, String)> = Vec::new();
    let mut counts: HashMap<(String, String), (usize, usize)> = HashMap::new();
    if toggles.word_doc {
        for (r, &p) in docs.iter().enumerate() {
            let doc = &store.docs()[p];
            for tok in &doc.tokens {
                let key = (doc.language.clone(), tok.norm.clone());
                match counts.get_mut(&key) {
                    Some((df, last)) => {
                        if *last != r {
                            *df += 1;
                            *last = r;
                        }
                    }
                    None => {
                        order.push(key.clone());
                        counts.insert(key, (1, r));
                    }
                }
            }
        }
    }
    let mut words = Vec::new();
    let mut df = Vec::new();
    let mut index = HashMap::new();
    for key in order {
        let n = counts[&key].0;
        if n >= min_df {
            index.insert(key.clone(), words.len());
            words.push(key);
            df.push(n);
        }
    }
    Ok(Vocab {
        docs,
        words,
        df,
        index,
    })
}

/// One doc-word incidence with its TF-IDF weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    pub word: usize,
    /// Graph doc row.
    pub doc: usize,
    /// `None` when tags are collapsed.
    pub pos: Option<UdTag>,
    pub tf: usize,
    pub weight: f64,
}

/// `tf · ln(N / df)` per (word, doc) or per (word, doc, tag) when
/// `by_pos` is set. Non-positive weights are dropped.
pub fn tfidf(store: &CorpusStore, vocab: &Vocab, by_pos: bool) -> Vec<Incidence> {
    let n = vocab.n_docs() as f64;
    let mut out = Vec::new();
    for (r, &p) in vocab.docs.iter().enumerate() {
        let doc = &store.docs()[p];
        let mut tf: BTreeMap<(usize, Option<UdTag>), usize> = BTreeMap::new();
        for tok in &doc.tokens {
            if let Some(w) = vocab.lookup(&doc.language, &tok.norm) {
                let pos = by_pos.then_some(tok.pos);
                *tf.entry((w, pos)).or_default() += 1;
            }
        }
        for ((w, pos), count) in tf {
            let weight = count as f64 * (n / vocab.df[w] as f64).ln();
            if weight > 0.0 {
                out.push(Incidence {
                    word: w,
                    doc: r,
                    pos,
                    tf: count,
                    weight,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub toggles: GraphToggles,
    pub k: usize,
    pub min_df: usize,
    pub self_loop_weight: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            toggles: GraphToggles::full(),
            k: 3,
            min_df: 2,
            self_loop_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeteroGraph {
    pub nodes: Vec<NodeKey>,
    pub doc_count: usize,
    pub word_count: usize,
    /// Corpus position of each doc row.
    pub doc_positions: Vec<usize>,
    pub adjacency: BTreeMap<EdgeType, CsrMatrix>,
    pub config: GraphConfig,
}

impl HeteroGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_types(&self) -> Vec<EdgeType> {
        self.adjacency.keys().copied().collect()
    }

    /// Graph doc row of the document with corpus position `p`, if present.
    pub fn doc_row(&self, p: usize) -> Option<usize> {
        self.doc_positions.binary_search(&p).ok()
    }

    /// Stored entries per edge type.
    pub fn edge_counts(&self) -> BTreeMap<EdgeType, usize> {
        self.adjacency.iter().map(|(t, m)| (*t, m.nnz())).collect()
    }

    /// Node table, config echo and normalized slices as deterministic text.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        writeln!(
            out,
            "# config {} k={} min_df={} self_loop_weight={:?}",
            c.toggles, c.k, c.min_df, c.self_loop_weight
        )
        .unwrap();
        for (i, node) in self.nodes.iter().enumerate() {
            writeln!(out, "node {i} {} {node}", node.kind()).unwrap();
        }
        out.push_str(&dump_slices(self.n(), &self.adjacency));
        out
    }

    /// Human-readable node and edge counts.
    pub fn stats(&self) -> String {
        let mut out = String::new();
        writeln!(out, "nodes\t{}", self.n()).unwrap();
        writeln!(out, "doc_nodes\t{}", self.doc_count).unwrap();
        writeln!(out, "word_nodes\t{}", self.word_count).unwrap();
        for (t, count) in self.edge_counts() {
            writeln!(out, "edges\t{t}\t{count}").unwrap();
        }
        out
    }

    /// Feature matrix with one row per node, in node order.
    pub fn node_features(&self, features: &FeatureSource) -> Result<Matrix> {
        let d = features.dim();
        let mut h = Matrix::zeros(self.n(), d);
        for (i, node) in self.nodes.iter().enumerate() {
            let v = features.vector(&node.to_string())?;
            if v.len() != d {
                return Err(Error::Embedding(format!(
                    "{node}: dimension {} does not match {d}",
                    v.len()
                )));
            }
            h.row_mut(i).copy_from_slice(&v);
        }
        Ok(h)
    }
}

/// Raw (pre-normalization) edges of the graph, both directions.
pub struct RawGraph {
    pub vocab: Vocab,
    pub nodes: Vec<NodeKey>,
    pub edges: Vec<CooEntry<EdgeType>>,
}

/// Node inventory and raw typed edges before normalization.
pub fn assemble_edges(
    store: &CorpusStore,
    features: &FeatureSource,
    config: &GraphConfig,
) -> Result<RawGraph> {
    let toggles = &config.toggles;
    toggles.validate()?;
    if config.k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    let vocab = build_vocab(store, toggles, config.min_df)?;
    let doc_count = vocab.n_docs();

    let mut nodes: Vec<NodeKey> = vocab
        .docs
        .iter()
        .map(|&p| NodeKey::Doc(store.docs()[p].id.clone()))
        .collect();
    nodes.extend(vocab.words.iter().map(|(language, surface)| NodeKey::Word {
        language: language.clone(),
        surface: surface.clone(),
    }));

    let mut edges = Vec::new();
    let mut both = |a: usize, b: usize, weight: f64, etype: EdgeType| {
        edges.push(CooEntry {
            row: a,
            col: b,
            weight,
            etype,
        });
        edges.push(CooEntry {
            row: b,
            col: a,
            weight,
            etype,
        });
    };

    if toggles.word_doc {
        for inc in tfidf(store, &vocab, toggles.pos_tags) {
            let etype = inc.pos.map_or(EdgeType::WordDocUntyped, EdgeType::WordDoc);
            both(inc.doc, doc_count + inc.word, inc.weight, etype);
        }
    }

    if toggles.similarity_edges {
        let vectors = nodes[..doc_count]
            .iter()
            .map(|key| features.vector(&key.to_string()))
            .collect::<Result<Vec<Cow<'_, [f64]>>>>()?;
        for (a, b) in knn_pairs(&vectors, config.k)? {
            both(a, b, 1.0, EdgeType::Similarity);
        }
    }

    if toggles.translation_edges {
        let row_of: HashMap<usize, usize> = vocab
            .docs
            .iter()
            .enumerate()
            .map(|(r, &p)| (p, r))
            .collect();
        for (p, q) in translation_pairs(store) {
            if let (Some(&a), Some(&b)) = (row_of.get(&p), row_of.get(&q)) {
                both(a, b, 1.0, EdgeType::Translation);
            }
        }
    }

    Ok(RawGraph {
        vocab,
        nodes,
        edges,
    })
}

pub fn build_graph(
    store: &CorpusStore,
    features: &FeatureSource,
    config: &GraphConfig,
) -> Result<HeteroGraph> {
    let raw = assemble_edges(store, features, config)?;
    let n = raw.nodes.len();
    let adjacency =
        sym_normalize_and_slice(&raw.edges, n, config.self_loop_weight, EdgeType::SelfLoop)?;
    Ok(HeteroGraph {
        doc_count: raw.vocab.n_docs(),
        word_count: raw.vocab.words.len(),
        doc_positions: raw.vocab.docs,
        nodes: raw.nodes,
        adjacency,
        config: *config,
    })
}
