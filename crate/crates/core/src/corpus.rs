//! Pre-tokenized, pre-tagged multilingual corpus.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": "en-1", "language": "en", "tokens": [["Great", "ADJ"], ["book", "NOUN"]],
//!  "label": 1, "split": "train", "translation_of": "de-7"}
//! ```
//!
//! `label` and `translation_of` may be absent; unknown fields are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 17 core Universal Dependencies part-of-speech tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UdTag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl UdTag {
    pub const ALL: [UdTag; 17] = [
        UdTag::Adj,
        UdTag::Adp,
        UdTag::Adv,
        UdTag::Aux,
        UdTag::Cconj,
        UdTag::Det,
        UdTag::Intj,
        UdTag::Noun,
        UdTag::Num,
        UdTag::Part,
        UdTag::Pron,
        UdTag::Propn,
        UdTag::Punct,
        UdTag::Sconj,
        UdTag::Sym,
        UdTag::Verb,
        UdTag::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UdTag::Adj => "ADJ",
            UdTag::Adp => "ADP",
            UdTag::Adv => "ADV",
            UdTag::Aux => "AUX",
            UdTag::Cconj => "CCONJ",
            UdTag::Det => "DET",
            UdTag::Intj => "INTJ",
            UdTag::Noun => "NOUN",
            UdTag::Num => "NUM",
            UdTag::Part => "PART",
            UdTag::Pron => "PRON",
            UdTag::Propn => "PROPN",
            UdTag::Punct => "PUNCT",
            UdTag::Sconj => "SCONJ",
            UdTag::Sym => "SYM",
            UdTag::Verb => "VERB",
            UdTag::X => "X",
        }
    }

    /// Exact (case-sensitive) match against the tag names.
    pub fn parse(tag: &str) -> Option<UdTag> {
        UdTag::ALL.iter().copied().find(|t| t.as_str() == tag)
    }

    /// Maps any tagger output into the tagset; unknown tags become `X`.
    pub fn map_lossy(tag: &str) -> (UdTag, bool) {
        match UdTag::parse(tag) {
            Some(t) => (t, true),
            None => (UdTag::X, false),
        }
    }
}

impl fmt::Display for UdTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Lowercased surface, used for vocabulary.
    pub norm: String,
    pub pos: UdTag,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: UdTag) -> Self {
        let surface = surface.into();
        let norm = surface.to_lowercase();
        Token { surface, norm, pos }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
    Unlabeled,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Unlabeled => "unlabeled",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "unlabeled" => Ok(Split::Unlabeled),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub language: String,
    pub tokens: Vec<Token>,
    pub label: Option<usize>,
    pub split: Split,
    pub translation_of: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Record {
    id: String,
    language: String,
    tokens: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
    split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translation_of: Option<String>,
}

/// A validated, immutable corpus. Document order is file order.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
    languages: BTreeSet<String>,
    num_classes: usize,
    unknown_tags: BTreeMap<String, usize>,
}

impl CorpusStore {
    /// Validates documents built in memory.
    pub fn from_documents(docs: Vec<Document>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Corpus("num_classes must be positive".into()));
        }
        let mut index = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            validate_document(doc, num_classes)?;
            if index.insert(doc.id.clone(), i).is_some() {
                return Err(Error::Corpus(format!("duplicate document id {:?}", doc.id)));
            }
        }
        for doc in &docs {
            if let Some(src) = &doc.translation_of {
                let Some(&j) = index.get(src) else {
                    return Err(Error::Corpus(format!(
                        "document {:?}: translation_of {:?} does not exist",
                        doc.id, src
                    )));
                };
                if docs[j].language == doc.language {
                    return Err(Error::Corpus(format!(
                        "document {:?}: translation_of {:?} has the same language {:?}",
                        doc.id, src, doc.language
                    )));
                }
            }
        }
        let languages = docs.iter().map(|d| d.language.clone()).collect();
        Ok(CorpusStore {
            docs,
            index,
            languages,
            num_classes,
            unknown_tags: BTreeMap::new(),
        })
    }

    /// Parses JSON Lines text. `origin` only names the source in diagnostics.
    pub fn parse(text: &str, num_classes: usize, origin: &Path) -> Result<Self> {
        let mut docs = Vec::new();
        let mut unknown_tags: BTreeMap<String, usize> = BTreeMap::new();
        let mut lines_of = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno,
                msg,
            };
            let rec: Record = serde_json::from_str(line)
                .map_err(|e| parse_err(format!("malformed record: {e}")))?;
            let split: Split = rec
                .split
                .parse()
                .map_err(|e| parse_err(format!("document {:?}: {e}", rec.id)))?;
            let label = match rec.label {
                None => None,
                Some(l) if l >= 0 && (l as u64) < num_classes as u64 => Some(l as usize),
                Some(l) => {
                    return Err(parse_err(format!(
                        "document {:?}: label {l} outside [0, {num_classes})",
                        rec.id
                    )))
                }
            };
            let mut tokens = Vec::with_capacity(rec.tokens.len());
            for (surface, tag) in rec.tokens {
                let (pos, known) = UdTag::map_lossy(&tag);
                if !known {
                    *unknown_tags.entry(tag).or_default() += 1;
                }
                tokens.push(Token::new(surface, pos));
            }
            let doc = Document {
                id: rec.id,
                language: rec.language,
                tokens,
                label,
                split,
                translation_of: rec.translation_of,
            };
            validate_document(&doc, num_classes).map_err(|e| parse_err(strip_prefix(e)))?;
            if let Some(first) = lines_of.insert(doc.id.clone(), lineno) {
                return Err(parse_err(format!(
                    "duplicate document id {:?} (first seen on line {first})",
                    doc.id
                )));
            }
            docs.push(doc);
        }
        for (tag, count) in &unknown_tags {
            log::warn!("unknown POS tag {tag:?} mapped to X ({count} tokens)");
        }
        let mut store = CorpusStore::from_documents(docs, num_classes)?;
        store.unknown_tags = unknown_tags;
        Ok(store)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn languages(&self) -> &BTreeSet<String> {
        &self.languages
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Per raw tag, how many tokens were remapped to `X` at load time.
    pub fn unknown_tags(&self) -> &BTreeMap<String, usize> {
        &self.unknown_tags
    }

    /// Serializes back to JSON Lines (tags in their mapped form).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in &self.docs {
            out.push_str(&document_to_json(doc));
            out.push('\n');
        }
        out
    }
}

/// One JSON Lines record for `doc`.
pub fn document_to_json(doc: &Document) -> String {
    let rec = Record {
        id: doc.id.clone(),
        language: doc.language.clone(),
        tokens: doc
            .tokens
            .iter()
            .map(|t| (t.surface.clone(), t.pos.as_str().to_string()))
            .collect(),
        label: doc.label.map(|l| l as i64),
        split: doc.split.as_str().to_string(),
        translation_of: doc.translation_of.clone(),
    };
    serde_json::to_string(&rec).expect("corpus records always serialize")
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Corpus(msg) => msg,
        other => other.to_string(),
    }
}

fn validate_document(doc: &Document, num_classes: usize) -> Result<()> {
    let bad = |msg: String| Err(Error::Corpus(format!("document {:?}: {msg}", doc.id)));
    if doc.id.is_empty() {
        return bad("empty id".into());
    }
    if doc.language.is_empty() {
        return bad("empty language".into());
    }
    if doc.tokens.is_empty() {
        return bad("no tokens".into());
    }
    if let Some(t) = doc
        .tokens
        .iter()
        .find(|t| t.surface.is_empty() || t.surface.chars().any(char::is_whitespace))
    {
        return bad(format!("invalid token surface {:?}", t.surface));
    }
    match (doc.split, doc.label) {
        (Split::Train, None) => return bad("train document without label".into()),
        (Split::Unlabeled, Some(_)) => return bad("unlabeled document carries a label".into()),
        (_, Some(l)) if l >= num_classes => {
            return bad(format!("label {l} outside [0, {num_classes})"))
        }
        _ => {}
    }
    if doc.translation_of.as_deref() == Some(doc.id.as_str()) {
        return bad("translation_of references itself".into());
    }
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>, num_classes: usize) -> Result<CorpusStore> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading corpus {}", path.display()), e))?;
    CorpusStore::parse(&text, num_classes, path)
}

/// Unordered translation pairs, each as (earlier, later) in corpus order,
/// deduplicated and sorted.
pub fn link_translations(store: &CorpusStore) -> Vec<(String, String)> {
    translation_pairs(store)
        .into_iter()
        .map(|(a, b)| (store.docs[a].id.clone(), store.docs[b].id.clone()))
        .collect()
}

/// Same as [`link_translations`] but by corpus position.
pub fn translation_pairs(store: &CorpusStore) -> Vec<(usize, usize)> {
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (i, doc) in store.docs.iter().enumerate() {
        if let Some(src) = &doc.translation_of {
            let j = store.index[src];
            let pair = (i.min(j), i.max(j));
            if seen.insert(pair) {
                pairs.push(pair);
            }
        }
    }
    pairs.sort_unstable();
    pairs
}
