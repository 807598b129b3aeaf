//! Synthetic bilingual corpora with planted class keywords.
//!
//! Every language has the same vocabulary layout: the first
//! `classes × keywords_per_class` words are class keywords (word `i` of
//! class `c` in one language translates to word `i` of class `c` in any
//! other), the rest are noise. Keywords are tagged NOUN or ADJ, noise words
//! get a uniformly random tag.
//!
//! The first language is the labeled source (all `train`); the others are
//! targets split evenly into `valid` and `test`, plus an unlabeled pool.
//! Translations are added in both directions for a fraction of documents.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Split, Token, UdTag};
use crate::embed::{hashed_features, EmbeddingTable};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub languages: Vec<String>,
    pub docs_per_language: usize,
    pub vocab_per_language: usize,
    pub classes: usize,
    /// Length of the class offset added to document and keyword embeddings.
    pub keyword_strength: f64,
    pub translation_fraction: f64,
    pub unlabeled_per_language: usize,
    /// Probability that a token is one of its class's keywords.
    pub keyword_share: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            languages: vec!["en".into(), "de".into()],
            docs_per_language: 200,
            vocab_per_language: 50,
            classes: 2,
            keyword_strength: 0.5,
            translation_fraction: 0.3,
            unlabeled_per_language: 100,
            keyword_share: 0.3,
            min_len: 12,
            max_len: 24,
            embedding_dim: 32,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("synth: {msg}")));
        if self.languages.len() < 2 {
            return fail("need at least two languages");
        }
        let mut langs = self.languages.clone();
        langs.sort();
        langs.dedup();
        if langs.len() != self.languages.len()
            || langs.iter().any(|l| l.is_empty() || l.contains(':'))
        {
            return fail("languages must be distinct, non-empty and free of ':'");
        }
        if self.classes < 2 {
            return fail("need at least two classes");
        }
        if self.docs_per_language == 0 || self.embedding_dim == 0 {
            return fail("docs_per_language and embedding_dim must be positive");
        }
        if self.vocab_per_language < self.classes {
            return fail("vocabulary must hold at least one keyword per class");
        }
        if !(self.keyword_strength.is_finite() && self.keyword_strength >= 0.0) {
            return fail("keyword_strength must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.translation_fraction)
            || !(0.0..=1.0).contains(&self.keyword_share)
        {
            return fail("translation_fraction and keyword_share must lie in [0, 1]");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return fail("need 1 <= min_len <= max_len");
        }
        Ok(())
    }

    fn keywords_per_class(&self) -> usize {
        (self.vocab_per_language / (2 * self.classes)).max(1)
    }
}

/// Abstract token: word index within a language plus its tag.
type Draft = Vec<(usize, UdTag)>;

fn surface(lang: &str, word: usize) -> String {
    format!("{lang}_w{word:03}")
}

fn draft_doc(p: &SynthParams, class: usize, rng: &mut ChaCha8Rng) -> Draft {
    let kpc = p.keywords_per_class();
    let n_keywords = kpc * p.classes;
    let len = rng.gen_range(p.min_len..=p.max_len);
    (0..len)
        .map(|_| {
            if n_keywords >= p.vocab_per_language || rng.gen_bool(p.keyword_share) {
                let w = class * kpc + rng.gen_range(0..kpc);
                let tag = if rng.gen_bool(0.5) {
                    UdTag::Noun
                } else {
                    UdTag::Adj
                };
                (w, tag)
            } else {
                let w = rng.gen_range(n_keywords..p.vocab_per_language);
                (w, *UdTag::ALL.choose(rng).expect("tagset is non-empty"))
            }
        })
        .collect()
}

fn realize(draft: &Draft, lang: &str) -> Vec<Token> {
    draft
        .iter()
        .map(|&(w, t)| Token::new(surface(lang, w), t))
        .collect()
}

/// Unit vectors, one per class, from the synth stream.
fn class_directions(p: &SynthParams, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..p.classes)
        .map(|_| {
            let v: Vec<f64> = (0..p.embedding_dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let norm = v
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

pub struct SynthCorpus {
    pub documents: Vec<Document>,
    pub embeddings: EmbeddingTable,
}

pub fn generate(p: &SynthParams) -> Result<SynthCorpus> {
    p.validate()?;
    let mut rng = rng::stream(p.seed, rng::STREAM_SYNTH);
    let hash_seed = rng::stream_seed(p.seed, rng::STREAM_HASH);
    let directions = class_directions(p, &mut rng);
    let source = &p.languages[0];

    // (document, hidden class, draft)
    let mut docs: Vec<(Document, usize, Draft)> = Vec::new();
    let mut counter = 0usize;
    let mut next_id = |lang: &str| {
        counter += 1;
        format!("{lang}-{counter:05}")
    };

    let mut originals: Vec<usize> = Vec::new();
    for (li, lang) in p.languages.iter().enumerate() {
        for i in 0..p.docs_per_language {
            let class = rng.gen_range(0..p.classes);
            let draft = draft_doc(p, class, &mut rng);
            let split = match (li, i % 2) {
                (0, _) => Split::Train,
                (_, 0) => Split::Valid,
                _ => Split::Test,
            };
            let doc = Document {
                id: next_id(lang),
                language: lang.clone(),
                tokens: realize(&draft, lang),
                label: Some(class),
                split,
                translation_of: None,
            };
            originals.push(docs.len());
            docs.push((doc, class, draft));
        }
        if li > 0 {
            for _ in 0..p.unlabeled_per_language {
                let class = rng.gen_range(0..p.classes);
                let draft = draft_doc(p, class, &mut rng);
                let doc = Document {
                    id: next_id(lang),
                    language: lang.clone(),
                    tokens: realize(&draft, lang),
                    label: None,
                    split: Split::Unlabeled,
                    translation_of: None,
                };
                docs.push((doc, class, draft));
            }
        }
    }

    // Source documents translate into every target; target documents into the source.
    let mut translations = Vec::new();
    for lang in &p.languages {
        let pool: Vec<usize> = originals
            .iter()
            .copied()
            .filter(|&i| docs[i].0.language == *lang)
            .collect();
        let take = (p.translation_fraction * pool.len() as f64).round() as usize;
        let mut chosen: Vec<usize> = pool.choose_multiple(&mut rng, take).copied().collect();
        chosen.sort_unstable();
        let targets: Vec<&String> = if lang == source {
            p.languages[1..].iter().collect()
        } else {
            vec![source]
        };
        for i in chosen {
            for &to in &targets {
                let (orig, class, draft) = &docs[i];
                let label = if orig.split == Split::Train {
                    orig.label
                } else {
                    None
                };
                let doc = Document {
                    id: format!("{}-tr-{to}", orig.id),
                    language: to.clone(),
                    tokens: realize(draft, to),
                    label,
                    split: orig.split,
                    translation_of: Some(orig.id.clone()),
                };
                translations.push((doc, *class, draft.clone()));
            }
        }
    }
    docs.extend(translations);

    let offset = |class: usize, v: &mut Vec<f64>| {
        for (x, d) in v.iter_mut().zip(&directions[class]) {
            *x += p.keyword_strength * d;
        }
    };
    let mut embeddings = EmbeddingTable::new(p.embedding_dim);
    for (doc, class, _) in &docs {
        let key = format!("doc:{}", doc.id);
        let mut v = hashed_features(&key, p.embedding_dim, hash_seed);
        offset(*class, &mut v);
        embeddings.insert(key, v)?;
    }
    let kpc = p.keywords_per_class();
    for lang in &p.languages {
        for w in 0..p.vocab_per_language {
            let key = format!("word:{lang}:{}", surface(lang, w));
            let mut v = hashed_features(&key, p.embedding_dim, hash_seed);
            if w < kpc * p.classes {
                offset(w / kpc, &mut v);
            }
            embeddings.insert(key, v)?;
        }
    }

    Ok(SynthCorpus {
        documents: docs.into_iter().map(|(d, _, _)| d).collect(),
        embeddings,
    })
}

impl SynthCorpus {
    pub fn corpus_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&crate::corpus::document_to_json(d));
            out.push('\n');
        }
        out
    }
}
