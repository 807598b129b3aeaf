//! Training loop, model selection, evaluation and multi-seed experiments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::config::TrainConfig;
use crate::corpus::{load_corpus, CorpusStore, Split};
use crate::dense::Matrix;
use crate::embed::{load_embeddings, EmbeddingTable, FeatureSource};
use crate::error::{Error, Result};
use crate::graph::{build_graph, HeteroGraph};
use crate::model::{argmax_rows, backward, forward, init_params, softmax_xent, ModelParams};
use crate::optim::{adamw_step, AdamWState};
use crate::rng;

/// A built graph with its features and the corpus it came from.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub store: CorpusStore,
    pub graph: HeteroGraph,
    pub features: Matrix,
}

impl Dataset {
    pub fn build(
        store: CorpusStore,
        features: &FeatureSource,
        config: &TrainConfig,
    ) -> Result<Self> {
        let graph = build_graph(&store, features, &config.graph())?;
        let features = graph.node_features(features)?;
        Ok(Dataset {
            store,
            graph,
            features,
        })
    }

    /// `(doc row, label)` for labeled graph documents of `split`.
    ///
    /// Translated copies are left out unless `with_translations` is set.
    pub fn labeled_rows(
        &self,
        split: Split,
        with_translations: bool,
        language: Option<&str>,
    ) -> Vec<(usize, usize)> {
        self.graph
            .doc_positions
            .iter()
            .enumerate()
            .filter_map(|(row, &p)| {
                let doc = &self.store.docs()[p];
                let keep = doc.split == split
                    && (with_translations || doc.translation_of.is_none())
                    && language.is_none_or(|l| doc.language == l);
                match (keep, doc.label) {
                    (true, Some(label)) => Some((row, label)),
                    _ => None,
                }
            })
            .collect()
    }

    /// Languages of the labeled, untranslated documents of `split`.
    pub fn split_languages(&self, split: Split) -> Vec<String> {
        let mut langs: Vec<String> = self
            .labeled_rows(split, false, None)
            .iter()
            .map(|&(row, _)| {
                self.store.docs()[self.graph.doc_positions[row]]
                    .language
                    .clone()
            })
            .collect();
        langs.sort();
        langs.dedup();
        langs
    }
}

/// Fraction of `rows` whose argmax prediction matches the label.
pub fn accuracy(logits: &Matrix, rows: &[(usize, usize)]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Config("empty evaluation set".into()));
    }
    let pred = argmax_rows(logits);
    let hits = rows.iter().filter(|&&(r, label)| pred[r] == label).count();
    Ok(hits as f64 / rows.len() as f64)
}

/// Accuracy of `params` on one split, optionally restricted to a language.
pub fn evaluate(
    params: &ModelParams,
    data: &Dataset,
    split: Split,
    language: Option<&str>,
) -> Result<f64> {
    let rows = data.labeled_rows(split, false, language);
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "empty evaluation set: no labeled {split} documents{}",
            language
                .map(|l| format!(" in language {l:?}"))
                .unwrap_or_default()
        )));
    }
    let (logits, _) = forward(&data.graph, &data.features, params)?;
    accuracy(&logits, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub seed: u64,
    pub params: ModelParams,
    pub optimizer: AdamWState,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub best_valid: f64,
}

/// Shuffles `rows` in place and splits them into batches of at most `batch_size`.
pub fn epoch_batches<'a, T>(
    rows: &'a mut [T],
    batch_size: usize,
    rng: &mut impl rand::Rng,
) -> std::slice::Chunks<'a, T> {
    rows.shuffle(rng);
    rows.chunks(batch_size)
}

/// Trains one model. Each epoch shuffles the labeled training rows, takes one
/// AdamW step per batch (loss restricted to the batch, propagation over the
/// whole graph) and scores validation accuracy. Parameters of the earliest
/// best-validation epoch are returned.
pub fn train(data: &Dataset, config: &TrainConfig, seed: u64) -> Result<TrainRun> {
    config.validate()?;
    let mut train_rows = data.labeled_rows(Split::Train, false, None);
    if config.train_on_translations {
        train_rows = data.labeled_rows(Split::Train, true, None);
    }
    if train_rows.is_empty() {
        return Err(Error::Config(
            "no labeled training documents in the graph".into(),
        ));
    }
    let valid_rows = data.labeled_rows(Split::Valid, false, None);
    if valid_rows.is_empty() {
        return Err(Error::Config(
            "no labeled validation documents in the graph".into(),
        ));
    }

    let mut params = init_params(
        &data.graph,
        data.features.cols(),
        config.d_hidden,
        config.d_out,
        data.store.num_classes(),
        seed,
    )?;
    params.leaky_slope = config.leaky_slope;
    let mut state = AdamWState::default();
    let mut shuffle = rng::stream(seed, rng::STREAM_SHUFFLE);

    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(usize, f64, ModelParams, AdamWState)> = None;
    for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        for (b, batch) in
            epoch_batches(&mut train_rows, config.batch_size, &mut shuffle).enumerate()
        {
            let (logits, cache) = forward(&data.graph, &data.features, &params)?;
            let (loss, d_logits) = softmax_xent(&logits, batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            let grads = backward(&data.graph, &cache, &d_logits, &params)?;
            adamw_step(&mut params, &grads, &mut state, &config.optim).map_err(|e| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("epoch {epoch}, batch {}: {msg}", b + 1))
                }
                other => other,
            })?;
            loss_sum += loss * batch.len() as f64;
        }
        let (logits, _) = forward(&data.graph, &data.features, &params)?;
        let valid_accuracy = accuracy(&logits, &valid_rows)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_rows.len() as f64,
            valid_accuracy,
        });
        if best
            .as_ref()
            .is_none_or(|(_, acc, _, _)| valid_accuracy > *acc)
        {
            best = Some((epoch, valid_accuracy, params.clone(), state.clone()));
        }
    }
    let (selected_epoch, best_valid, params, optimizer) = best.expect("max_epochs >= 1");
    Ok(TrainRun {
        seed,
        params,
        optimizer,
        history,
        selected_epoch,
        best_valid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub selected_epoch: usize,
    pub best_valid: f64,
    pub test_accuracy: f64,
    pub per_language: BTreeMap<String, f64>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub runs: Vec<SeedResult>,
    pub mean_test: f64,
    pub mean_per_language: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct MeanRecord<'a> {
    record: &'static str,
    seeds: Vec<u64>,
    test_accuracy: f64,
    per_language: &'a BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct SeedRecord<'a> {
    record: &'static str,
    #[serde(flatten)]
    result: &'a SeedResult,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

impl TrainReport {
    pub fn from_runs(runs: Vec<SeedResult>) -> Self {
        let mean_test = mean(runs.iter().map(|r| r.test_accuracy));
        let mut langs: Vec<&String> = runs.iter().flat_map(|r| r.per_language.keys()).collect();
        langs.sort();
        langs.dedup();
        let mean_per_language = langs
            .into_iter()
            .map(|l| {
                let m = mean(runs.iter().filter_map(|r| r.per_language.get(l).copied()));
                (l.clone(), m)
            })
            .collect();
        TrainReport {
            runs,
            mean_test,
            mean_per_language,
        }
    }

    /// One record per seed, then one mean record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.runs {
            let rec = SeedRecord {
                record: "seed",
                result: r,
            };
            out.push_str(&serde_json::to_string(&rec).expect("report serializes"));
            out.push('\n');
        }
        let m = MeanRecord {
            record: "mean",
            seeds: self.runs.iter().map(|r| r.seed).collect(),
            test_accuracy: self.mean_test,
            per_language: &self.mean_per_language,
        };
        out.push_str(&serde_json::to_string(&m).expect("report serializes"));
        out.push('\n');
        out
    }

    pub fn to_table(&self) -> String {
        let langs: Vec<&String> = self.mean_per_language.keys().collect();
        let mut out = String::new();
        write!(out, "{:<8}{:>7}{:>10}", "seed", "epoch", "valid").unwrap();
        for l in &langs {
            write!(out, "{:>10}", format!("test:{l}")).unwrap();
        }
        writeln!(out, "{:>10}", "test").unwrap();
        for r in &self.runs {
            write!(
                out,
                "{:<8}{:>7}{:>10.4}",
                r.seed, r.selected_epoch, r.best_valid
            )
            .unwrap();
            for l in &langs {
                write!(
                    out,
                    "{:>10.4}",
                    r.per_language.get(*l).copied().unwrap_or(f64::NAN)
                )
                .unwrap();
            }
            writeln!(out, "{:>10.4}", r.test_accuracy).unwrap();
        }
        write!(out, "{:<8}{:>7}{:>10}", "mean", "", "").unwrap();
        for l in &langs {
            write!(out, "{:>10.4}", self.mean_per_language[*l]).unwrap();
        }
        writeln!(out, "{:>10.4}", self.mean_test).unwrap();
        out
    }
}

/// Test-set scores of a trained run.
pub fn score_run(data: &Dataset, run: &TrainRun) -> Result<SeedResult> {
    let test_accuracy = evaluate(&run.params, data, Split::Test, None)?;
    let mut per_language = BTreeMap::new();
    for lang in data.split_languages(Split::Test) {
        per_language.insert(
            lang.clone(),
            evaluate(&run.params, data, Split::Test, Some(&lang))?,
        );
    }
    Ok(SeedResult {
        seed: run.seed,
        selected_epoch: run.selected_epoch,
        best_valid: run.best_valid,
        test_accuracy,
        per_language,
        history: run.history.clone(),
    })
}

pub struct Experiment {
    pub data: Dataset,
    pub runs: Vec<TrainRun>,
    pub report: TrainReport,
}

/// Feature source for `config`: file entries with hashed fallback.
pub fn feature_source(table: Option<EmbeddingTable>, config: &TrainConfig) -> FeatureSource {
    FeatureSource::new(
        table.unwrap_or_default(),
        config.hash_dim,
        rng::stream_seed(config.run_seed, rng::STREAM_HASH),
        !config.forbid_embedding_fallback,
    )
}

/// Builds the graph once and trains one model per configured seed.
pub fn run_in_memory(
    store: CorpusStore,
    features: &FeatureSource,
    config: &TrainConfig,
) -> Result<Experiment> {
    config.validate()?;
    let data = Dataset::build(store, features, config)?;
    let mut runs = Vec::with_capacity(config.seeds.len());
    let mut results = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let run = train(&data, config, seed)?;
        results.push(score_run(&data, &run)?);
        runs.push(run);
    }
    Ok(Experiment {
        data,
        runs,
        report: TrainReport::from_runs(results),
    })
}

pub fn run_experiment(
    corpus: &Path,
    embeddings: Option<&Path>,
    config: &TrainConfig,
) -> Result<Experiment> {
    config.validate()?;
    let store = load_corpus(corpus, config.num_classes)?;
    let table = embeddings.map(load_embeddings).transpose()?;
    let features = feature_source(table, config);
    run_in_memory(store, &features, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts_hits() {
        let logits = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(accuracy(&logits, &[(0, 0), (1, 1)]).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[(2, 1)]).unwrap(), 0.0);
        assert!(accuracy(&logits, &[]).is_err());
    }

    #[test]
    fn report_means() {
        let r = |seed, acc: f64| SeedResult {
            seed,
            selected_epoch: 1,
            best_valid: 1.0,
            test_accuracy: acc,
            per_language: [("de".to_string(), acc)].into_iter().collect(),
            history: vec![],
        };
        let rep = TrainReport::from_runs(vec![r(0, 0.5), r(1, 0.75), r(2, 1.0)]);
        assert!((rep.mean_test - 0.75).abs() < 1e-12);
        assert_eq!(rep.to_jsonl().lines().count(), 4);
        let single = TrainReport::from_runs(vec![r(0, 0.625)]);
        assert_eq!(single.mean_test, 0.625);
    }
}
