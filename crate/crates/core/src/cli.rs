//! Command-line front end. Every subcommand that writes an output directory
//! also writes `provenance.json`: the resolved config and the SHA-256 of
//! every input file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::corpus::{load_corpus, Split};
use crate::embed::load_embeddings;
use crate::error::{Error, Result};
use crate::graph::{apply_variant, build_graph, EdgeType};
use crate::model::Checkpoint;
use crate::synth::{generate, SynthParams};
use crate::train::{evaluate, feature_source, run_experiment, Dataset, Experiment, TrainReport};

#[derive(Debug, Parser)]
#[command(
    name = "hetgcn",
    version,
    about = "Heterogeneous GCN text classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the graph and write its dump and edge statistics.
    BuildGraph(GraphArgs),
    /// Train one model per seed and report test accuracy.
    Train(GraphArgs),
    /// Score a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Train every graph variant and tabulate the accuracies.
    Ablate(AblateArgs),
    /// Generate a synthetic bilingual corpus and embeddings.
    Synth(SynthArgs),
    /// Print the resolved configuration, defaults included.
    DumpConfig(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file with `section.key=value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override, e.g. `--set optim.lr=1e-3`. Applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub language: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Comma-separated variant numbers (1-8).
    #[arg(long, default_value = "1,2,3,4,5,6,7,8", value_delimiter = ',')]
    pub variants: Vec<u8>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "en,de", value_delimiter = ',')]
    pub languages: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 50)]
    pub vocab: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.5)]
    pub strength: f64,
    #[arg(long, default_value_t = 0.3)]
    pub translation_fraction: f64,
    #[arg(long, default_value_t = 100)]
    pub unlabeled: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthArgs {
    pub fn params(&self) -> SynthParams {
        SynthParams {
            languages: self.languages.clone(),
            docs_per_language: self.docs,
            vocab_per_language: self.vocab,
            classes: self.classes,
            keyword_strength: self.strength,
            translation_fraction: self.translation_fraction,
            unlabeled_per_language: self.unlabeled,
            embedding_dim: self.dim,
            seed: self.seed,
            ..SynthParams::default()
        }
    }
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    version: &'a str,
    config: Vec<String>,
    inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    parameters: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        }))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn write_provenance(
    out: &Path,
    command: &str,
    config: Option<&TrainConfig>,
    inputs: &[&Path],
    parameters: Vec<String>,
) -> Result<()> {
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(InputDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<_>>()?;
    let record = Provenance {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: config
            .map(|c| c.to_text().lines().map(str::to_string).collect())
            .unwrap_or_default(),
        inputs,
        parameters,
    };
    let text = serde_json::to_string_pretty(&record).expect("provenance serializes");
    write_file(&out.join("provenance.json"), &(text + "\n"))
}

fn inputs_of(args: &GraphArgs) -> Vec<&Path> {
    let mut v: Vec<&Path> = vec![&args.corpus];
    v.extend(args.embeddings.as_deref());
    v.extend(args.config.config.as_deref());
    v
}

fn resolve(args: &ConfigArgs) -> Result<TrainConfig> {
    TrainConfig::resolve(args.config.as_deref(), &args.overrides)
}

fn load_dataset(args: &GraphArgs, config: &TrainConfig) -> Result<Dataset> {
    let store = load_corpus(&args.corpus, config.num_classes)?;
    let table = args
        .embeddings
        .as_deref()
        .map(load_embeddings)
        .transpose()?;
    Dataset::build(store, &feature_source(table, config), config)
}

pub fn cmd_build_graph(args: &GraphArgs) -> Result<String> {
    let config = resolve(&args.config)?;
    let store = load_corpus(&args.corpus, config.num_classes)?;
    let table = args
        .embeddings
        .as_deref()
        .map(load_embeddings)
        .transpose()?;
    let graph = build_graph(&store, &feature_source(table, &config), &config.graph())?;
    create_dir(&args.out)?;
    write_file(&args.out.join("graph.txt"), &graph.dump())?;
    let stats = graph.stats();
    write_file(&args.out.join("stats.tsv"), &stats)?;
    write_provenance(
        &args.out,
        "build-graph",
        Some(&config),
        &inputs_of(args),
        vec![],
    )?;
    Ok(stats)
}

fn write_experiment(out: &Path, exp: &Experiment) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join("report.jsonl"), &exp.report.to_jsonl())?;
    write_file(&out.join("report.txt"), &exp.report.to_table())?;
    for run in &exp.runs {
        let ck = Checkpoint {
            params: run.params.clone(),
            optimizer: Some(run.optimizer.clone()),
            epoch: run.selected_epoch,
        };
        ck.save(out.join(format!("checkpoint-seed{}.txt", run.seed)))?;
    }
    Ok(())
}

pub fn cmd_train(args: &GraphArgs) -> Result<String> {
    let config = resolve(&args.config)?;
    let exp = run_experiment(&args.corpus, args.embeddings.as_deref(), &config)?;
    write_experiment(&args.out, &exp)?;
    write_provenance(&args.out, "train", Some(&config), &inputs_of(args), vec![])?;
    Ok(exp.report.to_table())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String> {
    let config = resolve(&args.graph.config)?;
    let split: Split = args.split.parse().map_err(Error::Config)?;
    let data = load_dataset(&args.graph, &config)?;
    let ck = Checkpoint::load(&args.checkpoint)?;
    let acc = evaluate(&ck.params, &data, split, args.language.as_deref())?;
    create_dir(&args.graph.out)?;
    let mut inputs = inputs_of(&args.graph);
    inputs.push(&args.checkpoint);
    let mut line = format!("split={split}");
    if let Some(l) = &args.language {
        write!(line, " language={l}").unwrap();
    }
    write!(line, " accuracy={acc:.6}").unwrap();
    write_file(&args.graph.out.join("evaluation.txt"), &format!("{line}\n"))?;
    write_provenance(&args.graph.out, "evaluate", Some(&config), &inputs, vec![])?;
    Ok(line)
}

type ToggleGetter = fn(&crate::graph::GraphToggles) -> bool;

/// Outcome of one ablation variant.
#[derive(Debug, Clone, Serialize)]
pub struct VariantResult {
    pub variant: u8,
    pub edge_types: Vec<String>,
    pub mean_test: Option<f64>,
    pub per_language: std::collections::BTreeMap<String, f64>,
    pub error: Option<String>,
}

pub struct Ablation {
    pub results: Vec<VariantResult>,
    pub reports: Vec<Option<TrainReport>>,
}

impl Ablation {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        write!(out, "{:<20}", "").unwrap();
        for r in &self.results {
            write!(
                out,
                "{:>9}",
                if r.variant == 8 {
                    "full".to_string()
                } else {
                    r.variant.to_string()
                }
            )
            .unwrap();
        }
        out.push('\n');
        let toggles: [(&str, ToggleGetter); 5] = [
            ("word-doc", |t| t.word_doc),
            ("POS tags", |t| t.pos_tags),
            ("translation edges", |t| t.translation_edges),
            ("similarity edges", |t| t.similarity_edges),
            ("unlabeled", |t| t.unlabeled_docs),
        ];
        for (name, get) in toggles {
            write!(out, "{name:<20}").unwrap();
            for r in &self.results {
                let on = apply_variant(r.variant).map(|t| get(&t)).unwrap_or(false);
                write!(out, "{:>9}", if on { "x" } else { "" }).unwrap();
            }
            out.push('\n');
        }
        let mut langs: Vec<&String> = self
            .results
            .iter()
            .flat_map(|r| r.per_language.keys())
            .collect();
        langs.sort();
        langs.dedup();
        let cell = |v: Option<f64>| v.map_or("failed".to_string(), |x| format!("{:.2}", 100.0 * x));
        for lang in langs {
            write!(out, "{:<20}", format!("test {lang}")).unwrap();
            for r in &self.results {
                write!(out, "{:>9}", cell(r.per_language.get(lang).copied())).unwrap();
            }
            out.push('\n');
        }
        write!(out, "{:<20}", "test avg").unwrap();
        for r in &self.results {
            write!(out, "{:>9}", cell(r.mean_test)).unwrap();
        }
        out.push('\n');
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.results
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializes") + "\n")
            .collect()
    }
}

/// Runs each variant with the base config's other settings. A failing
/// variant is recorded and the sweep continues.
pub fn run_ablation(args: &AblateArgs, base: &TrainConfig) -> Result<Ablation> {
    let variants = args
        .variants
        .iter()
        .map(|&v| apply_variant(v).map(|t| (v, t)))
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::new();
    let mut reports = Vec::new();
    for (v, toggles) in variants {
        let config = TrainConfig {
            toggles,
            ..base.clone()
        };
        let dir = args.graph.out.join(format!("variant-{v}"));
        let outcome = run_experiment(
            &args.graph.corpus,
            args.graph.embeddings.as_deref(),
            &config,
        )
        .and_then(|exp| write_experiment(&dir, &exp).map(|_| exp));
        match outcome {
            Ok(exp) => {
                results.push(VariantResult {
                    variant: v,
                    edge_types: exp
                        .data
                        .graph
                        .edge_types()
                        .iter()
                        .map(EdgeType::to_string)
                        .collect(),
                    mean_test: Some(exp.report.mean_test),
                    per_language: exp.report.mean_per_language.clone(),
                    error: None,
                });
                reports.push(Some(exp.report));
            }
            Err(e) => {
                log::error!("variant {v} failed: {e}");
                results.push(VariantResult {
                    variant: v,
                    edge_types: vec![],
                    mean_test: None,
                    per_language: Default::default(),
                    error: Some(e.to_string()),
                });
                reports.push(None);
            }
        }
    }
    Ok(Ablation { results, reports })
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<String> {
    // Rejects invalid toggles (e.g. POS tags without doc-word edges) before any training.
    let base = resolve(&args.graph.config)?;
    create_dir(&args.graph.out)?;
    let ablation = run_ablation(args, &base)?;
    let table = ablation.to_table();
    write_file(&args.graph.out.join("ablation.txt"), &table)?;
    write_file(&args.graph.out.join("ablation.jsonl"), &ablation.to_jsonl())?;
    let variants = args
        .variants
        .iter()
        .map(|v| format!("variant={v}"))
        .collect();
    write_provenance(
        &args.graph.out,
        "ablate",
        Some(&base),
        &inputs_of(&args.graph),
        variants,
    )?;
    Ok(table)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String> {
    let params = args.params();
    let corpus = generate(&params)?;
    create_dir(&args.out)?;
    let corpus_path = args.out.join("corpus.jsonl");
    let emb_path = args.out.join("embeddings.jsonl");
    write_file(&corpus_path, &corpus.corpus_jsonl())?;
    write_file(&emb_path, &corpus.embeddings.to_jsonl())?;
    write_provenance(&args.out, "synth", None, &[], vec![format!("{params:?}")])?;
    Ok(format!(
        "wrote {} documents to {} and {} vectors to {}",
        corpus.documents.len(),
        corpus_path.display(),
        corpus.embeddings.len(),
        emb_path.display()
    ))
}

pub fn cmd_dump_config(args: &ConfigArgs) -> Result<String> {
    Ok(resolve(args)?.to_text())
}

/// Runs a parsed command and returns what it prints on success.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::BuildGraph(a) => cmd_build_graph(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::DumpConfig(a) => cmd_dump_config(a),
    }
}
