//! Run configuration as flat `section.key=value` text.
//!
//! Lines starting with `#` and blank lines are ignored. Later assignments
//! win, so command-line overrides are simply applied after the file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{apply_variant, GraphConfig, GraphToggles};
use crate::optim::AdamWHyper;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_classes: usize,
    /// Seed for graph-level randomness (hashed fallback features).
    pub run_seed: u64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub train_on_translations: bool,
    pub optim: AdamWHyper,
    pub d_hidden: usize,
    pub d_out: usize,
    pub leaky_slope: f64,
    pub k: usize,
    pub min_df: usize,
    pub self_loop_weight: f64,
    pub toggles: GraphToggles,
    pub hash_dim: usize,
    pub forbid_embedding_fallback: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_classes: 2,
            run_seed: 0,
            max_epochs: 15,
            batch_size: 256,
            seeds: vec![0, 1, 2],
            train_on_translations: false,
            optim: AdamWHyper::default(),
            d_hidden: 512,
            d_out: 768,
            leaky_slope: 0.01,
            k: 3,
            min_df: 2,
            self_loop_weight: 1.0,
            toggles: GraphToggles::full(),
            hash_dim: 64,
            forbid_embedding_fallback: false,
        }
    }
}

/// Shortest of plain and scientific notation that still round-trips.
pub fn fmt_f64(x: f64) -> String {
    let plain = format!("{x:?}");
    let sci = format!("{x:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

impl TrainConfig {
    pub fn graph(&self) -> GraphConfig {
        GraphConfig {
            toggles: self.toggles,
            k: self.k,
            min_df: self.min_df,
            self_loop_weight: self.self_loop_weight,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "data.num_classes" => self.num_classes = parse_num(key, value)?,
            "run.seed" => self.run_seed = parse_num(key, value)?,
            "train.max_epochs" => self.max_epochs = parse_num(key, value)?,
            "train.batch_size" => self.batch_size = parse_num(key, value)?,
            "train.seeds" => {
                self.seeds = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "train.train_on_translations" => self.train_on_translations = parse_bool(key, value)?,
            "optim.lr" => self.optim.lr = parse_num(key, value)?,
            "optim.beta1" => self.optim.beta1 = parse_num(key, value)?,
            "optim.beta2" => self.optim.beta2 = parse_num(key, value)?,
            "optim.eps" => self.optim.eps = parse_num(key, value)?,
            "optim.weight_decay" => self.optim.weight_decay = parse_num(key, value)?,
            "model.d_hidden" => self.d_hidden = parse_num(key, value)?,
            "model.d_out" => self.d_out = parse_num(key, value)?,
            "model.leaky_slope" => self.leaky_slope = parse_num(key, value)?,
            "graph.k" => self.k = parse_num(key, value)?,
            "graph.min_df" => self.min_df = parse_num(key, value)?,
            "graph.self_loop_weight" => self.self_loop_weight = parse_num(key, value)?,
            "graph.variant" => self.toggles = apply_variant(parse_num(key, value)?)?,
            "graph.word_doc" => self.toggles.word_doc = parse_bool(key, value)?,
            "graph.pos_tags" => self.toggles.pos_tags = parse_bool(key, value)?,
            "graph.translation_edges" => self.toggles.translation_edges = parse_bool(key, value)?,
            "graph.similarity_edges" => self.toggles.similarity_edges = parse_bool(key, value)?,
            "graph.unlabeled_docs" => self.toggles.unlabeled_docs = parse_bool(key, value)?,
            "features.hash_dim" => self.hash_dim = parse_num(key, value)?,
            "features.forbid_fallback" => self.forbid_embedding_fallback = parse_bool(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn assign(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(key, value)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.assign(line)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Defaults, then the file (if any), then the overrides in order.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
            cfg.apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for o in overrides {
            cfg.assign(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.toggles.validate()?;
        self.optim.validate()?;
        let positive = [
            ("data.num_classes", self.num_classes),
            ("train.max_epochs", self.max_epochs),
            ("train.batch_size", self.batch_size),
            ("model.d_hidden", self.d_hidden),
            ("model.d_out", self.d_out),
            ("graph.k", self.k),
            ("graph.min_df", self.min_df),
            ("features.hash_dim", self.hash_dim),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{key} must be positive")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config(
                "train.seeds must list at least one seed".into(),
            ));
        }
        if !(self.self_loop_weight > 0.0 && self.self_loop_weight.is_finite()) {
            return Err(Error::Config(
                "graph.self_loop_weight must be positive".into(),
            ));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Config(
                "model.leaky_slope must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        let t = &self.toggles;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("data.num_classes", self.num_classes.to_string());
        kv("run.seed", self.run_seed.to_string());
        kv("train.max_epochs", self.max_epochs.to_string());
        kv("train.batch_size", self.batch_size.to_string());
        kv("train.seeds", seeds.join(","));
        kv(
            "train.train_on_translations",
            self.train_on_translations.to_string(),
        );
        kv("optim.lr", fmt_f64(self.optim.lr));
        kv("optim.beta1", fmt_f64(self.optim.beta1));
        kv("optim.beta2", fmt_f64(self.optim.beta2));
        kv("optim.eps", fmt_f64(self.optim.eps));
        kv("optim.weight_decay", fmt_f64(self.optim.weight_decay));
        kv("model.d_hidden", self.d_hidden.to_string());
        kv("model.d_out", self.d_out.to_string());
        kv("model.leaky_slope", fmt_f64(self.leaky_slope));
        kv("graph.k", self.k.to_string());
        kv("graph.min_df", self.min_df.to_string());
        kv("graph.self_loop_weight", fmt_f64(self.self_loop_weight));
        kv("graph.word_doc", t.word_doc.to_string());
        kv("graph.pos_tags", t.pos_tags.to_string());
        kv("graph.translation_edges", t.translation_edges.to_string());
        kv("graph.similarity_edges", t.similarity_edges.to_string());
        kv("graph.unlabeled_docs", t.unlabeled_docs.to_string());
        kv("features.hash_dim", self.hash_dim.to_string());
        kv(
            "features.forbid_fallback",
            self.forbid_embedding_fallback.to_string(),
        );
        out
    }
}
