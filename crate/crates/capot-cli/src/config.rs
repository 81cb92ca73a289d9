//! Flat key=value run configuration shared by every subcommand.
//!
//! One file can drive the whole pipeline; each command reads only the
//! keys it owns. Unknown keys are rejected up front so a typo cannot
//! silently fall back to a default. `--set key=value` overrides the
//! file; duplicates inside one source are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use capot_core::loss::LossWeights;
use capot_core::noise::{NoiseConfig, NoiseType};
use capot_core::train::{Regime, TrainConfig};

use crate::error::CliError;
use crate::io::sha256_hex;

pub const KNOWN_KEYS: &[&str] = &[
    "corpus.num_queries",
    "corpus.vocab_size",
    "corpus.seed",
    "noise.types",
    "noise.seed",
    "noise.max_stem_lemma_words",
    "noise.placement.start",
    "noise.placement.middle",
    "noise.placement.end",
    "train.regime",
    "train.batch_size",
    "train.learning_rate",
    "train.epochs",
    "train.negatives_per_positive",
    "train.seed",
    "train.dim",
    "train.num_buckets",
    "align.batch_size",
    "align.learning_rate",
    "align.epochs",
    "align.seed",
    "loss.tau_positive",
    "loss.tau_negative",
    "loss.tau_contrastive",
    "loss.tau_anchor",
    "loss.tau_ranking",
    "loss.eps_contrastive",
    "loss.eps_anchor",
    "loss.eps_ranking",
    "index.num_centroids",
    "index.seed",
    "search.k",
    "search.nprobe",
    "eval.depths",
    "eval.regime",
    "eval.seed",
    "rewrite.backend",
    "rewrite.endpoint",
    "rewrite.cache_dir",
    "paths.queries",
    "paths.passages",
    "paths.qrels",
    "paths.noised",
    "paths.external_queries",
    "paths.index",
    "paths.query_tower",
    "paths.doc_tower",
    "paths.out",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn empty() -> RunConfig {
        RunConfig::default()
    }

    /// Reads the optional config file, then applies `--set` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::empty();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                config.set_pair(line, false).map_err(|e| {
                    CliError::Usage(format!("{}:{}: {}", path.display(), i + 1, e.one_line()))
                })?;
            }
        }
        for pair in overrides {
            config.set_pair(pair, true)?;
        }
        Ok(config)
    }

    fn set_pair(&mut self, pair: &str, allow_overwrite: bool) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got {pair:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Usage(format!("unknown config key {key:?}")));
        }
        let previous = self.values.insert(key.to_string(), value.to_string());
        if previous.is_some() && !allow_overwrite {
            return Err(CliError::Usage(format!("duplicate config key {key:?}")));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key:?}");
        self.values.get(key).map(String::as_str)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                CliError::Usage(format!("config {key}: {v:?} is not a non-negative integer"))
            }),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                CliError::Usage(format!("config {key}: {v:?} is not a non-negative integer"))
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("config {key}: {v:?} is not a number"))),
        }
    }

    /// A path from the `paths.*` namespace, used as fallback for flags.
    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.values.get(&format!("paths.{name}")).map(PathBuf::from)
    }

    /// Sorted key=value lines; what the config hash is taken over.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn loss_weights(&self) -> Result<LossWeights, CliError> {
        let mut weights = LossWeights::default();
        for (name, _) in weights.fields() {
            let key = format!("loss.{name}");
            if let Some(v) = self.values.get(&key) {
                let value: f64 = v
                    .parse()
                    .map_err(|_| CliError::Usage(format!("config {key}: {v:?} is not a number")))?;
                weights
                    .set(name, value)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        Ok(weights)
    }

    pub fn noise_config(&self) -> Result<NoiseConfig, CliError> {
        let mut config = NoiseConfig::default();
        if let Some(spec) = self.get("noise.types") {
            config.enabled = parse_noise_types(spec)?;
        }
        config.master_seed = self.u64_or("noise.seed", config.master_seed)?;
        config.max_stem_lemma_words =
            self.usize_or("noise.max_stem_lemma_words", config.max_stem_lemma_words)?;
        let [start, middle, end] = config.placement_probabilities;
        config.placement_probabilities = [
            self.f64_or("noise.placement.start", start)?,
            self.f64_or("noise.placement.middle", middle)?,
            self.f64_or("noise.placement.end", end)?,
        ];
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let config = TrainConfig {
            regime: Regime::parse(self.str_or("train.regime", "baseline"))
                .map_err(|e| CliError::Usage(e.to_string()))?,
            batch_size: self.usize_or("train.batch_size", d.batch_size)?,
            learning_rate: self.f64_or("train.learning_rate", d.learning_rate)?,
            epochs: self.usize_or("train.epochs", d.epochs)?,
            negatives_per_positive: self
                .usize_or("train.negatives_per_positive", d.negatives_per_positive)?,
            seed: self.u64_or("train.seed", d.seed)?,
            loss_weights: self.loss_weights()?,
            dim: self.usize_or("train.dim", d.dim)?,
            num_buckets: self.usize_or("train.num_buckets", d.num_buckets)?,
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    /// Alignment knobs: `align.*` schedule over the `train.*` model
    /// shape, regime pinned to capot.
    pub fn align_config(&self) -> Result<TrainConfig, CliError> {
        let base = self.train_config()?;
        let config = TrainConfig {
            regime: Regime::Capot,
            batch_size: self.usize_or("align.batch_size", base.batch_size)?,
            learning_rate: self.f64_or("align.learning_rate", base.learning_rate)?,
            epochs: self.usize_or("align.epochs", base.epochs)?,
            seed: self.u64_or("align.seed", base.seed)?,
            ..base
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    pub fn depths(&self) -> Result<Vec<usize>, CliError> {
        let spec = self.str_or("eval.depths", "20,100,200");
        let mut depths = Vec::new();
        for part in spec.split(',') {
            let k: usize = part.trim().parse().map_err(|_| {
                CliError::Usage(format!("config eval.depths: bad depth {:?}", part.trim()))
            })?;
            if k == 0 {
                return Err(CliError::Usage("config eval.depths: depth 0".to_string()));
            }
            depths.push(k);
        }
        Ok(depths)
    }
}

fn parse_noise_types(spec: &str) -> Result<Vec<NoiseType>, CliError> {
    match spec {
        "all" => Ok(NoiseType::ALL.to_vec()),
        "typos" => Ok(NoiseType::TYPOS.to_vec()),
        list => {
            let mut types = Vec::new();
            for part in list.split(',') {
                let t = NoiseType::parse(part.trim())
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                if types.contains(&t) {
                    return Err(CliError::Usage(format!(
                        "config noise.types: {} listed twice",
                        t.label()
                    )));
                }
                types.push(t);
            }
            Ok(types)
        }
    }
}
