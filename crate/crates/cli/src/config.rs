//! Flat `key = value` run configuration. Precedence, lowest first: built-in
//! defaults, `--config` file, environment, `--set` and dedicated flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use curiosity::metrics::EvalConfig;
use curiosity::model::{DecodeMode, ModelConfig, Precision};
use curiosity::qa_scorer::{QaScorer, RemoteConfig, RemoteScorer, StubScorer};
use curiosity::training::{AdamConfig, TrainConfig};
use curiosity::SCHEMA_VERSION;

pub const CONFIG_FILE: &str = "run_config.txt";
pub const ENV_SCORER_URL: &str = "CQG_SCORER_URL";
pub const ENV_DATA_ROOT: &str = "CQG_DATA_ROOT";

/// `(key, default, description)`. An empty default falls back to another
/// key or to the model preset.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "seed",
        "0",
        "seed for initialization, data order, sampling and splits",
    ),
    (
        "data_root",
        "",
        "directory that relative input paths are resolved against",
    ),
    ("scorer", "stub", "QA scorer backend: stub | remote"),
    (
        "scorer.url",
        "http://127.0.0.1:8700",
        "remote scorer base URL",
    ),
    ("scorer.timeout_ms", "10000", "per-request timeout"),
    (
        "scorer.max_in_flight",
        "4",
        "concurrent requests to the remote scorer",
    ),
    ("scorer.batch_size", "32", "items per /score_batch request"),
    ("scorer.max_retries", "3", "retries per request"),
    ("model.preset", "small", "small | large"),
    (
        "model.num_blocks",
        "",
        "encoder and decoder blocks (preset)",
    ),
    ("model.d_model", "", "hidden size (preset)"),
    ("model.d_ff", "", "feed-forward size (preset)"),
    ("model.num_heads", "", "attention heads (preset)"),
    (
        "model.max_source_len",
        "",
        "source truncation length (preset)",
    ),
    (
        "model.max_target_len",
        "",
        "maximum target length including EOS (preset)",
    ),
    ("model.precision", "f32", "f32 | f64"),
    ("vocab.min_freq", "2", "minimum token frequency"),
    (
        "vocab.max_size",
        "30000",
        "vocabulary cap including reserved tokens",
    ),
    ("train.batch_size", "64", "mini-batch size"),
    ("train.lr", "1e-4", "Adam learning rate"),
    ("train.beta1", "0.9", "Adam beta1"),
    ("train.beta2", "0.999", "Adam beta2"),
    ("train.epsilon", "1e-8", "Adam epsilon"),
    (
        "train.gamma",
        "0.99",
        "weight of the reinforcement loss, in [0, 1]",
    ),
    ("train.epochs", "50", "maximum epochs"),
    (
        "train.grad_clip_norm",
        "1.0",
        "global gradient-norm clip, or none",
    ),
    (
        "train.checkpoint_every",
        "0",
        "extra checkpoint every N steps (0 = epoch ends only)",
    ),
    (
        "train.patience",
        "5",
        "early-stopping patience in epochs, or none",
    ),
    ("train.max_steps", "none", "stop after N optimizer steps"),
    (
        "train.eval_bleu",
        "true",
        "log greedy validation BLEU-4 each epoch",
    ),
    (
        "train.abort_on_scorer_error",
        "false",
        "abort instead of skipping a batch when scoring fails",
    ),
    ("pretrain.epochs", "", "phase-1 epochs (train.epochs)"),
    ("pretrain.lr", "", "phase-1 learning rate (train.lr)"),
    ("decode.mode", "greedy", "greedy | beam | sample"),
    ("decode.k", "1", "beam width"),
    (
        "decode.max_len",
        "",
        "maximum generated tokens (model.max_target_len)",
    ),
    ("eval.max_n", "4", "highest BLEU order"),
    ("eval.self_bleu_cap", "1000", "Self-BLEU subsample size"),
    ("analysis.top_k", "10", "first-token histogram buckets"),
    (
        "analysis.prefix",
        "are there any other",
        "prefix whose rate is reported",
    ),
    (
        "analysis.granularity",
        "per_item",
        "correlation rows: per_item | per_system_mean",
    ),
    (
        "analysis.beams",
        "1,3,5",
        "beam widths for the divergence table",
    ),
    (
        "derive.holdout_articles",
        "0",
        "articles moved from the input to a validation split",
    ),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    explicit: BTreeMap<String, String>,
}

fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d)
}

fn is_none(v: &str) -> bool {
    v.is_empty() || v.eq_ignore_ascii_case("none")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if key == "schema_version" {
            if value != SCHEMA_VERSION {
                bail!("configuration schema {value} is not {SCHEMA_VERSION}");
            }
            return Ok(());
        }
        if default_of(key).is_none() {
            bail!("unknown configuration key `{key}`");
        }
        self.explicit.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Parse `key=value`, as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("expected KEY=VALUE, got `{pair}`"))?;
        self.set(k.trim(), v)
    }

    pub fn parse_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.set_pair(line)
                .with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.parse_text(&text)
            .with_context(|| format!("in {}", path.display()))
    }

    /// A set scorer URL also selects the remote scorer.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(url) = get(ENV_SCORER_URL).filter(|v| !v.is_empty()) {
            self.set("scorer.url", &url)?;
            self.set("scorer", "remote")?;
        }
        if let Some(root) = get(ENV_DATA_ROOT).filter(|v| !v.is_empty()) {
            self.set("data_root", &root)?;
        }
        Ok(())
    }

    /// Effective value with fallbacks resolved.
    pub fn value(&self, key: &str) -> String {
        let raw = self.explicit.get(key).cloned().unwrap_or_else(|| {
            default_of(key)
                .unwrap_or_else(|| panic!("unregistered key {key}"))
                .to_string()
        });
        if !raw.is_empty() {
            return raw;
        }
        match key {
            "pretrain.epochs" => self.value("train.epochs"),
            "pretrain.lr" => self.value("train.lr"),
            "decode.max_len" => self.value("model.max_target_len"),
            k if k.starts_with("model.") => self.preset_value(k).unwrap_or_default(),
            _ => raw,
        }
    }

    fn preset_value(&self, key: &str) -> Option<String> {
        let preset = self.preset(0).ok()?;
        let v = match key {
            "model.num_blocks" => preset.num_blocks,
            "model.d_model" => preset.d_model,
            "model.d_ff" => preset.d_ff,
            "model.num_heads" => preset.num_heads,
            "model.max_source_len" => preset.max_source_len,
            "model.max_target_len" => preset.max_target_len,
            _ => return None,
        };
        Some(v.to_string())
    }

    fn preset(&self, vocab_size: usize) -> Result<ModelConfig> {
        match self
            .explicit
            .get("model.preset")
            .map_or("small", String::as_str)
        {
            "small" => Ok(ModelConfig::small(vocab_size)),
            "large" => Ok(ModelConfig::large(vocab_size)),
            other => bail!("model.preset: unknown preset `{other}`"),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.value(key);
        v.parse()
            .map_err(|e| anyhow!("{key}: invalid value `{v}`: {e}"))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.value(key);
        if is_none(&v) {
            return Ok(None);
        }
        v.parse()
            .map(Some)
            .map_err(|e| anyhow!("{key}: invalid value `{v}`: {e}"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    /// Every key with its effective value, preceded by the schema tag.
    pub fn serialize(&self) -> String {
        let mut out = format!("# cqg run configuration\nschema_version = {SCHEMA_VERSION}\n");
        for (key, _, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value(key));
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, self.serialize())
            .with_context(|| format!("writing {}", path.display()))
    }

    /// Relative paths are joined onto `data_root` when it is set.
    pub fn input(&self, path: &Path) -> PathBuf {
        let root = self.value("data_root");
        if path.is_relative() && !root.is_empty() {
            Path::new(&root).join(path)
        } else {
            path.to_path_buf()
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let precision = match self.value("model.precision").as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            other => bail!("model.precision: expected f32 or f64, got `{other}`"),
        };
        let config = ModelConfig {
            num_blocks: self.get("model.num_blocks")?,
            d_model: self.get("model.d_model")?,
            d_ff: self.get("model.d_ff")?,
            num_heads: self.get("model.num_heads")?,
            max_source_len: self.get("model.max_source_len")?,
            max_target_len: self.get("model.max_target_len")?,
            seed: self.seed()?,
            precision,
            ..self.preset(vocab_size)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let config = TrainConfig {
            batch_size: self.get("train.batch_size")?,
            adam: AdamConfig {
                lr: self.get("train.lr")?,
                beta1: self.get("train.beta1")?,
                beta2: self.get("train.beta2")?,
                epsilon: self.get("train.epsilon")?,
            },
            gamma: self.get("train.gamma")?,
            epochs: self.get("train.epochs")?,
            grad_clip_norm: self.get_opt("train.grad_clip_norm")?,
            seed: self.seed()?,
            checkpoint_every: self.get("train.checkpoint_every")?,
            patience: self.get_opt("train.patience")?,
            eval_bleu: self.get("train.eval_bleu")?,
            max_steps: self.get_opt("train.max_steps")?,
            abort_on_scorer_error: self.get("train.abort_on_scorer_error")?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn pretrain_config(&self) -> Result<TrainConfig> {
        let mut config = self.train_config()?;
        config.epochs = self.get("pretrain.epochs")?;
        config.adam.lr = self.get("pretrain.lr")?;
        config.validate()?;
        Ok(config)
    }

    pub fn scorer(&self) -> Result<Box<dyn QaScorer>> {
        match self.value("scorer").as_str() {
            "stub" => Ok(Box::new(StubScorer)),
            "remote" => {
                let config = RemoteConfig {
                    endpoint: self.value("scorer.url"),
                    timeout_ms: self.get("scorer.timeout_ms")?,
                    max_in_flight: self.get("scorer.max_in_flight")?,
                    batch_size: self.get("scorer.batch_size")?,
                    max_retries: self.get("scorer.max_retries")?,
                    ..RemoteConfig::default()
                };
                Ok(Box::new(RemoteScorer::new(config)?))
            }
            other => bail!("scorer: expected stub or remote, got `{other}`"),
        }
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let max_n: usize = self.get("eval.max_n")?;
        if !(1..=4).contains(&max_n) {
            bail!("eval.max_n must be in 1..=4");
        }
        Ok(EvalConfig {
            max_n,
            self_bleu_cap: self.get("eval.self_bleu_cap")?,
            seed: self.seed()?,
            ..EvalConfig::default()
        })
    }

    pub fn decode_mode(&self) -> Result<DecodeMode> {
        self.get("decode.mode")
    }

    pub fn beams(&self) -> Result<Vec<usize>> {
        let v = self.value("analysis.beams");
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| anyhow!("analysis.beams: `{s}`: {e}"))
            })
            .collect()
    }
}
