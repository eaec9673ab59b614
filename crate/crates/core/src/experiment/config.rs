//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments run to end of line
//! dataset = cora
//! encoder.heads = 6
//! train.lr = 0.0001
//! ```
//!
//! Every key has a default, so an empty file is a valid configuration. The
//! same flat map is accepted as a JSON object of strings, which is what the
//! run directories echo back.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::PoolAxis;
use crate::data::{KnownDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::evaluation::ProbeConfig;
use crate::model::Components;
use crate::training::TrainConfig;

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub variant: Components,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    /// Probe restarts per trained model, seeds `probe.seed..probe.seed+n`.
    pub probe_seeds: usize,
    /// `None` uses the dataset's standard split.
    pub split: Option<SplitSpec>,
    pub row_normalize: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "cora".into(),
            variant: Components::FULL,
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            probe_seeds: 1,
            split: None,
            row_normalize: false,
        }
    }
}

/// Canonical keys in echo order.
pub const KEYS: &[&str] = &[
    "dataset",
    "variant",
    "seed",
    "train.lr",
    "train.max_epochs",
    "train.patience",
    "train.p_drop",
    "train.adaptive_frozen",
    "train.corrupt_raw",
    "train.pool_axis",
    "encoder.heads",
    "encoder.head_dim",
    "encoder.leaky_slope",
    "encoder.prelu_init",
    "encoder.layers",
    "probe.lr",
    "probe.epochs",
    "probe.l2",
    "probe.seed",
    "probe.seeds",
    "data.row_normalize",
    "data.train_per_class",
    "data.val",
    "data.test",
];

/// Short names accepted anywhere a key is.
pub fn canonical_key(key: &str) -> Option<&'static str> {
    let key = match key {
        "lr" => "train.lr",
        "p_drop" => "train.p_drop",
        "heads" => "encoder.heads",
        "prelu_init" => "encoder.prelu_init",
        other => other,
    };
    KEYS.iter().copied().find(|k| *k == key)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn split_spec(&self) -> SplitSpec {
        self.split.clone().unwrap_or_else(|| {
            KnownDataset::from_str(&self.dataset)
                .map(KnownDataset::split_spec)
                .unwrap_or_else(|_| SplitSpec::planetoid())
        })
    }

    fn split_mut(&mut self) -> &mut SplitSpec {
        if self.split.is_none() {
            self.split = Some(self.split_spec());
        }
        self.split.as_mut().expect("just set")
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let canonical =
            canonical_key(key).ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
        let value = value.trim();
        let t = &mut self.train;
        match canonical {
            "dataset" => {
                if value.is_empty() || value.contains(['/', '\\']) {
                    return Err(Error::Config(format!(
                        "dataset name {value:?} is not a plain name"
                    )));
                }
                self.dataset = value.to_string();
            }
            "variant" => self.variant = value.parse()?,
            "seed" => t.seed = parse(key, value)?,
            "train.lr" => t.lr = parse(key, value)?,
            "train.max_epochs" => t.max_epochs = parse(key, value)?,
            "train.patience" => t.patience = parse(key, value)?,
            "train.p_drop" => t.model.p_drop = parse(key, value)?,
            "train.adaptive_frozen" => t.model.adaptive_frozen = parse(key, value)?,
            "train.corrupt_raw" => t.model.corrupt_raw = parse(key, value)?,
            "train.pool_axis" => t.model.pool_axis = value.parse::<PoolAxis>()?,
            "encoder.heads" => t.model.encoder.heads = parse(key, value)?,
            "encoder.head_dim" => t.model.encoder.head_dim = parse(key, value)?,
            "encoder.leaky_slope" => t.model.encoder.leaky_slope = parse(key, value)?,
            "encoder.prelu_init" => t.model.encoder.prelu_init = parse(key, value)?,
            "encoder.layers" => t.model.encoder.layers = parse(key, value)?,
            "probe.lr" => self.probe.lr = parse(key, value)?,
            "probe.epochs" => self.probe.epochs = parse(key, value)?,
            "probe.l2" => self.probe.l2 = parse(key, value)?,
            "probe.seed" => self.probe.seed = parse(key, value)?,
            "probe.seeds" => self.probe_seeds = parse(key, value)?,
            "data.row_normalize" => self.row_normalize = parse(key, value)?,
            "data.train_per_class" => {
                let v = parse(key, value)?;
                self.split_mut().per_class_train = v;
            }
            "data.val" => {
                let v = parse(key, value)?;
                self.split_mut().val = v;
            }
            "data.test" => {
                let v = parse(key, value)?;
                self.split_mut().test = v;
            }
            _ => unreachable!("every canonical key is handled"),
        }
        self.train.model.components = self.variant;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let split = self.split_spec();
        Some(match canonical_key(key)? {
            "dataset" => self.dataset.clone(),
            "variant" => self.variant.name(),
            "seed" => t.seed.to_string(),
            "train.lr" => t.lr.to_string(),
            "train.max_epochs" => t.max_epochs.to_string(),
            "train.patience" => t.patience.to_string(),
            "train.p_drop" => t.model.p_drop.to_string(),
            "train.adaptive_frozen" => t.model.adaptive_frozen.to_string(),
            "train.corrupt_raw" => t.model.corrupt_raw.to_string(),
            "train.pool_axis" => t.model.pool_axis.as_str().to_string(),
            "encoder.heads" => t.model.encoder.heads.to_string(),
            "encoder.head_dim" => t.model.encoder.head_dim.to_string(),
            "encoder.leaky_slope" => t.model.encoder.leaky_slope.to_string(),
            "encoder.prelu_init" => t.model.encoder.prelu_init.to_string(),
            "encoder.layers" => t.model.encoder.layers.to_string(),
            "probe.lr" => self.probe.lr.to_string(),
            "probe.epochs" => self.probe.epochs.to_string(),
            "probe.l2" => self.probe.l2.to_string(),
            "probe.seed" => self.probe.seed.to_string(),
            "probe.seeds" => self.probe_seeds.to_string(),
            "data.row_normalize" => self.row_normalize.to_string(),
            "data.train_per_class" => split.per_class_train.to_string(),
            "data.val" => split.val.to_string(),
            "data.test" => split.test.to_string(),
            _ => unreachable!("every canonical key is handled"),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.probe.validate()?;
        if self.probe_seeds == 0 {
            return Err(Error::Config("probe.seeds must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical key/value pairs, every key present.
    pub fn echo(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.get(k).expect("canonical key")))
            .collect()
    }

    /// `key = value` lines in canonical order.
    pub fn echo_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            writeln!(out, "{k} = {}", self.get(k).expect("canonical key")).unwrap();
        }
        out
    }

    pub fn echo_json(&self) -> String {
        let ordered: Vec<(&str, String)> =
            KEYS.iter().map(|k| (*k, self.get(k).unwrap())).collect();
        let mut map = serde_json::Map::new();
        for (k, v) in ordered {
            map.insert(k.to_string(), serde_json::Value::String(v));
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("strings serialize")
    }

    /// First 8 hex digits of the SHA-256 of the canonical echo.
    pub fn hash8(&self) -> String {
        let digest = Sha256::digest(self.echo_text().as_bytes());
        hex::encode(digest)[..8].to_string()
    }

    pub fn apply_pairs<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies a config file: `key = value` lines or a flat JSON object.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        if text.trim_start().starts_with('{') {
            let map: BTreeMap<String, serde_json::Value> =
                serde_json::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))?;
            for (k, v) in map {
                let s = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Number(n) => n.to_string(),
                    serde_json::Value::Bool(b) => b.to_string(),
                    other => {
                        return Err(Error::Config(format!(
                            "{source}: {k}: unsupported value {other}"
                        )))
                    }
                };
                self.set(&k, &s)
                    .map_err(|e| Error::Config(format!("{source}: {e}")))?;
            }
            return Ok(());
        }
        for (k, v, line) in parse_lines(text, source)? {
            self.set(&k, &v).map_err(|e| Error::Parse {
                path: source.to_string(),
                line,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}

/// Splits `key = value` lines, rejecting malformed and duplicate keys.
pub fn parse_lines(text: &str, source: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    let mut seen: BTreeMap<&'static str, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: line_no,
            message,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let k = k.trim();
        let canonical = canonical_key(k).ok_or_else(|| err(format!("unknown key {k:?}")))?;
        if let Some(prev) = seen.insert(canonical, line_no) {
            return Err(err(format!("{canonical} already set on line {prev}")));
        }
        out.push((k.to_string(), v.trim().to_string(), line_no));
    }
    Ok(out)
}

/// Splits a `key=value` command-line override.
pub fn split_override(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))
}
