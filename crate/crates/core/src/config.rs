//! Flat `key = value` run configuration with dotted section keys.
//!
//! Lines starting with `#` and blank lines are ignored. Later sources override
//! earlier ones: file, then `MBSR_*` environment variables, then explicit
//! overrides (command-line flags). An environment variable maps to a key by
//! dropping the prefix, lowercasing, and reading `__` as `.`:
//! `MBSR_TRAIN__MAX_ITERS=500` sets `train.max_iters`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::dataset::SplitSpec;
use crate::error::{Error, Result};
use crate::grid::parse_date;
use crate::interconnection::RankMode;
use crate::model::{SrModelConfig, TrainConfig};
use crate::synthetic::{SynthCompound, SynthSpec};

pub const ENV_PREFIX: &str = "MBSR_";

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "paths.out",
    "paths.grids",
    "data.reference",
    "data.joined",
    "data.tag",
    "data.min_nonzero_frac",
    "transform.n_quantiles",
    "split.train",
    "split.val",
    "split.test",
    "model.features",
    "model.blocks",
    "model.reduction",
    "train.lr_max",
    "train.lr_min",
    "train.max_iters",
    "train.val_every",
    "train.patience",
    "train.batch_size",
    "report.figures",
    "report.hist_bins",
    "synth.rows",
    "synth.cols",
    "synth.correlation_length",
    "synth.detail_scale",
    "synth.detail_shift",
    "synth.dates",
    "synth.resolution",
];

/// Raw key-value pairs with their origin, before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

fn check_key(key: &str) -> Result<()> {
    if KNOWN_KEYS.contains(&key) || key.strip_prefix("synth.compound.").is_some_and(|t| !t.is_empty()) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown key {key:?}")))
    }
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim().to_string();
            check_key(&key).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            if kv.entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        check_key(key)?;
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Applies `MBSR_*` variables from `vars` (typically `std::env::vars()`).
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = rest.to_lowercase().replace("__", ".");
                self.set(&key, value).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }
}

/// Compounds joined with the reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Joined {
    List(Vec<String>),
    /// `auto:most:k` or `auto:least:k`, resolved against the inter-connection matrix.
    Auto { mode: RankMode, k: usize },
}

impl FromStr for Joined {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("auto:") {
            let (mode, k) = rest
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("selector {s:?}: expected auto:<most|least>:<k>")))?;
            let mode = mode.parse().map_err(|_| Error::Config(format!("selector {s:?}: bad mode")))?;
            let k = k.parse().map_err(|_| Error::Config(format!("selector {s:?}: bad count")))?;
            return Ok(Joined::Auto { mode, k });
        }
        let list: Vec<String> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect();
        Ok(Joined::List(list))
    }
}

/// Default synthetic archive: a reference, two auxiliaries carrying its fine
/// structure, two exact copies of it, and one unrelated compound.
pub fn default_synth_compounds() -> Vec<SynthCompound> {
    vec![
        SynthCompound::new("ref", 1.0, 0.3, 7.0),
        SynthCompound::new("comp_a", 1.0, 0.0, 7.0).detail(),
        SynthCompound::new("comp_b", 1.0, 0.0, 7.0).detail(),
        SynthCompound::new("red_a", 1.0, 0.3, 7.0),
        SynthCompound::new("red_b", 1.0, 0.3, 7.0),
        SynthCompound::new("indep", 0.0, 0.3, 7.0),
    ]
}

fn parse_compound(tag: &str, v: &str) -> Result<SynthCompound> {
    let bad = || Error::Config(format!("synth.compound.{tag}: expected \"rho q gamma [detail]\", got {v:?}"));
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err(bad());
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let c = SynthCompound::new(tag, num(parts[0])?, num(parts[1])?, num(parts[2])?);
    match parts.get(3) {
        None => Ok(c),
        Some(&"detail") => Ok(c.detail()),
        Some(_) => Err(bad()),
    }
}

/// Typed run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub grids: PathBuf,
    pub reference: String,
    pub joined: Joined,
    pub tag: String,
    pub min_nonzero_frac: f64,
    pub n_quantiles: usize,
    pub split: SplitSpec,
    pub features: usize,
    pub blocks: usize,
    pub reduction: usize,
    pub train: TrainConfig,
    /// Number of worst and of best test samples to draw figures for.
    pub figures: usize,
    pub hist_bins: usize,
    pub synth: SynthSpec,
}

impl RunConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let seed = kv.parsed("seed", 1u64)?;
        let out = PathBuf::from(kv.get("paths.out").unwrap_or("run"));
        let grids = kv
            .get("paths.grids")
            .map(PathBuf::from)
            .unwrap_or_else(|| out.join("grids"));
        let fractions = (
            kv.parsed("split.train", 0.7)?,
            kv.parsed("split.val", 0.2)?,
            kv.parsed("split.test", 0.1)?,
        );
        let split = SplitSpec { seed, fractions };
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            lr_max: kv.parsed("train.lr_max", defaults.lr_max)?,
            lr_min: kv.parsed("train.lr_min", defaults.lr_min)?,
            max_iters: kv.parsed("train.max_iters", defaults.max_iters)?,
            val_every: kv.parsed("train.val_every", defaults.val_every)?,
            patience: kv.parsed("train.patience", defaults.patience)?,
            batch_size: kv.parsed("train.batch_size", defaults.batch_size)?,
            seed,
        };
        let model = SrModelConfig::new(1);

        let mut compounds = Vec::new();
        for (k, v) in kv.iter() {
            if let Some(tag) = k.strip_prefix("synth.compound.") {
                compounds.push(parse_compound(tag, v)?);
            }
        }
        if compounds.is_empty() {
            compounds = default_synth_compounds();
        }
        let mut synth = SynthSpec::new(
            kv.parsed("synth.rows", 256)?,
            kv.parsed("synth.cols", 1472)?,
            compounds,
        );
        synth.correlation_length = kv.parsed("synth.correlation_length", synth.correlation_length)?;
        synth.detail_scale = kv.parsed("synth.detail_scale", synth.detail_scale)?;
        synth.detail_shift = kv.parsed("synth.detail_shift", synth.detail_shift)?;
        synth.resolution = kv.parsed("synth.resolution", synth.resolution)?;
        synth.shared_seed = seed;
        synth.compound_seed = crate::rng::mix64(seed ^ 0x636f_6d70);
        if let Some(d) = kv.get("synth.dates") {
            synth.dates = d
                .split(',')
                .map(|s| parse_date(s.trim()))
                .collect::<Result<Vec<NaiveDate>>>()?;
        }

        let cfg = Self {
            seed,
            out,
            grids,
            reference: kv.get("data.reference").unwrap_or("ref").to_string(),
            joined: kv.get("data.joined").unwrap_or("").parse()?,
            tag: kv.get("data.tag").unwrap_or("synthetic").to_string(),
            min_nonzero_frac: kv.parsed("data.min_nonzero_frac", 0.0)?,
            n_quantiles: kv.parsed("transform.n_quantiles", 1000)?,
            split,
            features: kv.parsed("model.features", model.features)?,
            blocks: kv.parsed("model.blocks", model.blocks)?,
            reduction: kv.parsed("model.reduction", model.attention_reduction)?,
            train,
            figures: kv.parsed("report.figures", 2)?,
            hist_bins: kv.parsed("report.hist_bins", 32)?,
            synth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (if any), applies environment overrides, then `overrides`.
    pub fn resolve(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[(&str, String)],
    ) -> Result<Self> {
        let mut kv = match path {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::default(),
        };
        kv.apply_env(env)?;
        for (k, v) in overrides {
            kv.set(k, v.clone())?;
        }
        Self::from_kv(&kv)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.split.validate().map_err(cfg)?;
        self.train.validate().map_err(cfg)?;
        self.model_config(1).validate().map_err(cfg)?;
        self.synth.validate().map_err(cfg)?;
        if !(0.0..=1.0).contains(&self.min_nonzero_frac) {
            return Err(Error::Config("data.min_nonzero_frac must be in [0, 1]".into()));
        }
        if self.n_quantiles < 2 {
            return Err(Error::Config("transform.n_quantiles must be >= 2".into()));
        }
        if self.hist_bins == 0 {
            return Err(Error::Config("report.hist_bins must be >= 1".into()));
        }
        if let Joined::List(list) = &self.joined {
            if list.iter().any(|c| c == &self.reference) {
                return Err(Error::Config("joined compounds must not include the reference".into()));
            }
        }
        Ok(())
    }

    pub fn model_config(&self, in_channels: usize) -> SrModelConfig {
        SrModelConfig {
            in_channels,
            features: self.features,
            blocks: self.blocks,
            attention_reduction: self.reduction,
            ..SrModelConfig::new(in_channels)
        }
    }
}
