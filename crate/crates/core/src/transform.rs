//! Per-compound quantile transforms onto uniform [0, 1].
//!
//! The transform is the piecewise-linear CDF through `n` empirical quantile
//! knots placed at probabilities `k / (n - 1)`. A value shared by several knots
//! (zero mass in sparse maps, typically) maps to the midpoint of its
//! probability interval, which keeps both directions single-valued.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::Array2;
use crate::error::{Error, Result};
use crate::grid::ByteReader;
use crate::rng::SplitMix64;

pub const DEFAULT_QUANTILES: usize = 1000;
pub const RESERVOIR_CAPACITY: usize = 1_000_000;
const MAGIC: &[u8; 4] = b"QTRF";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTransform {
    compound: String,
    knots: Vec<f64>,
    fitted_on: String,
}

/// Result of an inverse mapping; `clamped` counts inputs outside [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Inverted {
    pub values: Vec<f64>,
    pub clamped: usize,
}

impl QuantileTransform {
    /// Fits on a stream of samples. Streams longer than [`RESERVOIR_CAPACITY`]
    /// are reservoir-subsampled with a fixed seed.
    pub fn fit(
        samples: impl IntoIterator<Item = f64>,
        n_quantiles: usize,
        compound: impl Into<String>,
    ) -> Result<Self> {
        if n_quantiles < 2 {
            return Err(Error::InvalidArgument("need at least 2 quantiles".into()));
        }
        let mut hasher = Sha256::new();
        let mut reservoir: Vec<f64> = Vec::new();
        let mut rng = SplitMix64::new(0x5155_414e_5449_4c45);
        let mut seen: u64 = 0;
        for (i, x) in samples.into_iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("sample {i} is {x}")));
            }
            hasher.update(x.to_le_bytes());
            seen += 1;
            if reservoir.len() < RESERVOIR_CAPACITY {
                reservoir.push(x);
            } else {
                let j = rng.below(seen) as usize;
                if j < RESERVOIR_CAPACITY {
                    reservoir[j] = x;
                }
            }
        }
        if reservoir.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples to fit, got {}",
                reservoir.len()
            )));
        }
        reservoir.sort_by(f64::total_cmp);
        let knots = (0..n_quantiles)
            .map(|k| sorted_quantile(&reservoir, k, n_quantiles - 1))
            .collect();
        let digest = hasher.finalize();
        let fitted_on = digest[..16].iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            compound: compound.into(),
            knots,
            fitted_on,
        })
    }

    pub fn compound(&self) -> &str {
        &self.compound
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n(&self) -> usize {
        self.knots.len()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fitted_on
    }

    /// Emission value to [0, 1].
    pub fn apply_one(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("cannot transform {x}")));
        }
        let k = &self.knots;
        let last = (k.len() - 1) as f64;
        let lo = k.partition_point(|&v| v < x);
        let hi = k.partition_point(|&v| v <= x);
        Ok(if hi > lo {
            // x coincides with knots lo..hi
            (lo + hi - 1) as f64 / 2.0 / last
        } else if lo == 0 {
            0.0
        } else if lo == k.len() {
            1.0
        } else {
            let (a, b) = (k[lo - 1], k[lo]);
            ((lo - 1) as f64 + (x - a) / (b - a)) / last
        })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        x.iter().map(|&v| self.apply_one(v)).collect()
    }

    pub fn apply_array(&self, x: &Array2) -> Result<Array2> {
        Array2::from_vec(x.rows(), x.cols(), self.apply(x.as_slice())?)
    }

    /// [0, 1] back to emission units; returns the value and whether `u` was clamped.
    pub fn invert_one(&self, u: f64) -> (f64, bool) {
        let clamped = !(0.0..=1.0).contains(&u);
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        let k = &self.knots;
        let pos = u * (k.len() - 1) as f64;
        let i = (pos.floor() as usize).min(k.len() - 2);
        let t = pos - i as f64;
        let v = if k[i] == k[i + 1] { k[i] } else { k[i] + t * (k[i + 1] - k[i]) };
        (v, clamped)
    }

    pub fn invert(&self, u: &[f64]) -> Inverted {
        let mut clamped = 0;
        let values = u
            .iter()
            .map(|&x| {
                let (v, c) = self.invert_one(x);
                clamped += c as usize;
                v
            })
            .collect();
        Inverted { values, clamped }
    }

    pub fn invert_array(&self, u: &Array2) -> Array2 {
        let inv = self.invert(u.as_slice());
        Array2::from_vec(u.rows(), u.cols(), inv.values).expect("same length")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.knots.len() * 8);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        for s in [&self.compound, &self.fitted_on] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&(self.knots.len() as u32).to_le_bytes());
        for k in &self.knots {
            out.extend_from_slice(&k.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC || r.u8()? != VERSION {
            return Err(Error::Format("not a version-1 transform file".into()));
        }
        let compound = r.string()?;
        let fitted_on = r.string()?;
        let n = r.u32()? as usize;
        let knots = r.f64s(n)?;
        r.finish()?;
        if n < 2 || knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Format("knots must be >= 2 and nondecreasing".into()));
        }
        Ok(Self {
            compound,
            knots,
            fitted_on,
        })
    }
}

/// Linear interpolation between order statistics at probability `k / denom`.
///
/// The position `k (N - 1) / denom` is split with integer arithmetic so that
/// quantiles landing on an order statistic are returned exactly.
fn sorted_quantile(sorted: &[f64], k: usize, denom: usize) -> f64 {
    let num = k as u128 * (sorted.len() - 1) as u128;
    let i = (num / denom as u128) as usize;
    let rem = (num % denom as u128) as f64;
    if rem == 0.0 || i + 1 >= sorted.len() {
        return sorted[i.min(sorted.len() - 1)];
    }
    let t = rem / denom as f64;
    sorted[i] + t * (sorted[i + 1] - sorted[i])
}

/// One fitted transform per compound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransformSet {
    transforms: BTreeMap<String, QuantileTransform>,
}

impl TransformSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: QuantileTransform) {
        self.transforms.insert(t.compound.clone(), t);
    }

    pub fn get(&self, compound: &str) -> Result<&QuantileTransform> {
        self.transforms
            .get(compound)
            .ok_or_else(|| Error::MissingTransform(compound.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &QuantileTransform> {
        self.transforms.values()
    }

    /// `<compound>.qtf` binaries plus `<compound>.json` sidecars.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for t in self.transforms.values() {
            let bin = dir.join(format!("{}.qtf", t.compound));
            fs::write(&bin, t.to_bytes()).map_err(|e| Error::io(&bin, e))?;
            let json = dir.join(format!("{}.json", t.compound));
            let text = serde_json::to_string_pretty(t).map_err(|e| Error::Format(e.to_string()))?;
            fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut set = Self::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "qtf"))
            .collect();
        paths.sort();
        for p in paths {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            set.insert(QuantileTransform::from_bytes(&bytes)?);
        }
        Ok(set)
    }
}
