//! Multi-compound training samples, deterministic splits and batching.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::Array2;
use crate::error::{Error, Result};
use crate::model::{Real, Tensor4, HR_SIDE, LR_SIDE};
use crate::patch::PatchArchive;
use crate::rng::SplitMix64;
use crate::transform::TransformSet;

/// Stacked transformed LR inputs (channel 0 = reference) and the transformed HR target.
#[derive(Debug, Clone, PartialEq)]
pub struct MisrSample {
    pub patch_id: u64,
    pub compounds: Vec<String>,
    /// `channels x 16 x 16`, channel-major.
    pub input: Vec<f64>,
    pub target: Array2,
}

impl MisrSample {
    pub fn channels(&self) -> usize {
        self.compounds.len()
    }

    pub fn channel(&self, c: usize) -> Array2 {
        let n = LR_SIDE * LR_SIDE;
        Array2::from_vec(LR_SIDE, LR_SIDE, self.input[c * n..(c + 1) * n].to_vec()).expect("16x16")
    }
}

/// Builds one sample per reference patch, ordered by patch id.
///
/// Channel order is `[reference, joined...]`; an empty `joined` gives the
/// single-image configuration.
pub fn assemble_misr(
    archives: &BTreeMap<String, PatchArchive>,
    reference: &str,
    joined: &[String],
    transforms: &TransformSet,
) -> Result<Vec<MisrSample>> {
    let mut compounds = vec![reference.to_string()];
    compounds.extend(joined.iter().cloned());
    let mut sources = Vec::with_capacity(compounds.len());
    for c in &compounds {
        let archive = archives.get(c).ok_or_else(|| Error::UnknownCompound(c.clone()))?;
        sources.push((archive, transforms.get(c)?));
    }
    let (ref_archive, ref_t) = sources[0];
    let mut ids: Vec<u64> = ref_archive.patches.iter().map(|p| p.patch_id).collect();
    ids.sort_unstable();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let mut input = Vec::with_capacity(compounds.len() * LR_SIDE * LR_SIDE);
        for (c, (archive, t)) in compounds.iter().zip(&sources) {
            let patch = archive.get(id).ok_or_else(|| Error::MissingPatch {
                patch_id: id,
                compound: c.clone(),
            })?;
            let lr = patch.lr()?;
            if lr.dims() != (LR_SIDE, LR_SIDE) {
                return Err(Error::Shape(format!("patch {id} of {c}: LR is not 16x16")));
            }
            input.extend(t.apply(lr.as_slice())?);
        }
        let hr = &ref_archive.get(id).expect("id from this archive").hr;
        if hr.dims() != (HR_SIDE, HR_SIDE) {
            return Err(Error::Shape(format!("patch {id}: HR is not 64x64")));
        }
        out.push(MisrSample {
            patch_id: id,
            compounds: compounds.clone(),
            input,
            target: ref_t.apply_array(hr)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub fractions: (f64, f64, f64),
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            fractions: (0.70, 0.20, 0.10),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions {a}/{b}/{c} must be in [0,1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// Positions into a patch-id-ordered sample list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Seeded Fisher-Yates over `0..n` (SplitMix64 stream), then
/// `floor(0.7 n)` train, `floor(0.2 n)` validation, the rest test.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SPLIT_SAMPLES} samples to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(spec.seed).shuffle(&mut order);
    let n_train = (spec.fractions.0 * n as f64 + 1e-9).floor() as usize;
    let n_val = (spec.fractions.1 * n as f64 + 1e-9).floor() as usize;
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(Split {
        train: order,
        val,
        test,
    })
}

pub fn split_dataset(samples: &[MisrSample], spec: &SplitSpec) -> Result<Split> {
    split_indices(samples.len(), spec)
}

/// One epoch of shuffled mini-batches over `indices`; the last batch may be short.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl BatchIterator {
    pub fn new(indices: &[usize], batch_size: usize, epoch_seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if indices.is_empty() {
            return Err(Error::InvalidArgument("cannot batch an empty index list".into()));
        }
        let mut order = indices.to_vec();
        SplitMix64::new(epoch_seed).shuffle(&mut order);
        Ok(Self {
            order,
            batch_size,
            pos: 0,
        })
    }
}

impl Iterator for BatchIterator {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(batch)
    }
}

/// Input and target tensors for the samples at `idx`.
pub fn to_tensors<T: Real>(samples: &[MisrSample], idx: &[usize]) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let first = samples
        .get(*idx.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?)
        .ok_or_else(|| Error::InvalidArgument("batch index out of range".into()))?;
    let c = first.channels();
    let mut x = Vec::with_capacity(idx.len() * c * LR_SIDE * LR_SIDE);
    let mut y = Vec::with_capacity(idx.len() * HR_SIDE * HR_SIDE);
    for &i in idx {
        let s = samples
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("batch index {i} out of range")))?;
        if s.channels() != c {
            return Err(Error::Shape("mixed channel counts in one batch".into()));
        }
        x.extend(s.input.iter().map(|&v| T::from_f64(v)));
        y.extend(s.target.as_slice().iter().map(|&v| T::from_f64(v)));
    }
    Ok((
        Tensor4::from_vec(idx.len(), c, LR_SIDE, LR_SIDE, x)?,
        Tensor4::from_vec(idx.len(), 1, HR_SIDE, HR_SIDE, y)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub reference: String,
    pub joined: Vec<String>,
    pub transform_fingerprints: BTreeMap<String, String>,
    pub split_seed: u64,
    pub n_samples: usize,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl DatasetManifest {
    pub fn new(
        reference: &str,
        joined: &[String],
        transforms: &TransformSet,
        spec: &SplitSpec,
        samples: &[MisrSample],
        split: &Split,
    ) -> Result<Self> {
        let mut transform_fingerprints = BTreeMap::new();
        for c in std::iter::once(reference).chain(joined.iter().map(String::as_str)) {
            transform_fingerprints.insert(c.to_string(), transforms.get(c)?.fingerprint().to_string());
        }
        let ids = |v: &[usize]| v.iter().map(|&i| samples[i].patch_id).collect();
        Ok(Self {
            reference: reference.to_string(),
            joined: joined.to_vec(),
            transform_fingerprints,
            split_seed: spec.seed,
            n_samples: samples.len(),
            train: ids(&split.train),
            val: ids(&split.val),
            test: ids(&split.test),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}
