//! Evaluation metrics: NMSE in dB, SSIM against ground truth, error maps, histograms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::Array2;
use crate::dataset::{to_tensors, MisrSample};
use crate::error::{Error, Result};
use crate::interconnection::{ssim, SsimParams};
use crate::model::{Real, SrModel, HR_SIDE};
use crate::patch::{upsample_bicubic, SCALE};
use crate::transform::TransformSet;

/// Reported for exact reconstructions instead of minus infinity.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// `10 log10(mean((hr - est)^2) / mean(hr^2))`.
pub fn nmse_db(hr: &Array2, est: &Array2) -> Result<f64> {
    hr.same_dims(est)?;
    let n = hr.len() as f64;
    let power = hr.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
    if power == 0.0 {
        return Err(Error::InvalidArgument("NMSE undefined for an all-zero reference".into()));
    }
    let mse = hr
        .as_slice()
        .iter()
        .zip(est.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (mse / power).log10()).max(NMSE_FLOOR_DB))
}

pub fn error_map(hr: &Array2, est: &Array2) -> Result<Array2> {
    hr.same_dims(est)?;
    let data = hr
        .as_slice()
        .iter()
        .zip(est.as_slice())
        .map(|(a, b)| (a - b).abs())
        .collect();
    Array2::from_vec(hr.rows(), hr.cols(), data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

/// Equal-width bins over `[lo, hi]`, half-open except the last.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid histogram {bins} bins over [{lo}, {hi}]")));
    }
    let mut h = Histogram {
        counts: vec![0; bins],
        underflow: 0,
        overflow: 0,
    };
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if v < lo || v.is_nan() {
            h.underflow += 1;
        } else if v > hi {
            h.overflow += 1;
        } else {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            h.counts[b] += 1;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub patch_id: u64,
    pub ssim: f64,
    pub nmse_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub channels: usize,
    pub compounds: Vec<String>,
    pub dataset: String,
    pub samples: Vec<SampleScore>,
    /// Test patches whose HR map is identically zero (NMSE undefined).
    pub skipped: Vec<u64>,
    pub mean_ssim: f64,
    pub mean_nmse_db: f64,
}

impl EvalReport {
    pub fn from_scores(compounds: Vec<String>, dataset: &str, mut samples: Vec<SampleScore>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty test set".into()));
        }
        samples.sort_by_key(|s| s.patch_id);
        let n = samples.len() as f64;
        let mean_ssim = samples.iter().map(|s| s.ssim).sum::<f64>() / n;
        let mean_nmse_db = samples.iter().map(|s| s.nmse_db).sum::<f64>() / n;
        Ok(Self {
            channels: compounds.len(),
            compounds,
            dataset: dataset.to_string(),
            samples,
            skipped: Vec::new(),
            mean_ssim,
            mean_nmse_db,
        })
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("patch_id,ssim,nmse_db\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{}\n", s.patch_id, s.ssim, s.nmse_db));
        }
        out
    }

    pub fn aggregates_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "channels": self.channels,
            "compounds": self.compounds,
            "dataset": self.dataset,
            "n_samples": self.samples.len(),
            "skipped": self.skipped,
            "mean_ssim": self.mean_ssim,
            "mean_nmse_db": self.mean_nmse_db,
        });
        serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.samples_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.aggregates_json()?).map_err(|e| Error::io(&json, e))
    }
}

/// Side-by-side table of configurations as CSV and as aligned text.
pub fn comparison_table(rows: &[(&str, &EvalReport)]) -> (String, String) {
    let mut csv = String::from("configuration,channels,compounds,dataset,n_samples,mean_ssim,mean_nmse_db\n");
    let mut cells = vec![[
        "configuration".to_string(),
        "C".into(),
        "compounds".into(),
        "SSIM".into(),
        "NMSE [dB]".into(),
    ]];
    for (name, r) in rows {
        let compounds = r.compounds.join("+");
        csv.push_str(&format!(
            "{name},{},{compounds},{},{},{},{}\n",
            r.channels,
            r.dataset,
            r.samples.len(),
            r.mean_ssim,
            r.mean_nmse_db
        ));
        cells.push([
            name.to_string(),
            r.channels.to_string(),
            compounds,
            format!("{:.4}", r.mean_ssim),
            format!("{:.2}", r.mean_nmse_db),
        ]);
    }
    let widths: Vec<usize> = (0..5).map(|k| cells.iter().map(|c| c[k].len()).max().unwrap_or(0)).collect();
    let mut text = String::new();
    for row in &cells {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        text.push_str(line.join("  ").trim_end());
        text.push('\n');
    }
    (csv, text)
}

/// Physical-domain reconstruction of each sample plus its ground truth.
pub struct Reconstruction {
    pub patch_id: u64,
    pub hr: Array2,
    pub sr: Array2,
}

/// Anything that maps a batch of samples to transformed-domain HR estimates in [0, 1].
pub trait Estimator {
    fn estimate(&self, samples: &[MisrSample], idx: &[usize]) -> Result<Vec<Array2>>;
}

impl<T: Real> Estimator for SrModel<T> {
    fn estimate(&self, samples: &[MisrSample], idx: &[usize]) -> Result<Vec<Array2>> {
        if let Some(&i) = idx.first() {
            if samples[i].channels() != self.config().in_channels {
                return Err(Error::Shape(format!(
                    "model takes {} channels, samples have {}",
                    self.config().in_channels,
                    samples[i].channels()
                )));
            }
        }
        let (x, _) = to_tensors::<T>(samples, idx)?;
        let out = self.predict(&x)?;
        (0..idx.len())
            .map(|k| {
                let v = out.sample(k).iter().map(|v| v.to_f64()).collect();
                Array2::from_vec(HR_SIDE, HR_SIDE, v)
            })
            .collect()
    }
}

/// Bicubic upsampling of the reference channel.
pub struct BicubicBaseline;

impl Estimator for BicubicBaseline {
    fn estimate(&self, samples: &[MisrSample], idx: &[usize]) -> Result<Vec<Array2>> {
        idx.iter()
            .map(|&i| Ok(upsample_bicubic(&samples[i].channel(0), SCALE)?.map(|v| v.min(1.0))))
            .collect()
    }
}

/// Inverts the reference transform on every estimate.
pub fn reconstruct(
    est: &dyn Estimator,
    samples: &[MisrSample],
    idx: &[usize],
    transforms: &TransformSet,
) -> Result<Vec<Reconstruction>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(16) {
        let preds = est.estimate(samples, chunk)?;
        for (&i, pred) in chunk.iter().zip(preds) {
            let s = &samples[i];
            let t = transforms.get(&s.compounds[0])?;
            out.push(Reconstruction {
                patch_id: s.patch_id,
                hr: t.invert_array(&s.target),
                sr: t.invert_array(&pred),
            });
        }
    }
    Ok(out)
}

/// SSIM of the estimate against ground truth, both scaled by the ground-truth range.
pub fn physical_ssim(hr: &Array2, sr: &Array2) -> Result<f64> {
    let (lo, hi) = (hr.min(), hr.max());
    let span = hi - lo;
    if span == 0.0 {
        return Ok(if hr == sr { 1.0 } else { 0.0 });
    }
    let a = hr.map(|v| (v - lo) / span);
    let b = sr.map(|v| (v - lo) / span);
    ssim(&a, &b, &SsimParams::with_range(1.0))
}

/// Scores every test sample in the physical domain.
///
/// `hr_physical` supplies the untransformed HR patch for a patch id when
/// available; otherwise the inverse transform of the target is used.
pub fn evaluate(
    est: &dyn Estimator,
    samples: &[MisrSample],
    test: &[usize],
    transforms: &TransformSet,
    hr_physical: Option<&dyn Fn(u64) -> Option<Array2>>,
    dataset: &str,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let compounds = samples[test[0]].compounds.clone();
    let mut scores = Vec::with_capacity(test.len());
    let mut skipped = Vec::new();
    for rec in reconstruct(est, samples, test, transforms)? {
        let hr = hr_physical
            .and_then(|f| f(rec.patch_id))
            .unwrap_or(rec.hr);
        if hr.max() == 0.0 {
            skipped.push(rec.patch_id);
            continue;
        }
        scores.push(SampleScore {
            patch_id: rec.patch_id,
            ssim: physical_ssim(&hr, &rec.sr)?,
            nmse_db: nmse_db(&hr, &rec.sr)?,
        });
    }
    let mut report = EvalReport::from_scores(compounds, dataset, scores)?;
    skipped.sort_unstable();
    report.skipped = skipped;
    Ok(report)
}
