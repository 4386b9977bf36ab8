//! End-to-end stages behind the command-line tool.
//!
//! Every stage reads its inputs from, and writes its outputs to, the run
//! directory so stages can be run one at a time or chained by [`Pipeline::run`].
//!
//! ```text
//! <out>/grids/<compound>/<date>.bgrid   synth (default input location)
//! <out>/analysis/                       ssim.csv, pcc.csv, matrix.ppm
//! <out>/selection.json                  reference and resolved joined compounds
//! <out>/archives/<compound>/            patch archives
//! <out>/transforms/                     fitted quantile transforms
//! <out>/dataset/manifest.json           split and transform fingerprints
//! <out>/model/                          checkpoint.mbck, history.csv
//! <out>/report/                         per-sample CSV, aggregate JSON, comparison table
//! <out>/figures/                        HR / SR / |error| heatmaps and histograms
//! <out>/manifest.json                   SHA-256 of every artifact of a full run
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::Array2;
use crate::config::{Joined, RunConfig};
use crate::dataset::{assemble_misr, split_indices, DatasetManifest, MisrSample, Split};
use crate::error::{Error, Result};
use crate::grid::{load_grid, save_grid, EmissionGrid, GridFormat};
use crate::interconnection::{build_matrix, rank_compounds, InterconnectionMatrix};
use crate::metrics::{comparison_table, error_map, evaluate, histogram, reconstruct, BicubicBaseline, EvalReport};
use crate::model::{train, Checkpoint, SrModel, StopReason};
use crate::patch::PatchArchive;
use crate::render::{heatmap, histogram_chart, triangle_heatmap, Palette};
use crate::synthetic::gen_compound_set;
use crate::transform::{QuantileTransform, TransformSet};

/// Pipeline stage, used to tag failures and pick the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Synth,
    Analyze,
    FitTransforms,
    MakeDataset,
    Train,
    Evaluate,
    Render,
    Manifest,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Config,
        Stage::Synth,
        Stage::Analyze,
        Stage::FitTransforms,
        Stage::MakeDataset,
        Stage::Train,
        Stage::Evaluate,
        Stage::Render,
        Stage::Manifest,
    ];

    /// Process exit code for a failure in this stage. Code 2 is left to
    /// command-line usage errors.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 3,
            Stage::Synth => 4,
            Stage::Analyze => 5,
            Stage::FitTransforms => 6,
            Stage::MakeDataset => 7,
            Stage::Train => 8,
            Stage::Evaluate => 9,
            Stage::Render => 10,
            Stage::Manifest => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Synth => "synth",
            Stage::Analyze => "analyze",
            Stage::FitTransforms => "fit-transforms",
            Stage::MakeDataset => "make-dataset",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Render => "render",
            Stage::Manifest => "manifest",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Paths inside the run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }
    pub fn selection(&self) -> PathBuf {
        self.root.join("selection.json")
    }
    pub fn archive(&self, compound: &str) -> PathBuf {
        self.root.join("archives").join(compound)
    }
    pub fn transforms(&self) -> PathBuf {
        self.root.join("transforms")
    }
    pub fn dataset_manifest(&self) -> PathBuf {
        self.root.join("dataset").join("manifest.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("model").join("checkpoint.mbck")
    }
    pub fn history(&self) -> PathBuf {
        self.root.join("model").join("history.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn figures(&self) -> PathBuf {
        self.root.join("figures")
    }
    pub fn run_manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

/// Reference plus joined compounds as resolved for this run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub reference: String,
    pub joined: Vec<String>,
    /// The configured selector, e.g. `auto:least:2`, or the literal list.
    pub selector: String,
}

impl Selection {
    pub fn compounds(&self) -> Vec<String> {
        std::iter::once(self.reference.clone()).chain(self.joined.iter().cloned()).collect()
    }
}

/// Summary of a training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub iterations: u64,
    pub best_iter: u64,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
    pub stop: StopReason,
}

/// Summary of a full run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub selection: Selection,
    pub train: TrainSummary,
    pub report: EvalReport,
    pub baseline: EvalReport,
    pub artifacts: BTreeMap<String, String>,
}

/// Dataset rebuilt from the run directory.
pub struct LoadedData {
    pub selection: Selection,
    pub archives: BTreeMap<String, PatchArchive>,
    pub transforms: TransformSet,
    pub samples: Vec<MisrSample>,
    pub split: Split,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// All grid files (`.bgrid` or `.csv`) under `dir` and its direct subdirectories,
/// in path order.
pub fn load_grid_dir(dir: &Path) -> Result<Vec<EmissionGrid>> {
    let mut files = Vec::new();
    let mut dirs = vec![dir.to_path_buf()];
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            dirs.push(p);
        }
    }
    for d in &dirs {
        for e in fs::read_dir(d).map_err(|e| Error::io(d, e))? {
            let p = e.map_err(|e| Error::io(d, e))?.path();
            if p.is_file() && GridFormat::from_path(&p).is_some() {
                files.push(p);
            }
        }
    }
    files.sort();
    files
        .iter()
        .map(|p| load_grid(p, GridFormat::from_path(p).expect("filtered above")))
        .collect()
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

pub struct Pipeline<'a> {
    pub cfg: RunConfig,
    pub layout: Layout,
    log: &'a dyn Fn(&str),
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: RunConfig, log: &'a dyn Fn(&str)) -> Self {
        let layout = Layout { root: cfg.out.clone() };
        Self { cfg, layout, log }
    }

    fn log(&self, msg: &str) {
        (self.log)(msg)
    }

    /// Loads every input grid, failing at the config stage if the directory is absent.
    fn grids(&self) -> StageResult<Vec<EmissionGrid>> {
        if !self.cfg.grids.is_dir() {
            return Err(Error::Config(format!("grid directory {} does not exist", self.cfg.grids.display())))
                .at(Stage::Config);
        }
        let grids = load_grid_dir(&self.cfg.grids).at(Stage::Config)?;
        if grids.is_empty() {
            return Err(Error::Config(format!("no grid files in {}", self.cfg.grids.display()))).at(Stage::Config);
        }
        Ok(grids)
    }

    /// Writes the synthetic archive to the grid directory.
    pub fn synth(&self) -> StageResult<Vec<PathBuf>> {
        let grids = gen_compound_set(&self.cfg.synth).at(Stage::Synth)?;
        let mut paths = Vec::with_capacity(grids.len());
        for g in &grids {
            let p = self
                .cfg
                .grids
                .join(g.compound())
                .join(format!("{}.bgrid", g.date().format("%Y-%m-%d")));
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).at(Stage::Synth)?;
            }
            save_grid(g, &p, GridFormat::Bgrid).at(Stage::Synth)?;
            paths.push(p);
        }
        self.log(&format!(
            "synth: {} grids ({} compounds) in {}",
            grids.len(),
            self.cfg.synth.compounds.len(),
            self.cfg.grids.display()
        ));
        Ok(paths)
    }

    /// Inter-connection matrix of all compounds in the grid directory.
    pub fn analyze(&self) -> StageResult<InterconnectionMatrix> {
        let grids = self.grids()?;
        let m = build_matrix(&grids).at(Stage::Analyze)?;
        if m.k() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 compounds, found {}", m.k())))
                .at(Stage::Analyze);
        }
        let dir = self.layout.analysis();
        m.save_csv(&dir).at(Stage::Analyze)?;
        let img = triangle_heatmap(m.k(), &m.ssim, &m.pcc, 16).at(Stage::Analyze)?;
        img.save(&dir.join("matrix.ppm")).at(Stage::Analyze)?;
        let names = m.compounds.join(",");
        write(&dir.join("compounds.txt"), format!("{names}\n")).at(Stage::Analyze)?;
        self.log(&format!("analyze: {} compounds -> {}", m.k(), dir.display()));
        Ok(m)
    }

    /// Resolves `data.joined`, building the matrix when a selector asks for it.
    pub fn select(&self) -> StageResult<Selection> {
        let reference = self.cfg.reference.clone();
        let (joined, selector) = match &self.cfg.joined {
            Joined::List(list) => (list.clone(), list.join(",")),
            Joined::Auto { mode, k } => {
                let m = self.analyze()?;
                let picked = rank_compounds(&m, &reference, *k, *mode).at(Stage::Config)?;
                let mode = match mode {
                    crate::interconnection::RankMode::Most => "most",
                    crate::interconnection::RankMode::Least => "least",
                };
                (picked, format!("auto:{mode}:{k}"))
            }
        };
        Ok(Selection { reference, joined, selector })
    }

    fn load_selection(&self) -> StageResult<Selection> {
        let path = self.layout.selection();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e)).at(Stage::Config)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
            .at(Stage::Config)
    }

    /// Slices the selected compounds into aligned patch archives, splits them,
    /// and fits one transform per compound on training-split HR values only.
    pub fn fit_transforms(&self) -> StageResult<(Selection, TransformSet)> {
        let selection = self.select()?;
        let all = self.grids()?;
        let st = Stage::FitTransforms;
        let of = |c: &str| -> Vec<EmissionGrid> { all.iter().filter(|g| g.compound() == c).cloned().collect() };
        let ref_grids = of(&selection.reference);
        if ref_grids.is_empty() {
            return Err(Error::UnknownCompound(selection.reference.clone())).at(st);
        }
        let reference = PatchArchive::build(&ref_grids, self.cfg.min_nonzero_frac, None).at(st)?;
        let keep = reference.ids();
        let ids: Vec<u64> = keep.iter().copied().collect();
        let split = split_indices(ids.len(), &self.cfg.split).at(st)?;
        let mut transforms = TransformSet::new();
        let mut archives = vec![reference];
        for c in &selection.joined {
            let grids = of(c);
            if grids.is_empty() {
                return Err(Error::UnknownCompound(c.clone())).at(st);
            }
            archives.push(PatchArchive::build(&grids, 0.0, Some(&keep)).at(st)?);
        }
        for a in &archives {
            a.save(&self.layout.archive(&a.compound)).at(st)?;
            let mut values = Vec::with_capacity(split.train.len() * 64 * 64);
            for &pos in &split.train {
                let p = a.get(ids[pos]).ok_or_else(|| Error::MissingPatch {
                    patch_id: ids[pos],
                    compound: a.compound.clone(),
                });
                values.extend_from_slice(p.at(st)?.hr.as_slice());
            }
            transforms.insert(QuantileTransform::fit(values, self.cfg.n_quantiles, a.compound.clone()).at(st)?);
        }
        transforms.save(&self.layout.transforms()).at(st)?;
        write(&self.layout.selection(), to_json(&selection).at(st)?).at(st)?;
        self.log(&format!(
            "fit-transforms: {} patches per compound, compounds {}",
            ids.len(),
            selection.compounds().join(",")
        ));
        Ok((selection, transforms))
    }

    fn load_data(&self, stage: Stage) -> StageResult<LoadedData> {
        let selection = self.load_selection()?;
        let mut archives = BTreeMap::new();
        for c in selection.compounds() {
            archives.insert(c.clone(), PatchArchive::load(&self.layout.archive(&c)).at(stage)?);
        }
        let transforms = TransformSet::load(&self.layout.transforms()).at(stage)?;
        let samples = assemble_misr(&archives, &selection.reference, &selection.joined, &transforms).at(stage)?;
        let split = split_indices(samples.len(), &self.cfg.split).at(stage)?;
        Ok(LoadedData { selection, archives, transforms, samples, split })
    }

    /// Assembles the stacked samples and records the split.
    pub fn make_dataset(&self) -> StageResult<DatasetManifest> {
        let st = Stage::MakeDataset;
        let d = self.load_data(st)?;
        let manifest = DatasetManifest::new(
            &d.selection.reference,
            &d.selection.joined,
            &d.transforms,
            &self.cfg.split,
            &d.samples,
            &d.split,
        )
        .at(st)?;
        let path = self.layout.dataset_manifest();
        write(&path, to_json(&manifest).at(st)?).at(st)?;
        let (a, b, c) = d.split.sizes();
        self.log(&format!("make-dataset: {} samples, split {a}/{b}/{c}", d.samples.len()));
        Ok(manifest)
    }

    /// Loads data and checks it against the recorded dataset manifest.
    fn dataset(&self, stage: Stage) -> StageResult<LoadedData> {
        let d = self.load_data(stage)?;
        let recorded = DatasetManifest::load(&self.layout.dataset_manifest()).at(stage)?;
        let current = DatasetManifest::new(
            &d.selection.reference,
            &d.selection.joined,
            &d.transforms,
            &self.cfg.split,
            &d.samples,
            &d.split,
        )
        .at(stage)?;
        if recorded != current {
            return Err(Error::Config("dataset manifest is stale; rerun make-dataset".into())).at(stage);
        }
        Ok(d)
    }

    pub fn train(&self) -> StageResult<TrainSummary> {
        let st = Stage::Train;
        let d = self.dataset(st)?;
        let pick = |v: &[usize]| v.iter().map(|&i| d.samples[i].clone()).collect::<Vec<_>>();
        let (train_set, val_set) = (pick(&d.split.train), pick(&d.split.val));
        let config = self.cfg.model_config(d.selection.compounds().len());
        let model = SrModel::<f32>::init(config, self.cfg.seed).at(st)?;
        self.log(&format!(
            "train: C={} F={} B={} ({} parameters), {} train / {} val samples",
            config.in_channels,
            config.features,
            config.blocks,
            model.num_params(),
            train_set.len(),
            val_set.len()
        ));
        let outcome = train(model, &train_set, &val_set, &self.cfg.train, |row| {
            self.log(&format!(
                "  iter {:>7}  train {:.5}  val {:.5}  lr {:.3e}",
                row.iter, row.train_loss, row.val_loss, row.lr
            ))
        })
        .at(st)?;
        let ck = Checkpoint::from_model(&outcome.best_model, outcome.best_iter, Some(&outcome.optimizer));
        let path = self.layout.checkpoint();
        write(&path, ck.to_bytes()).at(st)?;
        write(&self.layout.history(), outcome.history_csv()).at(st)?;
        let summary = TrainSummary {
            iterations: outcome.iterations,
            best_iter: outcome.best_iter,
            best_val_loss: outcome.best_val_loss,
            final_train_loss: outcome.history.last().map_or(f64::NAN, |r| r.train_loss),
            stop: outcome.stop,
        };
        self.log(&format!(
            "train: stopped ({:?}) after {} iterations, best val {:.5} at {}",
            summary.stop, summary.iterations, summary.best_val_loss, summary.best_iter
        ));
        Ok(summary)
    }

    fn model(&self, stage: Stage) -> StageResult<SrModel<f32>> {
        Checkpoint::load(&self.layout.checkpoint()).at(stage)?.model::<f32>().at(stage)
    }

    /// Scores the trained model and the bicubic baseline on the test split.
    pub fn evaluate(&self) -> StageResult<(EvalReport, EvalReport)> {
        let st = Stage::Evaluate;
        let d = self.dataset(st)?;
        let model = self.model(st)?;
        let reference = &d.archives[&d.selection.reference];
        let phys = |id: u64| reference.get(id).map(|p| p.hr.clone());
        let tag = &self.cfg.tag;
        let report = evaluate(&model, &d.samples, &d.split.test, &d.transforms, Some(&phys), tag).at(st)?;
        let mut baseline =
            evaluate(&BicubicBaseline, &d.samples, &d.split.test, &d.transforms, Some(&phys), tag).at(st)?;
        // The baseline reads only the reference channel.
        baseline.channels = 1;
        baseline.compounds = vec![d.selection.reference.clone()];
        let dir = self.layout.report();
        report.save(&dir, "report").at(st)?;
        baseline.save(&dir, "baseline").at(st)?;
        let (csv, text) = comparison_table(&[("model", &report), ("bicubic", &baseline)]);
        write(&dir.join("comparison.csv"), csv).at(st)?;
        write(&dir.join("comparison.txt"), &text).at(st)?;
        self.log(&format!("evaluate:\n{}", text.trim_end()));
        Ok((report, baseline))
    }

    /// Figure triplets and histograms for the worst and best test samples.
    pub fn render(&self) -> StageResult<Vec<PathBuf>> {
        let st = Stage::Render;
        let d = self.dataset(st)?;
        let model = self.model(st)?;
        let reference = &d.archives[&d.selection.reference];
        let recs = reconstruct(&model, &d.samples, &d.split.test, &d.transforms).at(st)?;
        let mut scored = Vec::new();
        for rec in recs {
            let hr = reference.get(rec.patch_id).map_or(rec.hr.clone(), |p| p.hr.clone());
            if hr.max() == 0.0 {
                continue;
            }
            let nmse = crate::metrics::nmse_db(&hr, &rec.sr).at(st)?;
            scored.push((nmse, rec.patch_id, hr, rec.sr));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let n = self.cfg.figures.min(scored.len());
        let mut picks: Vec<(String, usize)> = (0..n).map(|i| (format!("worst{}", i + 1), i)).collect();
        for i in 0..n {
            let k = scored.len() - 1 - i;
            if picks.iter().all(|p| p.1 != k) {
                picks.push((format!("best{}", i + 1), k));
            }
        }
        let dir = self.layout.figures();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e)).at(st)?;
        let mut paths = Vec::new();
        for (label, k) in picks {
            let (nmse, id, hr, sr) = &scored[k];
            let stem = dir.join(format!("{label}_{id:06}"));
            paths.extend(self.figure_set(&stem, hr, sr).at(st)?);
            self.log(&format!("render: {label} patch {id} nmse {nmse:.2} dB"));
        }
        Ok(paths)
    }

    fn figure_set(&self, stem: &Path, hr: &Array2, sr: &Array2) -> Result<Vec<PathBuf>> {
        let name = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        let top = hr.max().max(sr.max());
        let err = error_map(hr, sr)?;
        let mut out = Vec::new();
        for (suffix, a, range) in [("_hr.ppm", hr, (0.0, top)), ("_sr.ppm", sr, (0.0, top)), ("_err.ppm", &err, (0.0, err.max()))] {
            let p = name(suffix);
            heatmap(a, Palette::Sequential, range, 4)?.save(&p)?;
            out.push(p);
        }
        // Histogram over log10 of positive values; zeros are counted separately.
        let logs = |a: &Array2| -> Vec<f64> { a.as_slice().iter().filter(|&&v| v > 0.0).map(|v| v.log10()).collect() };
        let (lh, ls) = (logs(hr), logs(sr));
        let lo = lh.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = lh.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
        let bins = self.cfg.hist_bins;
        let (h_hr, h_sr) = (histogram(&lh, bins, (lo, hi))?, histogram(&ls, bins, (lo, hi))?);
        let mut csv = String::from("log10_lo,log10_hi,hr,sr\n");
        let width = (hi - lo) / bins as f64;
        for k in 0..bins {
            let a = lo + k as f64 * width;
            csv.push_str(&format!("{a},{},{},{}\n", a + width, h_hr.counts[k], h_sr.counts[k]));
        }
        let zeros = |a: &Array2| a.as_slice().iter().filter(|&&v| v <= 0.0).count();
        csv.push_str(&format!("underflow,,{},{}\n", h_hr.underflow, h_sr.underflow));
        csv.push_str(&format!("overflow,,{},{}\n", h_hr.overflow, h_sr.overflow));
        csv.push_str(&format!("zero,,{},{}\n", zeros(hr), zeros(sr)));
        let p = name("_hist.csv");
        write(&p, csv)?;
        out.push(p);
        let p = name("_hist.ppm");
        histogram_chart(&h_hr, &h_sr, 96, 3)?.save(&p)?;
        out.push(p);
        Ok(out)
    }

    /// Hashes every file under the run directory except input grids and the
    /// manifest itself, and writes the run manifest.
    pub fn write_manifest(&self, selection: &Selection) -> StageResult<BTreeMap<String, String>> {
        let st = Stage::Manifest;
        let mut files = Vec::new();
        files_under(&self.layout.root, &mut files).at(st)?;
        let manifest_path = self.layout.run_manifest();
        let mut artifacts = BTreeMap::new();
        for f in files {
            if f == manifest_path || f.starts_with(&self.cfg.grids) {
                continue;
            }
            let bytes = fs::read(&f).map_err(|e| Error::io(&f, e)).at(st)?;
            let rel = f.strip_prefix(&self.layout.root).unwrap_or(&f);
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            artifacts.insert(key, sha256_hex(&bytes));
        }
        let inputs: BTreeSet<String> = selection.compounds().into_iter().collect();
        let doc = serde_json::json!({
            "seed": self.cfg.seed,
            "reference": selection.reference,
            "joined": selection.joined,
            "selector": selection.selector,
            "compounds": inputs,
            "artifacts": artifacts,
        });
        write(&manifest_path, to_json(&doc).at(st)?).at(st)?;
        Ok(artifacts)
    }

    /// fit-transforms, make-dataset, train, evaluate, render, then the run manifest.
    pub fn run(&self) -> StageResult<RunSummary> {
        let (selection, _) = self.fit_transforms()?;
        self.make_dataset()?;
        let train = self.train()?;
        let (report, baseline) = self.evaluate()?;
        self.render()?;
        let artifacts = self.write_manifest(&selection)?;
        self.log(&format!("run: {} artifacts listed in {}", artifacts.len(), self.layout.run_manifest().display()));
        Ok(RunSummary { selection, train, report, baseline, artifacts })
    }
}
