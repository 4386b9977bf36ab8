//! Non-overlapping HR patch tiling and bicubic degradation to LR.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::array::Array2;
use crate::error::{Error, Result};
use crate::grid::{load_grid, parse_date, save_grid, EmissionGrid, GridFormat};

pub const HR_SIZE: usize = 64;
pub const SCALE: usize = 4;
pub const LR_SIZE: usize = HR_SIZE / SCALE;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub patch_id: u64,
    pub compound: String,
    pub date: NaiveDate,
    /// (row0, col0) of the patch's top-left cell in the source grid.
    pub origin: (usize, usize),
    pub hr: Array2,
    pub lr: Option<Array2>,
}

impl PatchRecord {
    pub fn lr(&self) -> Result<&Array2> {
        self.lr.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("patch {} has not been degraded", self.patch_id))
        })
    }

    pub fn nonzero_fraction(&self) -> f64 {
        let nz = self.hr.as_slice().iter().filter(|&&v| v != 0.0).count();
        nz as f64 / self.hr.len() as f64
    }
}

/// Number of full tiles along each axis.
pub fn tile_counts(rows: usize, cols: usize, patch_size: usize) -> (usize, usize) {
    (rows / patch_size, cols / patch_size)
}

/// Tiles `grid` from the top-left corner; remainder rows/columns are dropped.
///
/// `patch_id` is the row-major tile index over the full tiling, so patches
/// keep the same id across compounds even when some are filtered out.
pub fn slice_patches(
    grid: &EmissionGrid,
    patch_size: usize,
    min_nonzero_frac: f64,
) -> Result<Vec<PatchRecord>> {
    if patch_size == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    if grid.rows() < patch_size || grid.cols() < patch_size {
        return Err(Error::Shape(format!(
            "grid {}x{} is smaller than one {patch_size}x{patch_size} patch",
            grid.rows(),
            grid.cols()
        )));
    }
    let (tr, tc) = tile_counts(grid.rows(), grid.cols(), patch_size);
    let mut out = Vec::with_capacity(tr * tc);
    for i in 0..tr {
        for j in 0..tc {
            let origin = (i * patch_size, j * patch_size);
            let hr = grid.values().window(origin.0, origin.1, patch_size, patch_size);
            let rec = PatchRecord {
                patch_id: (i * tc + j) as u64,
                compound: grid.compound().to_string(),
                date: grid.date(),
                origin,
                hr,
                lr: None,
            };
            if min_nonzero_frac > 0.0 && rec.nonzero_fraction() < min_nonzero_frac {
                continue;
            }
            out.push(rec);
        }
    }
    Ok(out)
}

/// Catmull-Rom cubic convolution kernel (a = -0.5).
#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Half-sample symmetric reflection: -1 -> 0, n -> n-1.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Four taps (index, weight) for sampling position `x` along an axis of length `n`.
#[inline]
fn taps(x: f64, n: usize) -> [(usize, f64); 4] {
    let base = x.floor();
    let t = x - base;
    let b = base as isize;
    [
        (reflect(b - 1, n), cubic_kernel(1.0 + t)),
        (reflect(b, n), cubic_kernel(t)),
        (reflect(b + 1, n), cubic_kernel(1.0 - t)),
        (reflect(b + 2, n), cubic_kernel(2.0 - t)),
    ]
}

/// Separable resampling: output sample `k` along an axis reads source position `pos(k)`.
fn resample(
    src: &Array2,
    out_rows: usize,
    out_cols: usize,
    row_pos: impl Fn(usize) -> f64,
    col_pos: impl Fn(usize) -> f64,
) -> Array2 {
    let (rows, cols) = src.dims();
    // columns first
    let mut tmp = Array2::zeros(rows, out_cols);
    let col_taps: Vec<_> = (0..out_cols).map(|j| taps(col_pos(j), cols)).collect();
    for r in 0..rows {
        let row = src.row(r);
        for (j, tj) in col_taps.iter().enumerate() {
            let v: f64 = tj.iter().map(|&(c, w)| w * row[c]).sum();
            tmp.set(r, j, v);
        }
    }
    let mut out = Array2::zeros(out_rows, out_cols);
    for i in 0..out_rows {
        let ti = taps(row_pos(i), rows);
        for j in 0..out_cols {
            let v: f64 = ti.iter().map(|&(r, w)| w * tmp.get(r, j)).sum();
            out.set(i, j, v);
        }
    }
    out
}

/// Bicubic downsampling by an integer factor.
///
/// LR sample `i` evaluates the Catmull-Rom interpolant of the HR field at
/// `x = (i + 0.5) * alpha - 0.5`; negative ringing is clamped to zero.
pub fn downsample_bicubic(hr: &Array2, alpha: usize) -> Result<Array2> {
    if alpha == 0 || hr.rows() % alpha != 0 || hr.cols() % alpha != 0 {
        return Err(Error::Shape(format!(
            "{}x{} is not divisible by scale {alpha}",
            hr.rows(),
            hr.cols()
        )));
    }
    let a = alpha as f64;
    let pos = |k: usize| (k as f64 + 0.5) * a - 0.5;
    let out = resample(hr, hr.rows() / alpha, hr.cols() / alpha, pos, pos);
    Ok(out.map(|v| v.max(0.0)))
}

/// Bicubic upsampling by an integer factor (pixel-center aligned), clamped to >= 0.
pub fn upsample_bicubic(lr: &Array2, alpha: usize) -> Result<Array2> {
    if alpha == 0 {
        return Err(Error::InvalidArgument("scale must be positive".into()));
    }
    let a = alpha as f64;
    let pos = |k: usize| (k as f64 + 0.5) / a - 0.5;
    let out = resample(lr, lr.rows() * alpha, lr.cols() * alpha, pos, pos);
    Ok(out.map(|v| v.max(0.0)))
}

/// Fills `lr` on every patch.
pub fn degrade_all(patches: &mut [PatchRecord], alpha: usize) -> Result<()> {
    for p in patches.iter_mut() {
        p.lr = Some(downsample_bicubic(&p.hr, alpha)?);
    }
    Ok(())
}

/// All patches of one compound, possibly spanning several dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchArchive {
    pub compound: String,
    pub lat_res: f64,
    pub lon_res: f64,
    pub patches: Vec<PatchRecord>,
}

impl PatchArchive {
    /// Tiles every grid (one compound, any number of dates) and degrades the patches.
    ///
    /// Grids are ordered by date; the patch id of a tile on the `d`-th date is
    /// `d * tiles_per_grid + tile_index`. `keep` restricts the archive to the
    /// given ids (used to align auxiliary compounds with a filtered reference).
    pub fn build(
        grids: &[EmissionGrid],
        min_nonzero_frac: f64,
        keep: Option<&std::collections::BTreeSet<u64>>,
    ) -> Result<Self> {
        let first = grids
            .first()
            .ok_or_else(|| Error::InvalidArgument("no grids to slice".into()))?;
        let mut sorted: Vec<&EmissionGrid> = grids.iter().collect();
        sorted.sort_by_key(|g| g.date());
        let (tr, tc) = tile_counts(first.rows(), first.cols(), HR_SIZE);
        let per_grid = (tr * tc) as u64;
        let mut patches = Vec::new();
        for (d, g) in sorted.iter().enumerate() {
            if g.compound() != first.compound() {
                return Err(Error::InvalidArgument(format!(
                    "archive mixes compounds {} and {}",
                    first.compound(),
                    g.compound()
                )));
            }
            if g.values().dims() != first.values().dims() {
                return Err(Error::Shape("grids of one archive must share dims".into()));
            }
            for mut p in slice_patches(g, HR_SIZE, min_nonzero_frac)? {
                p.patch_id += d as u64 * per_grid;
                if keep.is_some_and(|k| !k.contains(&p.patch_id)) {
                    continue;
                }
                p.lr = Some(downsample_bicubic(&p.hr, SCALE)?);
                patches.push(p);
            }
        }
        Ok(Self {
            compound: first.compound().to_string(),
            lat_res: first.lat_res(),
            lon_res: first.lon_res(),
            patches,
        })
    }

    pub fn get(&self, patch_id: u64) -> Option<&PatchRecord> {
        self.patches
            .binary_search_by_key(&patch_id, |p| p.patch_id)
            .ok()
            .map(|i| &self.patches[i])
    }

    pub fn ids(&self) -> std::collections::BTreeSet<u64> {
        self.patches.iter().map(|p| p.patch_id).collect()
    }

    /// Writes `hr_<id>.bgrid`, `lr_<id>.bgrid` and `manifest.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::from("patch_id,compound,date,row0,col0\n");
        for p in &self.patches {
            let hr = EmissionGrid::new(&p.compound, p.date, self.lat_res, self.lon_res, p.hr.clone())?;
            save_grid(&hr, dir.join(format!("hr_{:06}.bgrid", p.patch_id)), GridFormat::Bgrid)?;
            if let Some(lr) = &p.lr {
                let f = SCALE as f64;
                let lr =
                    EmissionGrid::new(&p.compound, p.date, self.lat_res * f, self.lon_res * f, lr.clone())?;
                save_grid(&lr, dir.join(format!("lr_{:06}.bgrid", p.patch_id)), GridFormat::Bgrid)?;
            }
            manifest.push_str(&format!(
                "{},{},{},{},{}\n",
                p.patch_id,
                p.compound,
                p.date.format("%Y-%m-%d"),
                p.origin.0,
                p.origin.1
            ));
        }
        let path = dir.join("manifest.csv");
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(manifest.as_bytes()))
            .map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut patches = Vec::new();
        let (mut lat_res, mut lon_res, mut compound) = (1.0, 1.0, None::<String>);
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Format(format!("manifest line {}: expected 5 fields", n + 1)));
            }
            let bad = |what: &str| Error::Format(format!("manifest line {}: bad {what}", n + 1));
            let patch_id: u64 = f[0].parse().map_err(|_| bad("patch_id"))?;
            let origin = (
                f[3].parse().map_err(|_| bad("row0"))?,
                f[4].parse().map_err(|_| bad("col0"))?,
            );
            let hr = load_grid(dir.join(format!("hr_{patch_id:06}.bgrid")), GridFormat::Bgrid)?;
            let lr_path = dir.join(format!("lr_{patch_id:06}.bgrid"));
            let lr = if lr_path.exists() {
                Some(load_grid(lr_path, GridFormat::Bgrid)?.values().clone())
            } else {
                None
            };
            lat_res = hr.lat_res();
            lon_res = hr.lon_res();
            compound.get_or_insert_with(|| f[1].to_string());
            patches.push(PatchRecord {
                patch_id,
                compound: f[1].to_string(),
                date: parse_date(f[2])?,
                origin,
                hr: hr.values().clone(),
                lr,
            });
        }
        patches.sort_by_key(|p| p.patch_id);
        let compound =
            compound.ok_or_else(|| Error::Format(format!("empty manifest {}", path.display())))?;
        Ok(Self {
            compound,
            lat_res,
            lon_res,
            patches,
        })
    }
}
