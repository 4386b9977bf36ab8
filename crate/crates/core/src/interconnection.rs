//! Spatial inter-connection between compounds: Pearson correlation, SSIM, and
//! the pairwise matrix used to pick auxiliary compounds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use crate::array::Array2;
use crate::error::{Error, Result};
use crate::grid::EmissionGrid;

/// Pearson correlation of the flattened arrays; `None` when either input is constant.
pub fn pcc(a: &Array2, b: &Array2) -> Result<Option<f64>> {
    a.same_dims(b)?;
    let (ma, mb) = (a.mean(), b.mean());
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl SsimParams {
    pub fn with_range(data_range: f64) -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range,
        }
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        Self::with_range(1.0)
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(window: usize, sigma: f64) -> Vec<f64> {
    let c = (window as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..window)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" correlation with `taps` along both axes.
fn filter_valid(src: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let w = taps.len();
    let (orows, ocols) = (rows - w + 1, cols - w + 1);
    let mut tmp = vec![0.0; rows * ocols];
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for c in 0..ocols {
            tmp[r * ocols + c] = taps.iter().zip(&row[c..c + w]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; orows * ocols];
    for r in 0..orows {
        for c in 0..ocols {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * tmp[(r + k) * ocols + c];
            }
            out[r * ocols + c] = acc;
        }
    }
    out
}

/// Gaussian-weighted SSIM averaged over every valid window position.
pub fn ssim(a: &Array2, b: &Array2, p: &SsimParams) -> Result<f64> {
    a.same_dims(b)?;
    if p.window == 0 || a.rows() < p.window || a.cols() < p.window {
        return Err(Error::Shape(format!(
            "window {} larger than image {}x{}",
            p.window,
            a.rows(),
            a.cols()
        )));
    }
    if !(p.data_range > 0.0) || !(p.sigma > 0.0) {
        return Err(Error::InvalidArgument("data range and sigma must be positive".into()));
    }
    let (rows, cols) = a.dims();
    let taps = gaussian_taps(p.window, p.sigma);
    let (x, y) = (a.as_slice(), b.as_slice());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(u, v)| u * v).collect();
    let mx = filter_valid(x, rows, cols, &taps);
    let my = filter_valid(y, rows, cols, &taps);
    let exx = filter_valid(&xx, rows, cols, &taps);
    let eyy = filter_valid(&yy, rows, cols, &taps);
    let exy = filter_valid(&xy, rows, cols, &taps);
    let c1 = (p.k1 * p.data_range).powi(2);
    let c2 = (p.k2 * p.data_range).powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        total += ssim_term(mx[i], my[i], exx[i], eyy[i], exy[i], c1, c2);
    }
    Ok(total / mx.len() as f64)
}

#[inline]
pub(crate) fn ssim_term(mx: f64, my: f64, exx: f64, eyy: f64, exy: f64, c1: f64, c2: f64) -> f64 {
    let vx = exx - mx * mx;
    let vy = eyy - my * my;
    let cxy = exy - mx * my;
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Symmetric K x K metric matrices; missing cells are NaN with `n_pairs == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectionMatrix {
    pub compounds: Vec<String>,
    pub ssim: Vec<f64>,
    pub pcc: Vec<f64>,
    pub n_pairs: Vec<usize>,
}

impl InterconnectionMatrix {
    pub fn k(&self) -> usize {
        self.compounds.len()
    }

    pub fn index_of(&self, compound: &str) -> Result<usize> {
        self.compounds
            .iter()
            .position(|c| c == compound)
            .ok_or_else(|| Error::UnknownCompound(compound.to_string()))
    }

    pub fn ssim_at(&self, i: usize, j: usize) -> f64 {
        self.ssim[i * self.k() + j]
    }

    pub fn pcc_at(&self, i: usize, j: usize) -> f64 {
        self.pcc[i * self.k() + j]
    }

    pub fn ssim_csv(&self) -> String {
        self.csv(&self.ssim)
    }

    pub fn pcc_csv(&self) -> String {
        self.csv(&self.pcc)
    }

    fn csv(&self, values: &[f64]) -> String {
        let mut out = String::from("compound");
        for c in &self.compounds {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (i, c) in self.compounds.iter().enumerate() {
            out.push_str(c);
            for j in 0..self.k() {
                let v = values[i * self.k() + j];
                if v.is_nan() {
                    out.push(',');
                } else {
                    let _ = write!(out, ",{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `ssim.csv` and `pcc.csv` into `dir`.
    pub fn save_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [("ssim.csv", self.ssim_csv()), ("pcc.csv", self.pcc_csv())] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Averages PCC (raw values) and SSIM (per-map min-max normalized, L = 1) over
/// every date shared by each pair of compounds.
pub fn build_matrix(maps: &[EmissionGrid]) -> Result<InterconnectionMatrix> {
    let mut by_compound: BTreeMap<&str, BTreeMap<NaiveDate, &EmissionGrid>> = BTreeMap::new();
    for g in maps {
        if by_compound.entry(g.compound()).or_default().insert(g.date(), g).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate map for {} on {}",
                g.compound(),
                g.date()
            )));
        }
    }
    if by_compound.is_empty() {
        return Err(Error::InvalidArgument("no maps supplied".into()));
    }
    let compounds: Vec<String> = by_compound.keys().map(|s| s.to_string()).collect();
    let k = compounds.len();
    let mut ssim_m = vec![f64::NAN; k * k];
    let mut pcc_m = vec![f64::NAN; k * k];
    let mut n_pairs = vec![0usize; k * k];
    let params = SsimParams::default();
    let tables: Vec<_> = by_compound.values().collect();
    for i in 0..k {
        ssim_m[i * k + i] = 1.0;
        pcc_m[i * k + i] = 1.0;
        n_pairs[i * k + i] = tables[i].len();
        for j in i + 1..k {
            let (mut s_sum, mut p_sum, mut s_n, mut p_n) = (0.0, 0.0, 0usize, 0usize);
            for (date, gi) in tables[i].iter() {
                let Some(gj) = tables[j].get(date) else { continue };
                let (a, b) = (gi.values(), gj.values());
                s_sum += ssim(&a.min_max_normalized(), &b.min_max_normalized(), &params)?;
                s_n += 1;
                if let Some(r) = pcc(a, b)? {
                    p_sum += r;
                    p_n += 1;
                }
            }
            let s = if s_n > 0 { s_sum / s_n as f64 } else { f64::NAN };
            let p = if p_n > 0 { p_sum / p_n as f64 } else { f64::NAN };
            for (r, c) in [(i, j), (j, i)] {
                ssim_m[r * k + c] = s;
                pcc_m[r * k + c] = p;
                n_pairs[r * k + c] = s_n;
            }
        }
    }
    Ok(InterconnectionMatrix {
        compounds,
        ssim: ssim_m,
        pcc: pcc_m,
        n_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Most,
    Least,
}

impl std::str::FromStr for RankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "most" => Ok(RankMode::Most),
            "least" => Ok(RankMode::Least),
            other => Err(Error::InvalidArgument(format!("rank mode {other}"))),
        }
    }
}

/// The `k` compounds most (or least) similar to `reference` by SSIM.
///
/// Ties go to the lexicographically smaller tag; missing cells sort last.
pub fn rank_compounds(
    m: &InterconnectionMatrix,
    reference: &str,
    k: usize,
    mode: RankMode,
) -> Result<Vec<String>> {
    let r = m.index_of(reference)?;
    if k + 1 > m.k() {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {k} of {} other compounds",
            m.k() - 1
        )));
    }
    let mut others: Vec<(f64, &String)> = (0..m.k())
        .filter(|&j| j != r)
        .map(|j| (m.ssim_at(r, j), &m.compounds[j]))
        .collect();
    others.sort_by(|a, b| {
        let ord = match (a.0.is_nan(), b.0.is_nan()) {
            (true, true) => std::cmp::Ordering::Equal,
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => match mode {
                RankMode::Most => b.0.total_cmp(&a.0),
                RankMode::Least => a.0.total_cmp(&b.0),
            },
        };
        ord.then_with(|| a.1.cmp(b.1))
    });
    Ok(others.into_iter().take(k).map(|(_, c)| c.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2 {
        let mut r = SplitMix64::new(seed);
        Array2::from_fn(rows, cols, |_, _| r.next_f64())
    }

    fn grid(tag: &str, day: u32, values: Array2) -> EmissionGrid {
        let d = NaiveDate::from_ymd_opt(2020, 1, day).unwrap();
        EmissionGrid::new(tag, d, 0.25, 0.25, values).unwrap()
    }

    #[test]
    fn pcc_self_and_negation() {
        let a = random(8, 8, 1);
        assert_eq!(pcc(&a, &a).unwrap(), Some(1.0));
        let neg = a.map(|v| 1.0 - v);
        assert!((pcc(&a, &neg).unwrap().unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pcc_hand_computed() {
        let a = Array2::from_vec(3, 3, vec![1., 2., 3., 4., 5., 6., 7., 8., 10.]).unwrap();
        let b = Array2::from_vec(3, 3, vec![2., 1., 4., 3., 6., 5., 8., 7., 9.]).unwrap();
        // means: a = 46/9, b = 5
        let ma = 46.0 / 9.0;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            sab += (x - ma) * (y - 5.0);
            saa += (x - ma) * (x - ma);
            sbb += (y - 5.0) * (y - 5.0);
        }
        let expected = sab / (saa.sqrt() * sbb.sqrt());
        assert!((pcc(&a, &b).unwrap().unwrap() - expected).abs() <= 1e-12);
    }

    #[test]
    fn pcc_constant_is_missing() {
        let a = Array2::filled(4, 4, 2.0);
        assert_eq!(pcc(&a, &random(4, 4, 3)).unwrap(), None);
    }

    #[test]
    fn ssim_identity_is_exact() {
        let a = random(32, 32, 5);
        assert_eq!(ssim(&a, &a, &SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_penalizes_shift() {
        let a = random(16, 16, 6);
        let shifted = a.map(|v| v + 1.0);
        assert!(ssim(&a, &shifted, &SsimParams::default()).unwrap() < 1.0);
    }

    #[test]
    fn ssim_window_too_large() {
        let a = random(10, 20, 7);
        assert!(ssim(&a, &a, &SsimParams::default()).is_err());
    }

    #[test]
    fn taps_sum_to_one() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }

    #[test]
    fn single_compound_matrix() {
        let m = build_matrix(&[grid("a", 1, random(16, 16, 1))]).unwrap();
        assert_eq!(m.ssim, vec![1.0]);
        assert_eq!(m.pcc, vec![1.0]);
    }

    #[test]
    fn duplicated_compound_is_fully_connected() {
        let v = random(16, 16, 2);
        let m = build_matrix(&[grid("a", 1, v.clone()), grid("b", 1, v)]).unwrap();
        assert_eq!(m.ssim_at(0, 1), 1.0);
        assert_eq!(m.pcc_at(1, 0), 1.0);
        assert_eq!(m.n_pairs[1], 1);
    }

    #[test]
    fn no_shared_dates_leaves_missing_cell() {
        let m = build_matrix(&[grid("a", 1, random(16, 16, 1)), grid("b", 2, random(16, 16, 2))])
            .unwrap();
        assert!(m.ssim_at(0, 1).is_nan());
        assert_eq!(m.n_pairs[1], 0);
        assert!(m.ssim_csv().contains("a,1,\n"));
    }

    fn synthetic_matrix(values: &[(&str, f64)]) -> InterconnectionMatrix {
        let k = values.len() + 1;
        let mut compounds = vec!["ref".to_string()];
        compounds.extend(values.iter().map(|(c, _)| c.to_string()));
        let mut ssim = vec![1.0; k * k];
        for (j, (_, v)) in values.iter().enumerate() {
            ssim[j + 1] = *v;
            ssim[(j + 1) * k] = *v;
        }
        InterconnectionMatrix {
            compounds,
            pcc: ssim.clone(),
            ssim,
            n_pairs: vec![1; k * k],
        }
    }

    #[test]
    fn ranking_matches_sort_oracle() {
        let m = synthetic_matrix(&[("c", 0.3), ("a", 0.9), ("d", 0.1), ("b", 0.5)]);
        let most = rank_compounds(&m, "ref", 4, RankMode::Most).unwrap();
        assert_eq!(most, vec!["a", "b", "c", "d"]);
        let least = rank_compounds(&m, "ref", 2, RankMode::Least).unwrap();
        assert_eq!(least, vec!["d", "c"]);
    }

    #[test]
    fn ranking_ties_break_lexicographically() {
        let m = synthetic_matrix(&[("z", 0.5), ("y", 0.5), ("x", 0.7)]);
        assert_eq!(rank_compounds(&m, "ref", 3, RankMode::Most).unwrap(), vec!["x", "y", "z"]);
        assert_eq!(rank_compounds(&m, "ref", 3, RankMode::Least).unwrap(), vec!["y", "z", "x"]);
    }

    #[test]
    fn ranking_errors() {
        let m = synthetic_matrix(&[("a", 0.5)]);
        assert!(matches!(rank_compounds(&m, "nope", 1, RankMode::Most), Err(Error::UnknownCompound(_))));
        assert!(rank_compounds(&m, "ref", 2, RankMode::Most).is_err());
    }
}
