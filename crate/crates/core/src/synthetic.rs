//! Synthetic multi-compound emission archives with controllable correlation,
//! sparsity and dynamic range.
//!
//! Each compound's latent field is `rho * shared + sqrt(1 - rho^2) * own`,
//! where `shared` is a common smooth Gaussian field. Emissions are
//! `1e-9 * exp(gamma * (Phi(latent) - 1))` kg m^-2 s^-1, with `Phi` the standard
//! normal CDF, zeroed below the latent's `q`-quantile and floored at 1e-30.
//! Nonzero values are therefore log-uniform over `gamma` nepers below 1e-9.
//!
//! A compound in [`Coupling::Detail`] mode replaces `shared` with the
//! standardized high-frequency residual `shared - blur(shared, detail_scale)`
//! of the shared field, displaced by a sub-patch offset of `detail_shift`
//! cells. Successive detail compounds are displaced along columns, rows, then
//! both. With a shift of half the downsampling factor their LR maps sample the
//! fine structure of a `rho = 1` reference between the reference's own LR
//! sample positions.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::array::Array2;
use crate::error::{Error, Result};
use crate::grid::EmissionGrid;
use crate::patch::reflect;
use crate::rng::SplitMix64;

pub const EMISSION_MAX: f64 = 1e-9;
pub const EMISSION_FLOOR: f64 = 1e-30;

/// Unit displacements (rows, cols) of successive `Detail` compounds.
const DETAIL_OFFSETS: [(usize, usize); 3] = [(0, 1), (1, 0), (1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coupling {
    /// Shares the smooth common field.
    Field,
    /// Shares the high-frequency residual of the common field.
    Detail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCompound {
    pub tag: String,
    pub rho: f64,
    pub sparsity: f64,
    pub gamma: f64,
    pub coupling: Coupling,
}

impl SynthCompound {
    pub fn new(tag: &str, rho: f64, sparsity: f64, gamma: f64) -> Self {
        Self {
            tag: tag.to_string(),
            rho,
            sparsity,
            gamma,
            coupling: Coupling::Field,
        }
    }

    pub fn detail(mut self) -> Self {
        self.coupling = Coupling::Detail;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub compounds: Vec<SynthCompound>,
    pub correlation_length: f64,
    /// Blur scale defining the high-frequency residual for `Detail` coupling.
    pub detail_scale: f64,
    /// Displacement in cells of the residual seen by `Detail` compounds.
    pub detail_shift: usize,
    pub shared_seed: u64,
    pub compound_seed: u64,
    pub dates: Vec<NaiveDate>,
    pub resolution: f64,
}

impl SynthSpec {
    pub fn new(rows: usize, cols: usize, compounds: Vec<SynthCompound>) -> Self {
        Self {
            rows,
            cols,
            compounds,
            correlation_length: 2.0,
            detail_scale: 2.0,
            detail_shift: 2,
            shared_seed: 1,
            compound_seed: 2,
            dates: vec![NaiveDate::from_ymd_opt(2019, 7, 1).expect("valid date")],
            resolution: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 8 || self.cols < 8 {
            return Err(Error::InvalidArgument(format!(
                "synthetic grid must be at least 8x8, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.correlation_length >= 1.0) || !(self.detail_scale > 0.0) {
            return Err(Error::InvalidArgument("correlation length must be >= 1".into()));
        }
        if self.compounds.is_empty() || self.dates.is_empty() {
            return Err(Error::InvalidArgument("need at least one compound and date".into()));
        }
        for c in &self.compounds {
            if !(0.0..=1.0).contains(&c.rho) || !(0.0..1.0).contains(&c.sparsity) || !(c.gamma > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "compound {}: need rho in [0,1], q in [0,1), gamma > 0",
                    c.tag
                )));
            }
        }
        let mut tags: Vec<&str> = self.compounds.iter().map(|c| c.tag.as_str()).collect();
        tags.sort_unstable();
        tags.dedup();
        if tags.len() != self.compounds.len() {
            return Err(Error::InvalidArgument("duplicate compound tags".into()));
        }
        Ok(())
    }
}

/// Separable Gaussian blur with half-sample reflective borders.
pub fn gaussian_blur(src: &Array2, sigma: f64) -> Array2 {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.into_iter().map(|t| t / norm).collect();
    let (rows, cols) = src.dims();
    let mut tmp = Array2::zeros(rows, cols);
    for r in 0..rows {
        let row = src.row(r);
        for c in 0..cols {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[reflect(c as isize + k as isize - radius, cols)];
            }
            tmp.set(r, c, acc);
        }
    }
    let mut out = Array2::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * tmp.get(reflect(r as isize + k as isize - radius, rows), c);
            }
            out.set(r, c, acc);
        }
    }
    out
}

/// Shifts to zero mean and scales to unit (population) variance.
pub fn standardize(a: &Array2) -> Array2 {
    let m = a.mean();
    let var = a.as_slice().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / a.len() as f64;
    let sd = var.sqrt();
    if sd > 0.0 {
        a.map(|v| (v - m) / sd)
    } else {
        a.map(|v| v - m)
    }
}

/// Smooth standardized random field: Gaussian-blurred white noise.
pub fn gen_field(seed: u64, rows: usize, cols: usize, correlation_length: f64) -> Result<Array2> {
    if rows < 8 || cols < 8 {
        return Err(Error::InvalidArgument(format!("field must be at least 8x8, got {rows}x{cols}")));
    }
    if !(correlation_length >= 1.0) {
        return Err(Error::InvalidArgument("correlation length must be >= 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let noise = Array2::from_fn(rows, cols, |_, _| rng.next_normal());
    Ok(standardize(&gaussian_blur(&noise, correlation_length)))
}

/// Latent fields, one per compound, for the date at `date_index`.
pub fn gen_latents(spec: &SynthSpec, date_index: usize) -> Result<Vec<Array2>> {
    spec.validate()?;
    let d = date_index as u64;
    let shared = gen_field(
        SplitMix64::derive(spec.shared_seed, d).next_u64(),
        spec.rows,
        spec.cols,
        spec.correlation_length,
    )?;
    let detail = if spec.compounds.iter().any(|c| c.coupling == Coupling::Detail) {
        let smooth = gaussian_blur(&shared, spec.detail_scale);
        let resid = Array2::from_vec(
            spec.rows,
            spec.cols,
            shared.as_slice().iter().zip(smooth.as_slice()).map(|(a, b)| a - b).collect(),
        )?;
        Some(resid)
    } else {
        None
    };
    let mut n_detail = 0;
    spec.compounds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let shifted;
            let common = match c.coupling {
                Coupling::Field => &shared,
                Coupling::Detail => {
                    let (dy, dx) = DETAIL_OFFSETS[n_detail % DETAIL_OFFSETS.len()];
                    n_detail += 1;
                    let resid = detail.as_ref().expect("computed above");
                    let (sy, sx) = ((dy * spec.detail_shift) as isize, (dx * spec.detail_shift) as isize);
                    shifted = standardize(&Array2::from_fn(spec.rows, spec.cols, |r, col| {
                        resid.get(reflect(r as isize + sy, spec.rows), reflect(col as isize + sx, spec.cols))
                    }));
                    &shifted
                }
            };
            if c.rho == 1.0 {
                return Ok(common.clone());
            }
            let seed = SplitMix64::derive(spec.compound_seed, (i as u64) << 32 | d).next_u64();
            let own = gen_field(seed, spec.rows, spec.cols, spec.correlation_length)?;
            let w = (1.0 - c.rho * c.rho).sqrt();
            Array2::from_vec(
                spec.rows,
                spec.cols,
                common.as_slice().iter().zip(own.as_slice()).map(|(s, o)| c.rho * s + w * o).collect(),
            )
        })
        .collect()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Maps a latent field to emissions: log-uniform link, quantile threshold, physical scaling.
pub fn emissions_from_latent(latent: &Array2, sparsity: f64, gamma: f64) -> Array2 {
    let threshold = if sparsity > 0.0 {
        let mut sorted = latent.as_slice().to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = ((sparsity * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
        Some(sorted[k])
    } else {
        None
    };
    latent.map(|g| {
        if threshold.is_some_and(|t| g < t) {
            0.0
        } else {
            (EMISSION_MAX * (gamma * (normal_cdf(g) - 1.0)).exp()).max(EMISSION_FLOOR)
        }
    })
}

/// One grid per (compound, date), compounds in spec order within each date.
pub fn gen_compound_set(spec: &SynthSpec) -> Result<Vec<EmissionGrid>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.compounds.len() * spec.dates.len());
    for (d, date) in spec.dates.iter().enumerate() {
        for (c, latent) in spec.compounds.iter().zip(gen_latents(spec, d)?) {
            let values = emissions_from_latent(&latent, c.sparsity, c.gamma);
            out.push(EmissionGrid::new(&c.tag, *date, spec.resolution, spec.resolution, values)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interconnection::pcc;

    fn autocorr(a: &Array2, lag: usize) -> f64 {
        let (rows, cols) = a.dims();
        let mut acc = 0.0;
        let mut n = 0;
        for r in 0..rows {
            for c in 0..cols - lag {
                acc += a.get(r, c) * a.get(r, c + lag);
                n += 1;
            }
        }
        acc / n as f64
    }

    #[test]
    fn field_is_deterministic_and_standardized() {
        let a = gen_field(5, 128, 128, 4.0).unwrap();
        assert_eq!(a, gen_field(5, 128, 128, 4.0).unwrap());
        assert!(a.mean().abs() <= 0.05);
        let var = a.as_slice().iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn autocorrelation_decays() {
        let a = gen_field(8, 128, 128, 3.0).unwrap();
        assert!(autocorr(&a, 3) > autocorr(&a, 12));
    }

    #[test]
    fn degenerate_dims_rejected() {
        assert!(gen_field(1, 4, 64, 2.0).is_err());
        assert!(gen_field(1, 64, 64, 0.5).is_err());
    }

    #[test]
    fn fully_shared_compounds_have_identical_latents() {
        let spec = SynthSpec::new(
            64,
            64,
            vec![SynthCompound::new("a", 1.0, 0.2, 2.0), SynthCompound::new("b", 1.0, 0.2, 2.0)],
        );
        let l = gen_latents(&spec, 0).unwrap();
        assert_eq!(l[0], l[1]);
        assert_eq!(pcc(&l[0], &l[1]).unwrap(), Some(1.0));
    }

    #[test]
    fn detail_compounds_are_shifted_copies_of_the_residual() {
        let spec = SynthSpec::new(
            64,
            64,
            vec![
                SynthCompound::new("ref", 1.0, 0.0, 2.0),
                SynthCompound::new("a", 1.0, 0.0, 2.0).detail(),
                SynthCompound::new("b", 1.0, 0.0, 2.0).detail(),
            ],
        );
        let l = gen_latents(&spec, 0).unwrap();
        let s = spec.detail_shift;
        // a reads the residual at (r, c + s) and b at (r + s, c); away from the
        // reflected border they agree up to their separate standardization.
        let n = 64 - s;
        let a = Array2::from_fn(n, n, |r, c| l[1].get(r + s, c));
        let b = Array2::from_fn(n, n, |r, c| l[2].get(r, c + s));
        assert!(pcc(&a, &b).unwrap().unwrap() > 1.0 - 1e-9);
        assert!(pcc(&l[1], &l[2]).unwrap().unwrap() < 0.9);
        // Detail latents carry no low-frequency part of the reference.
        assert!(pcc(&l[0], &l[1]).unwrap().unwrap().abs() < 0.8);
    }

    #[test]
    fn independent_compound_is_uncorrelated() {
        for seed in 0..5 {
            let mut spec = SynthSpec::new(
                256,
                256,
                vec![SynthCompound::new("a", 1.0, 0.0, 1.0), SynthCompound::new("b", 0.0, 0.0, 1.0)],
            );
            spec.shared_seed = seed;
            spec.compound_seed = seed + 100;
            let l = gen_latents(&spec, 0).unwrap();
            let r = pcc(&l[0], &l[1]).unwrap().unwrap();
            assert!(r.abs() <= 0.1, "seed {seed}: {r}");
        }
    }

    #[test]
    fn sparsity_threshold_counts() {
        let spec = SynthSpec::new(256, 256, vec![SynthCompound::new("a", 1.0, 0.9, 2.0)]);
        let g = &gen_compound_set(&spec).unwrap()[0];
        let zeros = g.values().as_slice().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / g.values().len() as f64;
        assert!((0.89..=0.91).contains(&frac), "{frac}");
    }

    #[test]
    fn emissions_in_physical_range() {
        let spec = SynthSpec::new(
            64,
            64,
            vec![SynthCompound::new("a", 0.5, 0.3, 3.0), SynthCompound::new("b", 1.0, 0.0, 1.0).detail()],
        );
        for g in gen_compound_set(&spec).unwrap() {
            assert!(g.values().max() <= EMISSION_MAX);
            assert!(g.values().max() > 0.5 * EMISSION_MAX);
            assert!(g
                .values()
                .as_slice()
                .iter()
                .all(|&v| v == 0.0 || (EMISSION_FLOOR..=EMISSION_MAX).contains(&v)));
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-12);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_095).abs() < 1e-15);
    }

    #[test]
    fn invalid_spec_rejected() {
        let bad = SynthSpec::new(64, 64, vec![SynthCompound::new("a", 1.5, 0.0, 1.0)]);
        assert!(gen_compound_set(&bad).is_err());
        let bad = SynthSpec::new(64, 64, vec![SynthCompound::new("a", 1.0, 1.0, 1.0)]);
        assert!(gen_compound_set(&bad).is_err());
        let dup = SynthSpec::new(
            64,
            64,
            vec![SynthCompound::new("a", 1.0, 0.0, 1.0), SynthCompound::new("a", 1.0, 0.0, 1.0)],
        );
        assert!(gen_compound_set(&dup).is_err());
    }
}
