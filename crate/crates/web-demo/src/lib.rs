//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page drives three operations on a synthetic two-compound scene:
//! degrading the reference map by 4x and restoring it bicubically, viewing it
//! through its quantile transform, and measuring how similar a second compound
//! is as its mixing coefficient changes.

use wasm_bindgen::prelude::*;

use mbsr_core::array::Array2;
use mbsr_core::interconnection::{pcc, ssim, SsimParams};
use mbsr_core::metrics::{error_map, histogram, nmse_db};
use mbsr_core::patch::{downsample_bicubic, upsample_bicubic};
use mbsr_core::render::{heatmap, Palette};
use mbsr_core::synthetic::{gen_compound_set, SynthCompound, SynthSpec};
use mbsr_core::transform::QuantileTransform;

pub const SIDE: usize = 128;
pub const SCALE: usize = 4;

/// Sequential-palette RGBA pixels of `a` over `range`.
fn rgba(a: &Array2, range: (f64, f64)) -> mbsr_core::Result<Vec<u8>> {
    let img = heatmap(a, Palette::Sequential, range, 1)?;
    Ok(img.rgb.chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect())
}

/// Log10 view of emissions; zeros sit at the bottom of the range.
fn log_view(a: &Array2, decades: f64) -> (Array2, (f64, f64)) {
    let top = a.max().max(f64::MIN_POSITIVE).log10();
    let bottom = top - decades;
    (a.map(|v| if v > 0.0 { v.log10().max(bottom) } else { bottom }), (bottom, top))
}

/// Reference map, its degraded and restored versions, and a partner compound.
pub struct SceneData {
    pub hr: Array2,
    pub lr: Array2,
    pub restored: Array2,
    pub partner: Array2,
    pub transform: QuantileTransform,
}

impl SceneData {
    pub fn generate(seed: u64, correlation_length: f64, sparsity: f64, gamma: f64, rho: f64) -> mbsr_core::Result<Self> {
        let mut spec = SynthSpec::new(
            SIDE,
            SIDE,
            vec![
                SynthCompound::new("reference", 1.0, sparsity, gamma),
                SynthCompound::new("partner", rho, sparsity, gamma),
            ],
        );
        spec.correlation_length = correlation_length;
        spec.shared_seed = seed;
        spec.compound_seed = seed.wrapping_add(1);
        let mut grids = gen_compound_set(&spec)?.into_iter();
        let hr = grids.next().expect("two compounds").values().clone();
        let partner = grids.next().expect("two compounds").values().clone();
        let lr = downsample_bicubic(&hr, SCALE)?;
        let restored = upsample_bicubic(&lr, SCALE)?;
        let transform = QuantileTransform::fit(hr.as_slice().iter().copied(), 256, "reference")?;
        Ok(Self { hr, lr, restored, partner, transform })
    }

    pub fn restoration_nmse_db(&self) -> mbsr_core::Result<f64> {
        nmse_db(&self.hr, &self.restored)
    }

    /// SSIM (on maps scaled to [0, 1]) and PCC between reference and partner.
    pub fn similarity(&self) -> mbsr_core::Result<(f64, f64)> {
        let s = ssim(
            &self.hr.min_max_normalized(),
            &self.partner.min_max_normalized(),
            &SsimParams::default(),
        )?;
        Ok((s, pcc(&self.hr, &self.partner)?.unwrap_or(f64::NAN)))
    }

    pub fn transformed(&self) -> mbsr_core::Result<Array2> {
        self.transform.apply_array(&self.hr)
    }
}

fn js(e: mbsr_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Scene {
    data: SceneData,
    decades: f64,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, correlation_length: f64, sparsity: f64, gamma: f64, rho: f64) -> Result<Scene, JsError> {
        let data = SceneData::generate(seed as u64, correlation_length, sparsity, gamma, rho).map_err(js)?;
        let decades = (gamma / std::f64::consts::LN_10).max(0.5);
        Ok(Scene { data, decades })
    }

    pub fn side() -> usize {
        SIDE
    }

    pub fn lr_side() -> usize {
        SIDE / SCALE
    }

    pub fn hr_rgba(&self) -> Result<Vec<u8>, JsError> {
        let (v, r) = log_view(&self.data.hr, self.decades);
        rgba(&v, r).map_err(js)
    }

    pub fn lr_rgba(&self) -> Result<Vec<u8>, JsError> {
        let (_, r) = log_view(&self.data.hr, self.decades);
        let (v, _) = log_view(&self.data.lr, self.decades);
        rgba(&v, r).map_err(js)
    }

    pub fn restored_rgba(&self) -> Result<Vec<u8>, JsError> {
        let (_, r) = log_view(&self.data.hr, self.decades);
        let (v, _) = log_view(&self.data.restored, self.decades);
        rgba(&v, r).map_err(js)
    }

    /// Absolute restoration error on a linear scale.
    pub fn error_rgba(&self) -> Result<Vec<u8>, JsError> {
        let e = error_map(&self.data.hr, &self.data.restored).map_err(js)?;
        rgba(&e, (0.0, e.max())).map_err(js)
    }

    pub fn nmse_db(&self) -> Result<f64, JsError> {
        self.data.restoration_nmse_db().map_err(js)
    }

    pub fn transformed_rgba(&self) -> Result<Vec<u8>, JsError> {
        rgba(&self.data.transformed().map_err(js)?, (0.0, 1.0)).map_err(js)
    }

    /// Counts of transformed values in `bins` equal bins over [0, 1].
    pub fn transformed_histogram(&self, bins: usize) -> Result<Vec<u32>, JsError> {
        let u = self.data.transformed().map_err(js)?;
        let h = histogram(u.as_slice(), bins, (0.0, 1.0)).map_err(js)?;
        Ok(h.counts.iter().map(|&c| c as u32).collect())
    }

    /// Counts of raw values in `bins` equal bins over [0, max].
    pub fn raw_histogram(&self, bins: usize) -> Result<Vec<u32>, JsError> {
        let top = self.data.hr.max();
        let h = histogram(self.data.hr.as_slice(), bins, (0.0, if top > 0.0 { top } else { 1.0 })).map_err(js)?;
        Ok(h.counts.iter().map(|&c| c as u32).collect())
    }

    pub fn partner_rgba(&self) -> Result<Vec<u8>, JsError> {
        let (_, r) = log_view(&self.data.hr, self.decades);
        let (v, _) = log_view(&self.data.partner, self.decades);
        rgba(&v, r).map_err(js)
    }

    /// `[ssim, pcc]` between reference and partner.
    pub fn similarity(&self) -> Result<Vec<f64>, JsError> {
        let (s, p) = self.data.similarity().map_err(js)?;
        Ok(vec![s, p])
    }
}
