//! Heatmaps, triangle matrices and histogram charts as binary PPM (P6) images.
//!
//! The sequential palette runs black, deep purple, red-orange, yellow, near
//! white (brighter means higher). The diverging palette runs blue, white, red
//! with white at the middle of the value range. Colors are linear
//! interpolations between the anchors below, rounded to the nearest 8-bit value,
//! so output bytes are identical on every platform.

use std::path::Path;
use std::str::FromStr;

use crate::array::Array2;
use crate::error::{Error, Result};
use crate::metrics::Histogram;

const SEQUENTIAL: [[u8; 3]; 5] = [
    [0, 0, 4],
    [87, 16, 110],
    [188, 55, 84],
    [249, 142, 9],
    [252, 255, 164],
];

const DIVERGING: [[u8; 3]; 3] = [[33, 102, 172], [247, 247, 247], [178, 24, 43]];

/// Color for cells with no value (NaN in a matrix).
pub const MISSING: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    Sequential,
    Diverging,
}

impl Palette {
    fn anchors(self) -> &'static [[u8; 3]] {
        match self {
            Palette::Sequential => &SEQUENTIAL,
            Palette::Diverging => &DIVERGING,
        }
    }

    /// Color at position `t` in [0, 1]; values outside are clamped.
    pub fn color(self, t: f64) -> [u8; 3] {
        let a = self.anchors();
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let pos = t * (a.len() - 1) as f64;
        let k = (pos.floor() as usize).min(a.len() - 2);
        let f = pos - k as f64;
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let (lo, hi) = (a[k][ch] as f64, a[k + 1][ch] as f64);
            out[ch] = (lo + f * (hi - lo)).round() as u8;
        }
        out
    }

    pub fn endpoints(self) -> ([u8; 3], [u8; 3]) {
        let a = self.anchors();
        (a[0], a[a.len() - 1])
    }
}

impl FromStr for Palette {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Palette::Sequential),
            "diverging" => Ok(Palette::Diverging),
            _ => Err(Error::InvalidArgument(format!("unknown palette {s:?}"))),
        }
    }
}

/// An RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Self {
            width,
            height,
            rgb: fill.repeat(width * height),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn fill_rect(&mut self, x0: usize, y0: usize, w: usize, h: usize, color: [u8; 3]) {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                let i = 3 * (y * self.width + x);
                self.rgb[i..i + 3].copy_from_slice(&color);
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

fn check_range(range: (f64, f64)) -> Result<()> {
    if !range.0.is_finite() || !range.1.is_finite() || range.0 > range.1 {
        return Err(Error::InvalidArgument(format!("invalid value range {range:?}")));
    }
    Ok(())
}

fn position(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Maps each cell to a `scale`x`scale` block of palette color.
pub fn heatmap(a: &Array2, palette: Palette, range: (f64, f64), scale: usize) -> Result<Image> {
    check_range(range)?;
    if scale == 0 {
        return Err(Error::InvalidArgument("scale must be >= 1".into()));
    }
    if let Some(v) = a.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("heatmap value {v}")));
    }
    let mut img = Image::new(a.cols() * scale, a.rows() * scale, [0; 3]);
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            let color = palette.color(position(a.get(r, c), range));
            img.fill_rect(c * scale, r * scale, scale, scale, color);
        }
    }
    Ok(img)
}

/// Writes a one-pixel-per-cell heatmap to `path`.
pub fn render_heatmap(a: &Array2, path: &Path, palette: Palette, range: (f64, f64)) -> Result<()> {
    heatmap(a, palette, range, 1)?.save(path)
}

/// Square matrix image with SSIM above the diagonal (sequential, [0, 1]) and
/// PCC below it (diverging, [-1, 1]). Diagonal cells take the top sequential color.
pub fn triangle_heatmap(k: usize, ssim: &[f64], pcc: &[f64], cell: usize) -> Result<Image> {
    if ssim.len() != k * k || pcc.len() != k * k {
        return Err(Error::Shape(format!("expected {} matrix entries", k * k)));
    }
    let mut img = Image::new(k * cell, k * cell, MISSING);
    for i in 0..k {
        for j in 0..k {
            let color = match i.cmp(&j) {
                std::cmp::Ordering::Equal => Palette::Sequential.endpoints().1,
                std::cmp::Ordering::Less => match ssim[i * k + j] {
                    v if v.is_nan() => MISSING,
                    v => Palette::Sequential.color(v),
                },
                std::cmp::Ordering::Greater => match pcc[i * k + j] {
                    v if v.is_nan() => MISSING,
                    v => Palette::Diverging.color((v + 1.0) / 2.0),
                },
            };
            img.fill_rect(j * cell, i * cell, cell, cell, color);
        }
    }
    Ok(img)
}

/// Grouped bar chart of two histograms with matching bins (first in blue,
/// second in orange), scaled to the tallest bar.
pub fn histogram_chart(a: &Histogram, b: &Histogram, height: usize, bar: usize) -> Result<Image> {
    if a.counts.len() != b.counts.len() || a.counts.is_empty() {
        return Err(Error::Shape("histograms must share a nonzero bin count".into()));
    }
    let bins = a.counts.len();
    let peak = a.counts.iter().chain(&b.counts).copied().max().unwrap_or(0).max(1);
    let group = 2 * bar + 1;
    let mut img = Image::new(bins * group + 1, height, [255; 3]);
    for (k, (&ca, &cb)) in a.counts.iter().zip(&b.counts).enumerate() {
        for (n, count, color) in [(0, ca, [33, 102, 172]), (1, cb, [249, 142, 9])] {
            let h = ((count as f64 / peak as f64) * height as f64).round() as usize;
            img.fill_rect(1 + k * group + n * bar, height - h, bar, h, color);
        }
    }
    Ok(img)
}
