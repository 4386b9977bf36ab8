//! Gridded emission fields and their two on-disk formats.
//!
//! CSV: key=value header lines (`compound`, `date`, `rows`, `cols`, `lat_res`,
//! `lon_res`) followed by `rows` comma-separated lines, north to south.
//!
//! bgrid (little-endian throughout):
//!
//! ```text
//! "BGRD" | u8 version | u32 len + compound utf-8 | u32 len + ISO-8601 date
//!        | u32 rows | u32 cols | f64 lat_res | f64 lon_res | rows*cols f64
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::array::Array2;
use crate::error::{Error, Result};

pub const BGRID_MAGIC: &[u8; 4] = b"BGRD";
pub const BGRID_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Bgrid,
}

impl GridFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(GridFormat::Csv),
            "bgrid" => Some(GridFormat::Bgrid),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            GridFormat::Csv => "csv",
            GridFormat::Bgrid => "bgrid",
        }
    }
}

impl FromStr for GridFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(GridFormat::Csv),
            "bgrid" => Ok(GridFormat::Bgrid),
            other => Err(Error::InvalidArgument(format!("unknown grid format {other}"))),
        }
    }
}

/// Emission field of one compound at one date, kg m^-2 s^-1.
///
/// Cells without emission (oceans, deserts) hold 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionGrid {
    compound: String,
    date: NaiveDate,
    lat_res: f64,
    lon_res: f64,
    values: Array2,
}

impl EmissionGrid {
    pub fn new(
        compound: impl Into<String>,
        date: NaiveDate,
        lat_res: f64,
        lon_res: f64,
        values: Array2,
    ) -> Result<Self> {
        let compound = compound.into();
        if compound.is_empty() {
            return Err(Error::InvalidArgument("empty compound tag".into()));
        }
        if !(lat_res > 0.0 && lat_res.is_finite() && lon_res > 0.0 && lon_res.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be positive, got {lat_res} x {lon_res}"
            )));
        }
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Shape("grid must have at least one cell".into()));
        }
        validate_cells(&values)?;
        Ok(Self {
            compound,
            date,
            lat_res,
            lon_res,
            values,
        })
    }

    pub fn compound(&self) -> &str {
        &self.compound
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn lat_res(&self) -> f64 {
        self.lat_res
    }

    pub fn lon_res(&self) -> f64 {
        self.lon_res
    }

    pub fn values(&self) -> &Array2 {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn with_compound(&self, compound: impl Into<String>) -> Result<Self> {
        Self::new(compound, self.date, self.lat_res, self.lon_res, self.values.clone())
    }
}

pub(crate) fn validate_cells(values: &Array2) -> Result<()> {
    for r in 0..values.rows() {
        for (c, &v) in values.row(r).iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidCell { row: r, col: c, value: v });
            }
        }
    }
    Ok(())
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Header(format!("bad date {s:?}: {e}")))
}

pub fn load_grid(path: impl AsRef<Path>, format: GridFormat) -> Result<EmissionGrid> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        GridFormat::Csv => read_csv(BufReader::new(file)),
        GridFormat::Bgrid => {
            let mut bytes = Vec::new();
            BufReader::new(file)
                .read_to_end(&mut bytes)
                .map_err(|e| Error::io(path, e))?;
            decode_bgrid(&bytes)
        }
    }
}

pub fn save_grid(grid: &EmissionGrid, path: impl AsRef<Path>, format: GridFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        GridFormat::Csv => encode_csv(grid).into_bytes(),
        GridFormat::Bgrid => encode_bgrid(grid),
    };
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn encode_csv(grid: &EmissionGrid) -> String {
    let mut out = String::with_capacity(grid.values.len() * 24 + 128);
    out.push_str(&format!("compound={}\n", grid.compound));
    out.push_str(&format!("date={}\n", grid.date.format("%Y-%m-%d")));
    out.push_str(&format!("rows={}\n", grid.rows()));
    out.push_str(&format!("cols={}\n", grid.cols()));
    out.push_str(&format!("lat_res={:e}\n", grid.lat_res));
    out.push_str(&format!("lon_res={:e}\n", grid.lon_res));
    for r in 0..grid.rows() {
        let line: Vec<String> = grid.values.row(r).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn read_csv(reader: impl BufRead) -> Result<EmissionGrid> {
    let mut header = std::collections::BTreeMap::new();
    let mut lines = reader.lines();
    let mut pending = None;
    for line in lines.by_ref() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match trimmed.split_once('=') {
            Some((k, v)) if header.len() < 6 => {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            _ => {
                pending = Some(line);
                break;
            }
        }
    }
    let field = |k: &str| {
        header
            .get(k)
            .cloned()
            .ok_or_else(|| Error::Header(format!("missing key {k}")))
    };
    let compound = field("compound")?;
    let date = parse_date(&field("date")?)?;
    let rows: usize = field("rows")?
        .parse()
        .map_err(|_| Error::Header("rows is not an integer".into()))?;
    let cols: usize = field("cols")?
        .parse()
        .map_err(|_| Error::Header("cols is not an integer".into()))?;
    let lat_res: f64 = field("lat_res")?
        .parse()
        .map_err(|_| Error::Header("lat_res is not a number".into()))?;
    let lon_res: f64 = field("lon_res")?
        .parse()
        .map_err(|_| Error::Header("lon_res is not a number".into()))?;

    let mut data = Vec::with_capacity(rows * cols);
    let mut row = 0usize;
    let payload = pending.into_iter().map(Ok).chain(lines);
    for line in payload {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if row >= rows {
            return Err(Error::Shape(format!("more than {rows} payload rows")));
        }
        let before = data.len();
        for (col, tok) in line.split(',').enumerate() {
            let v: f64 = tok.trim().parse().map_err(|_| {
                Error::Format(format!("unparseable value {tok:?} at row {row}, col {col}"))
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidCell { row, col, value: v });
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Shape(format!(
                "row {row} has {} values, header says {cols}",
                data.len() - before
            )));
        }
        row += 1;
    }
    if row != rows {
        return Err(Error::Shape(format!("{row} payload rows, header says {rows}")));
    }
    EmissionGrid::new(compound, date, lat_res, lon_res, Array2::from_vec(rows, cols, data)?)
}

pub fn encode_bgrid(grid: &EmissionGrid) -> Vec<u8> {
    let date = grid.date.format("%Y-%m-%d").to_string();
    let mut out = Vec::with_capacity(64 + grid.values.len() * 8);
    out.extend_from_slice(BGRID_MAGIC);
    out.push(BGRID_VERSION);
    out.extend_from_slice(&(grid.compound.len() as u32).to_le_bytes());
    out.extend_from_slice(grid.compound.as_bytes());
    out.extend_from_slice(&(date.len() as u32).to_le_bytes());
    out.extend_from_slice(date.as_bytes());
    out.extend_from_slice(&(grid.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.cols() as u32).to_le_bytes());
    out.extend_from_slice(&grid.lat_res.to_le_bytes());
    out.extend_from_slice(&grid.lon_res.to_le_bytes());
    for v in grid.values.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Little-endian cursor shared by the binary formats.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated input: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode_bgrid(bytes: &[u8]) -> Result<EmissionGrid> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != BGRID_MAGIC {
        return Err(Error::Header("missing BGRD magic".into()));
    }
    let version = r.u8()?;
    if version != BGRID_VERSION {
        return Err(Error::Header(format!("unsupported bgrid version {version}")));
    }
    let compound = r.string()?;
    let date = parse_date(&r.string()?)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let lat_res = r.f64()?;
    let lon_res = r.f64()?;
    let data = r
        .f64s(rows * cols)
        .map_err(|_| Error::Shape(format!("payload shorter than {rows}x{cols}")))?;
    r.finish()
        .map_err(|_| Error::Shape(format!("payload longer than {rows}x{cols}")))?;
    EmissionGrid::new(compound, date, lat_res, lon_res, Array2::from_vec(rows, cols, data)?)
}
