//! Versioned binary checkpoint:
//!
//! ```text
//! "MBCK" | u8 version | 5 x u32 config | u64 iteration | u32 n_tensors
//!   n_tensors x (u32 len + name | u32 ndim | ndim x u32 | f64 values)
//! | u8 has_optimizer [ u64 t | f64 beta1 beta2 eps | m values | v values ]
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ByteReader;

use super::optim::Adam;
use super::real::Real;
use super::{ParamLayout, SrModel, SrModelConfig};

const MAGIC: &[u8; 4] = b"MBCK";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: SrModelConfig,
    pub iteration: u64,
    pub params: Vec<f64>,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &SrModel<T>, iteration: u64, optimizer: Option<&Adam>) -> Self {
        Self {
            config: *model.config(),
            iteration,
            params: model.params().iter().map(|p| p.to_f64()).collect(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn model<T: Real>(&self) -> Result<SrModel<T>> {
        SrModel::from_params(self.config, self.params.iter().map(|&p| T::from_f64(p)).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let layout = ParamLayout::new(&self.config);
        let mut out = Vec::with_capacity(64 + self.params.len() * 24);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let c = &self.config;
        for v in [c.in_channels, c.features, c.blocks, c.attention_reduction, c.scale] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&(layout.slots().len() as u32).to_le_bytes());
        for slot in layout.slots() {
            out.extend_from_slice(&(slot.name.len() as u32).to_le_bytes());
            out.extend_from_slice(slot.name.as_bytes());
            out.extend_from_slice(&(slot.shape.len() as u32).to_le_bytes());
            for &d in &slot.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &self.params[slot.range()] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.optimizer {
            None => out.push(0),
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&a.t.to_le_bytes());
                for v in [a.beta1, a.beta2, a.eps].iter().chain(&a.m).chain(&a.v) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let config = SrModelConfig {
            in_channels: dims[0],
            features: dims[1],
            blocks: dims[2],
            attention_reduction: dims[3],
            scale: dims[4],
        };
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let iteration = r.u64()?;
        let n = r.u32()? as usize;
        if n != layout.slots().len() {
            return Err(Error::Format(format!("{n} tensors, config implies {}", layout.slots().len())));
        }
        let mut params = vec![0.0; layout.total()];
        for slot in layout.slots() {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            if name != slot.name || shape != slot.shape {
                return Err(Error::Format(format!(
                    "tensor {name} {shape:?} does not match expected {} {:?}",
                    slot.name, slot.shape
                )));
            }
            params[slot.range()].copy_from_slice(&r.f64s(slot.len())?);
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let t = r.u64()?;
                let (beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?);
                let m = r.f64s(params.len())?;
                let v = r.f64s(params.len())?;
                Some(Adam {
                    beta1,
                    beta2,
                    eps,
                    m,
                    v,
                    t,
                })
            }
            other => return Err(Error::Format(format!("bad optimizer flag {other}"))),
        };
        r.finish()?;
        Ok(Self {
            config,
            iteration,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
