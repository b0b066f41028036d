//! Attribution maps and their on-disk forms.
//!
//! Binary layout (little-endian): magic `"LAM1"`, rank `u32`, `rank` extents
//! as `u32`, then one `f64` per element in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local::LocalConfig;
use crate::tensor::Tensor;

pub const MAP_MAGIC: &[u8; 4] = b"LAM1";

/// Which method produced a map, with the parameters it ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSnapshot {
    Local(LocalConfig),
    Saliency { signed: bool },
    IntegratedGradients { steps: usize },
    SmoothGrad { sigma: f64, samples: usize, seed: u64 },
    Random { seed: u64 },
}

impl MethodSnapshot {
    pub fn tag(&self) -> &'static str {
        match self {
            MethodSnapshot::Local(_) => "la",
            MethodSnapshot::Saliency { .. } => "sm",
            MethodSnapshot::IntegratedGradients { .. } => "ig",
            MethodSnapshot::SmoothGrad { .. } => "sg",
            MethodSnapshot::Random { .. } => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub values: Tensor,
    /// Index of the explained sample within its dataset, when known.
    pub sample: Option<usize>,
    pub method: MethodSnapshot,
}

impl AttributionMap {
    pub fn new(values: Tensor, method: MethodSnapshot) -> Result<Self> {
        values.ensure_finite("attribution map")?;
        Ok(Self {
            values,
            sample: None,
            method,
        })
    }

    pub fn with_sample(mut self, index: usize) -> Self {
        self.sample = Some(index);
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_values(&self.values)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,value\n");
        for (i, v) in self.values.data().iter().enumerate() {
            let _ = writeln!(s, "{i},{v:e}");
        }
        s
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn encode_values(values: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * values.shape().len() + 8 * values.len());
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&(values.shape().len() as u32).to_le_bytes());
    for &d in values.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_values(buf: &[u8]) -> Result<Tensor> {
    let fail = |m: &str| Error::Format(format!("attribution file: {m}"));
    if buf.len() < 8 || &buf[..4] != MAP_MAGIC {
        return Err(fail("bad magic"));
    }
    let rank = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes")) as usize;
    let header = 8 + 4 * rank;
    if rank == 0 || buf.len() < header {
        return Err(fail("truncated header"));
    }
    let shape: Vec<usize> = buf[8..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let n: usize = shape.iter().product();
    if buf.len() - header != n * 8 {
        return Err(fail("payload length does not match shape"));
    }
    let data = buf[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Tensor::new(shape, data).map_err(|e| fail(&e.to_string()))
}

pub fn read_values(path: &Path) -> Result<Tensor> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_values(&buf)
}
