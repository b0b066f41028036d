//! `LAW1` weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "LAW1"
//! version    u32      1
//! rank       u32      input rank, followed by `rank` u32 extents
//! layers     u32      layer count, followed by one record per layer:
//!                       kind u8 (0 dense, 1 conv2d, 2 relu, 3 tanh,
//!                                4 square, 5 maxpool2, 6 flatten)
//!                       dense:  inputs u32, outputs u32
//!                       conv2d: in_channels u32, out_channels u32,
//!                               kernel u32, padding u8 (0 valid, 1 same)
//! count      u64      number of f64 parameters that follow
//! payload    f64 * count, per layer weight then bias, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::Padding;
use crate::error::{Error, Result};
use crate::model::{Layer, LayerSpec, ModelGraph};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"LAW1";
pub const VERSION: u32 = 1;

pub fn encode(model: &ModelGraph) -> Vec<u8> {
    use crate::model::Classifier;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let shape = model.input_shape();
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for spec in model.specs() {
        match spec {
            LayerSpec::Dense { inputs, outputs } => {
                out.push(0);
                out.extend_from_slice(&(inputs as u32).to_le_bytes());
                out.extend_from_slice(&(outputs as u32).to_le_bytes());
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                out.push(1);
                for v in [in_channels, out_channels, kernel] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
                out.push(match padding {
                    Padding::Valid => 0,
                    Padding::Same => 1,
                });
            }
            LayerSpec::Relu => out.push(2),
            LayerSpec::Tanh => out.push(3),
            LayerSpec::Square => out.push(4),
            LayerSpec::MaxPool2 => out.push(5),
            LayerSpec::Flatten => out.push(6),
        }
    }
    out.extend_from_slice(&(model.parameter_count() as u64).to_le_bytes());
    for layer in model.layers() {
        if let Some((w, b)) = layer.params() {
            for v in w.data().iter().chain(b.data()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated weight file at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self, shape: Vec<usize>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn decode(buf: &[u8]) -> Result<ModelGraph> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a LAW1 weight file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported weight file version {version}")));
    }
    let rank = r.u32()?;
    if rank == 0 || rank > 8 {
        return Err(Error::Format(format!("implausible input rank {rank}")));
    }
    let input_shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let n_layers = r.u32()?;
    let mut specs = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let spec = match r.u8()? {
            0 => LayerSpec::Dense {
                inputs: r.u32()?,
                outputs: r.u32()?,
            },
            1 => LayerSpec::Conv2d {
                in_channels: r.u32()?,
                out_channels: r.u32()?,
                kernel: r.u32()?,
                padding: match r.u8()? {
                    0 => Padding::Valid,
                    1 => Padding::Same,
                    p => return Err(Error::Format(format!("unknown padding code {p}"))),
                },
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::Tanh,
            4 => LayerSpec::Square,
            5 => LayerSpec::MaxPool2,
            6 => LayerSpec::Flatten,
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        };
        specs.push(spec);
    }
    let count = r.u64()?;
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let layer = match spec {
            LayerSpec::Dense { inputs, outputs } => Layer::Dense {
                weight: r.tensor(vec![outputs, inputs])?,
                bias: r.tensor(vec![outputs])?,
            },
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => Layer::Conv2d {
                kernel: r.tensor(vec![out_channels, in_channels, kernel, kernel])?,
                bias: r.tensor(vec![out_channels])?,
                padding,
            },
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Tanh => Layer::Tanh,
            LayerSpec::Square => Layer::Square,
            LayerSpec::MaxPool2 => Layer::MaxPool2,
            LayerSpec::Flatten => Layer::Flatten,
        };
        layers.push(layer);
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after parameter payload",
            buf.len() - r.pos
        )));
    }
    let model = ModelGraph::from_layers(&input_shape, layers).map_err(|e| Error::Format(e.to_string()))?;
    if model.parameter_count() as u64 != count {
        return Err(Error::Format(format!(
            "header declares {count} parameters, layers hold {}",
            model.parameter_count()
        )));
    }
    Ok(model)
}

pub fn save_weights(model: &ModelGraph, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<ModelGraph> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}
