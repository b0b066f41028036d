//! Labelled image datasets scaled to `[0, 1]`: IDX files and per-class
//! image directories.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    input_shape: Vec<usize>,
    classes: usize,
}

impl Dataset {
    /// Validates that every input has `input_shape`, lies in `[0,1]`, and
    /// every label is below `classes`.
    pub fn new(samples: Vec<Sample>, input_shape: Vec<usize>, classes: usize) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.input.shape() != input_shape.as_slice() {
                return Err(Error::Format(format!(
                    "sample {i} has shape {:?}, expected {input_shape:?}",
                    s.input.shape()
                )));
            }
            if s.input.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Format(format!("sample {i} has values outside [0,1]")));
            }
            if s.label >= classes {
                return Err(Error::Format(format!(
                    "sample {i} label {} >= class count {classes}",
                    s.label
                )));
            }
        }
        Ok(Self {
            samples,
            input_shape,
            classes,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Contiguous sub-range `[start, start + count)`, clipped to the dataset.
    pub fn slice(&self, start: usize, count: usize) -> Dataset {
        let start = start.min(self.len());
        let end = start.saturating_add(count).min(self.len());
        Dataset {
            samples: self.samples[start..end].to_vec(),
            input_shape: self.input_shape.clone(),
            classes: self.classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// IDX image file (`u8`, magic `0x00000803`) plus IDX label file
    /// (`u8`, magic `0x00000801`).
    Idx { images: PathBuf, labels: PathBuf },
    /// One sub-directory per class, sorted by name; PPM (P6) and PNG files.
    ImageDir { root: PathBuf, grayscale: bool },
}

pub fn load_dataset(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Idx { images, labels } => load_idx(images, labels),
        DatasetSource::ImageDir { root, grayscale } => load_image_dir(root, *grayscale),
    }
}

struct IdxArray {
    dims: Vec<usize>,
    bytes: Vec<u8>,
}

fn parse_idx(path: &Path) -> Result<IdxArray> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fmt = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    if raw.len() < 4 {
        return Err(fmt("file shorter than the IDX magic".into()));
    }
    if raw[0] != 0 || raw[1] != 0 {
        return Err(fmt(format!("bad IDX magic {:02x?}", &raw[..4])));
    }
    if raw[2] != 0x08 {
        return Err(fmt(format!("unsupported IDX element type 0x{:02x}", raw[2])));
    }
    let ndim = raw[3] as usize;
    let header = 4 + 4 * ndim;
    if ndim == 0 || raw.len() < header {
        return Err(fmt("truncated IDX header".into()));
    }
    let dims: Vec<usize> = raw[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if raw.len() - header != n {
        return Err(fmt(format!(
            "payload holds {} bytes, dims {dims:?} need {n}",
            raw.len() - header
        )));
    }
    Ok(IdxArray {
        dims,
        bytes: raw[header..].to_vec(),
    })
}

/// Images become `[1, H, W]` tensors scaled by `1/255`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = parse_idx(images)?;
    let lab = parse_idx(labels)?;
    let &[count, h, w] = img.dims.as_slice() else {
        return Err(Error::Format(format!(
            "{}: expected 3-D image array, got dims {:?}",
            images.display(),
            img.dims
        )));
    };
    if lab.dims.len() != 1 {
        return Err(Error::Format(format!(
            "{}: expected 1-D label array, got dims {:?}",
            labels.display(),
            lab.dims
        )));
    }
    if lab.dims[0] != count {
        return Err(Error::Format(format!(
            "{count} images but {} labels",
            lab.dims[0]
        )));
    }
    let classes = lab.bytes.iter().copied().max().map_or(0, |m| m as usize + 1).max(2);
    let plane = h * w;
    let samples = img
        .bytes
        .chunks_exact(plane.max(1))
        .zip(&lab.bytes)
        .map(|(px, &label)| {
            let data = px.iter().map(|&b| f64::from(b) / 255.0).collect();
            Ok(Sample {
                input: Tensor::new(vec![1, h, w], data)?,
                label: label as usize,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, vec![1, h, w], classes)
}

/// Writes `u8` images `[N, H, W]` and labels `[N]` in IDX form.
pub fn write_idx(images: &Path, labels: &Path, pixels: &[Vec<u8>], h: usize, w: usize, label_bytes: &[u8]) -> Result<()> {
    if pixels.len() != label_bytes.len() || pixels.iter().any(|p| p.len() != h * w) {
        return Err(Error::Argument("image/label counts or sizes disagree".into()));
    }
    let mut buf = Vec::with_capacity(16 + pixels.len() * h * w);
    buf.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    for d in [pixels.len(), h, w] {
        buf.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for p in pixels {
        buf.extend_from_slice(p);
    }
    fs::write(images, buf).map_err(|e| Error::io(images, e))?;
    let mut buf = Vec::with_capacity(8 + label_bytes.len());
    buf.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    buf.extend_from_slice(&(label_bytes.len() as u32).to_be_bytes());
    buf.extend_from_slice(label_bytes);
    fs::write(labels, buf).map_err(|e| Error::io(labels, e))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "png"))
        .unwrap_or(false)
}

/// Loads `root/<class>/<file>.{ppm,png}`; classes are the sorted
/// sub-directory names, files are taken in sorted order.
pub fn load_image_dir(root: &Path, grayscale: bool) -> Result<Dataset> {
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Format(format!("{}: no class sub-directories", root.display())));
    }
    let mut samples = Vec::new();
    let mut shape: Option<Vec<usize>> = None;
    for (label, dir) in class_dirs.iter().enumerate() {
        for file in sorted_entries(dir)?.into_iter().filter(|p| is_image(p)) {
            let img = image::open(&file)
                .map_err(|e| Error::Format(format!("{}: {e}", file.display())))?;
            let (w, h) = (img.width() as usize, img.height() as usize);
            let (s, data): (Vec<usize>, Vec<f64>) = if grayscale {
                let g = img.to_luma8();
                (vec![1, h, w], g.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect())
            } else {
                let rgb = img.to_rgb8();
                let raw = rgb.as_raw();
                // interleaved HWC -> planar CHW
                let mut data = vec![0.0; 3 * h * w];
                for (i, px) in raw.chunks_exact(3).enumerate() {
                    for c in 0..3 {
                        data[c * h * w + i] = f64::from(px[c]) / 255.0;
                    }
                }
                (vec![3, h, w], data)
            };
            match &shape {
                Some(expected) if *expected != s => {
                    return Err(Error::Format(format!(
                        "{}: shape {s:?} differs from earlier images {expected:?}",
                        file.display()
                    )))
                }
                None => shape = Some(s.clone()),
                _ => {}
            }
            samples.push(Sample {
                input: Tensor::new(s, data)?,
                label,
            });
        }
    }
    let Some(shape) = shape else {
        return Err(Error::Format(format!("{}: no .ppm or .png images found", root.display())));
    };
    Dataset::new(samples, shape, class_dirs.len().max(2))
}
