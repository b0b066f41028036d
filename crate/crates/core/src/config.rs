//! Experiment configuration: flat `section.key = value` text, overridable by
//! command-line flags of the same names.
//!
//! ```text
//! # digits.conf
//! data.format = idx
//! data.images = data/digits/test-images.idx3-ubyte
//! data.labels = data/digits/test-labels.idx1-ubyte
//! model.path = out/digits.law
//! method.name = la
//! method.N = 20
//! method.s_range = 20
//! run.samples = 100
//! run.seed = 7
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataset::DatasetSource;
use crate::error::{Error, Result};
use crate::heatmap::Colormap;
use crate::local::AttackType;
use crate::model::TrainConfig;

/// Every key the runner understands, with its default (empty = unset).
pub const KEYS: &[(&str, &str)] = &[
    ("model.path", ""),
    ("model.arch", "cnn"),
    ("data.format", "idx"),
    ("data.images", ""),
    ("data.labels", ""),
    ("data.dir", ""),
    ("data.grayscale", "true"),
    ("data.test_images", ""),
    ("data.test_labels", ""),
    ("train.lr", "0.05"),
    ("train.epochs", "30"),
    ("train.batch", "16"),
    ("train.seed", "0"),
    ("method.name", "la"),
    ("method.N", "20"),
    ("method.s_range", "20"),
    ("method.k_targets", ""),
    ("method.mode", "linear"),
    ("method.eps_min", "0.001"),
    ("method.eps_const", ""),
    ("method.attack", "both"),
    ("method.clamp", "true"),
    ("method.ig_steps", "50"),
    ("method.sg_sigma", "0.15"),
    ("method.sg_n", "50"),
    ("method.signed", "false"),
    ("metric.baseline", "zeros"),
    ("metric.n_points", "101"),
    ("run.samples", "10"),
    ("run.offset", "0"),
    ("run.seed", "0"),
    ("run.out", "out"),
    ("run.label", "predicted"),
    ("run.maps", ""),
    ("run.heatmaps", "false"),
    ("run.colormap", "gray"),
    ("ablate.param", ""),
    ("ablate.values", ""),
    ("render.input", ""),
    ("render.shape", ""),
    ("render.output", ""),
];

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Parses `--key=value` / `--key value` flags.
pub fn parse_flags(args: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Error::Config(format!("unexpected argument {arg:?}")));
        };
        let (k, v) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("flag --{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        out.insert(k, v);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    La,
    Sm,
    Ig,
    Sg,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// All-zero ("all-black") input.
    Zeros,
    /// Per-channel mean of the sample.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelChoice {
    /// Explain the model's own prediction.
    Predicted,
    /// Explain the dataset label.
    True,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodConfig {
    pub kind: MethodKind,
    pub iterations: usize,
    pub spatial_range: f64,
    pub targets: Option<usize>,
    /// `false` selects constant radii.
    pub linear: bool,
    pub epsilon_floor: f64,
    /// Constant-mode radius; unset means `mean(|x|) / s_range` per sample.
    pub constant_radius: Option<f64>,
    pub attack: AttackType,
    pub clamp: bool,
    pub ig_steps: usize,
    pub sg_sigma: f64,
    pub sg_samples: usize,
    pub signed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Resolved key/value pairs, echoed into reports.
    pub raw: BTreeMap<String, String>,
    pub model_path: Option<PathBuf>,
    pub arch: String,
    pub data: Option<DataSpec>,
    pub test_data: Option<DatasetSource>,
    pub train: TrainConfig,
    pub method: MethodConfig,
    pub baseline: BaselineKind,
    pub n_points: usize,
    pub samples: usize,
    pub offset: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub label: LabelChoice,
    pub maps_dir: Option<PathBuf>,
    pub heatmaps: bool,
    pub colormap: Colormap,
    pub ablate_param: Option<String>,
    pub ablate_values: Vec<String>,
    pub render_input: Option<PathBuf>,
    pub render_shape: Option<Vec<usize>>,
    pub render_output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    File(DatasetSource),
    /// The four XOR points with labels `x1 != x2`.
    Xor,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

pub fn parse_shape(v: &str) -> Result<Vec<usize>> {
    v.split(['x', ','])
        .map(|d| parse_num::<usize>("shape", d.trim()))
        .collect()
}

impl ExperimentConfig {
    /// Defaults, then the config file (if any), then flags.
    pub fn load(file: Option<&Path>, flags: &BTreeMap<String, String>) -> Result<Self> {
        let mut kv = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            kv.extend(parse_kv(&text)?);
        }
        kv.extend(flags.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_map(kv)
    }

    pub fn from_map(overrides: BTreeMap<String, String>) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in overrides {
            if !kv.contains_key(&k) {
                return Err(Error::Config(format!("unknown key {k:?}")));
            }
            kv.insert(k, v);
        }
        let get = |k: &str| kv[k].as_str();
        let opt = |k: &str| Some(kv[k].as_str()).filter(|s| !s.is_empty());
        let path = |k: &str| opt(k).map(PathBuf::from);

        let data = match get("data.format") {
            "idx" => match (path("data.images"), path("data.labels")) {
                (Some(images), Some(labels)) => Some(DataSpec::File(DatasetSource::Idx { images, labels })),
                (None, None) => None,
                _ => return Err(Error::Config("idx data needs both data.images and data.labels".into())),
            },
            "image-dir" => path("data.dir").map(|root| {
                DataSpec::File(DatasetSource::ImageDir {
                    root,
                    grayscale: kv["data.grayscale"] == "true",
                })
            }),
            "xor" => Some(DataSpec::Xor),
            other => return Err(Error::Config(format!("unknown data.format {other:?}"))),
        };
        parse_bool("data.grayscale", get("data.grayscale"))?;
        let test_data = match (path("data.test_images"), path("data.test_labels")) {
            (Some(images), Some(labels)) => Some(DatasetSource::Idx { images, labels }),
            (None, None) => None,
            _ => return Err(Error::Config("test data needs both data.test_images and data.test_labels".into())),
        };

        let kind = match get("method.name") {
            "la" => MethodKind::La,
            "sm" => MethodKind::Sm,
            "ig" => MethodKind::Ig,
            "sg" => MethodKind::Sg,
            "random" => MethodKind::Random,
            other => return Err(Error::Config(format!("unknown method.name {other:?}"))),
        };
        let linear = match get("method.mode") {
            "linear" => true,
            "constant" => false,
            other => return Err(Error::Config(format!("unknown method.mode {other:?}"))),
        };
        let method = MethodConfig {
            kind,
            iterations: parse_num("method.N", get("method.N"))?,
            spatial_range: parse_num("method.s_range", get("method.s_range"))?,
            targets: opt("method.k_targets").map(|v| parse_num("method.k_targets", v)).transpose()?,
            linear,
            epsilon_floor: parse_num("method.eps_min", get("method.eps_min"))?,
            constant_radius: opt("method.eps_const").map(|v| parse_num("method.eps_const", v)).transpose()?,
            attack: get("method.attack").parse()?,
            clamp: parse_bool("method.clamp", get("method.clamp"))?,
            ig_steps: parse_num("method.ig_steps", get("method.ig_steps"))?,
            sg_sigma: parse_num("method.sg_sigma", get("method.sg_sigma"))?,
            sg_samples: parse_num("method.sg_n", get("method.sg_n"))?,
            signed: parse_bool("method.signed", get("method.signed"))?,
        };
        if method.iterations < 1 {
            return Err(Error::Config("method.N must be at least 1".into()));
        }
        if !(method.spatial_range > 0.0) {
            return Err(Error::Config("method.s_range must be positive".into()));
        }

        let baseline = match get("metric.baseline") {
            "zeros" | "black" => BaselineKind::Zeros,
            "mean" | "blur" => BaselineKind::Mean,
            other => return Err(Error::Config(format!("unknown metric.baseline {other:?}"))),
        };
        let label = match get("run.label") {
            "predicted" => LabelChoice::Predicted,
            "true" => LabelChoice::True,
            other => return Err(Error::Config(format!("unknown run.label {other:?}"))),
        };
        let n_points: usize = parse_num("metric.n_points", get("metric.n_points"))?;
        if n_points < 2 {
            return Err(Error::Config("metric.n_points must be at least 2".into()));
        }

        Ok(Self {
            model_path: path("model.path"),
            arch: get("model.arch").to_string(),
            data,
            test_data,
            train: TrainConfig {
                learning_rate: parse_num("train.lr", get("train.lr"))?,
                epochs: parse_num("train.epochs", get("train.epochs"))?,
                batch_size: parse_num("train.batch", get("train.batch"))?,
                seed: parse_num("train.seed", get("train.seed"))?,
            },
            method,
            baseline,
            n_points,
            samples: parse_num("run.samples", get("run.samples"))?,
            offset: parse_num("run.offset", get("run.offset"))?,
            seed: parse_num("run.seed", get("run.seed"))?,
            out_dir: PathBuf::from(get("run.out")),
            label,
            maps_dir: path("run.maps"),
            heatmaps: parse_bool("run.heatmaps", get("run.heatmaps"))?,
            colormap: get("run.colormap").parse()?,
            ablate_param: opt("ablate.param").map(str::to_string),
            ablate_values: opt("ablate.values")
                .map(|v| v.split(',').map(|s| s.trim().to_string()).collect())
                .unwrap_or_default(),
            render_input: path("render.input"),
            render_shape: opt("render.shape").map(parse_shape).transpose()?,
            render_output: path("render.output"),
            raw: kv,
        })
    }

    /// Returns a copy with one key replaced, re-validated.
    pub fn with(&self, key: &str, value: &str) -> Result<Self> {
        let mut kv = self.raw.clone();
        kv.insert(key.to_string(), value.to_string());
        Self::from_map(kv)
    }
}

/// SplitMix64 finalizer; derives independent per-sample seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
