//! End-to-end commands behind the `localattr` binary: train, attribute,
//! evaluate, ablate, render. Each takes an [`ExperimentConfig`] and writes its
//! artifacts under `run.out`.
//!
//! Samples are processed in parallel; results are always assembled in sample
//! order, and each sample draws randomness only from
//! `derive_seed(run.seed, sample_index)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::attribution::{read_values, AttributionMap, MethodSnapshot};
use crate::autodiff::Loss;
use crate::baselines::{integrated_gradients, random_attribution, saliency, smoothgrad};
use crate::config::{derive_seed, BaselineKind, DataSpec, ExperimentConfig, LabelChoice, MethodKind};
use crate::dataset::{load_dataset, Dataset, Sample};
use crate::error::{Error, Result};
use crate::heatmap::{render, Heatmap};
use crate::local::{local_attribution, ConstraintMode, LocalConfig};
use crate::metrics::{deletion_curve, insertion_curve, mean_baseline, rank_dimensions, MetricCurve};
use crate::model::{presets, train_sgd, Classifier, LayerSpec, ModelGraph, TrainReport};
use crate::tensor::Tensor;
use crate::weights::{load_weights, save_weights};

/// Wraps a classifier and counts input-gradient evaluations.
pub struct Counting<'a, M: ?Sized> {
    inner: &'a M,
    count: AtomicUsize,
}

impl<'a, M: Classifier + ?Sized> Counting<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}

impl<M: Classifier + ?Sized> Classifier for Counting<'_, M> {
    fn input_shape(&self) -> &[usize] {
        self.inner.input_shape()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.inner.logits(x)
    }

    fn input_gradient(&self, x: &Tensor, loss: &Loss) -> Result<Tensor> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.input_gradient(x, loss)
    }
}

/// The four XOR corners, labelled `x1 != x2`.
pub fn xor_dataset() -> Dataset {
    let samples = [([0.0, 0.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)]
        .into_iter()
        .map(|(x, label)| Sample {
            input: Tensor::from_vec(x.to_vec()),
            label,
        })
        .collect();
    Dataset::new(samples, vec![2], 2).expect("static dataset")
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        Some(DataSpec::File(source)) => load_dataset(source),
        Some(DataSpec::Xor) => Ok(xor_dataset()),
        None => Err(Error::Config("no dataset configured (data.images/data.labels or data.dir)".into())),
    }
}

/// Layer specs for `model.arch`: `cnn`, `linear`, `mlp` or `mlp:<hidden>`.
pub fn architecture(arch: &str, input_shape: &[usize], classes: usize) -> Result<Vec<LayerSpec>> {
    let n: usize = input_shape.iter().product();
    match arch {
        "cnn" => match *input_shape {
            [1, h, w] if h == w && h >= 4 => Ok(presets::small_cnn(h, classes)),
            _ => Err(Error::Config(format!(
                "cnn needs square single-channel input of side >= 4, got {input_shape:?}"
            ))),
        },
        "linear" => Ok(vec![LayerSpec::Flatten, LayerSpec::Dense { inputs: n, outputs: classes }]),
        "mlp" => Ok(presets::mlp(n, 32, classes)),
        other => match other.strip_prefix("mlp:").map(str::parse::<usize>) {
            Some(Ok(hidden)) if hidden > 0 => Ok(presets::mlp(n, hidden, classes)),
            _ => Err(Error::Config(format!("unknown model.arch {other:?}"))),
        },
    }
}

fn model_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.model_path.clone().unwrap_or_else(|| cfg.out_dir.join("model.law"))
}

fn load_model(cfg: &ExperimentConfig, data: &Dataset) -> Result<ModelGraph> {
    let path = cfg
        .model_path
        .as_ref()
        .ok_or_else(|| Error::Config("model.path is required".into()))?;
    let model = load_weights(path)?;
    if model.input_shape() != data.input_shape() {
        return Err(Error::Dimension(format!(
            "model expects input {:?}, dataset has {:?}",
            model.input_shape(),
            data.input_shape()
        )));
    }
    Ok(model)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable report") + "\n"
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub arch: String,
    pub parameters: usize,
    pub untrained_accuracy: f64,
    pub report: TrainReport,
    pub test_accuracy: Option<f64>,
    pub weights: PathBuf,
}

/// Trains `model.arch` on the configured data and saves the weights to
/// `model.path` (default `<run.out>/model.law`).
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let data = load_data(cfg)?;
    let specs = architecture(&cfg.arch, data.input_shape(), data.classes())?;
    let model = ModelGraph::build(data.input_shape(), &specs, cfg.train.seed)?;
    let untrained_accuracy = model.accuracy(&data)?;
    let (trained, report) = train_sgd(&model, &data, &cfg.train)?;
    let test_accuracy = match &cfg.test_data {
        Some(source) => Some(trained.accuracy(&load_dataset(source)?)?),
        None => None,
    };
    let weights = model_path(cfg);
    if let Some(parent) = weights.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_weights(&trained, &weights)?;
    let summary = TrainSummary {
        arch: cfg.arch.clone(),
        parameters: trained.parameter_count(),
        untrained_accuracy,
        report,
        test_accuracy,
        weights,
    };
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("train_report.json"), to_json(&summary))?;
    Ok(summary)
}

/// `run.samples` samples starting at `run.offset`, clipped to the dataset.
pub fn select_samples<'d>(data: &'d Dataset, cfg: &ExperimentConfig) -> Result<Vec<(usize, &'d Sample)>> {
    let chosen: Vec<_> = data
        .samples()
        .iter()
        .enumerate()
        .skip(cfg.offset)
        .take(cfg.samples)
        .collect();
    if chosen.is_empty() {
        return Err(Error::Argument(format!(
            "empty sample set: offset {} and count {} over {} samples",
            cfg.offset,
            cfg.samples,
            data.len()
        )));
    }
    Ok(chosen)
}

pub fn baseline_for(kind: BaselineKind, x: &Tensor) -> Tensor {
    match kind {
        BaselineKind::Zeros => Tensor::zeros_like(x),
        BaselineKind::Mean => mean_baseline(x),
    }
}

/// The label a sample's map explains.
pub fn explained_label<M: Classifier + ?Sized>(model: &M, sample: &Sample, choice: LabelChoice) -> Result<usize> {
    match choice {
        LabelChoice::Predicted => model.predict(&sample.input),
        LabelChoice::True => Ok(sample.label),
    }
}

/// LA settings for one sample. Constant mode without an explicit radius
/// uses `mean(|x|) / s_range`.
pub fn local_config(cfg: &ExperimentConfig, x: &Tensor) -> LocalConfig {
    let m = &cfg.method;
    let mode = if m.linear {
        ConstraintMode::Linear
    } else {
        let radius = m
            .constant_radius
            .unwrap_or_else(|| x.data().iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64 / m.spatial_range);
        ConstraintMode::Constant { radius }
    };
    LocalConfig {
        iterations: m.iterations,
        spatial_range: m.spatial_range,
        targets: m.targets,
        mode,
        epsilon_floor: m.epsilon_floor,
        attack: m.attack,
        clamp: m.clamp,
    }
}

/// Runs the configured method on one input.
pub fn compute_map<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    label: usize,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<AttributionMap> {
    let m = &cfg.method;
    let loss = Loss::CrossEntropy(label);
    match m.kind {
        MethodKind::La => Ok(local_attribution(model, x, label, &local_config(cfg, x))?.0),
        MethodKind::Sm => saliency(model, x, &loss, m.signed),
        MethodKind::Ig => integrated_gradients(model, x, &loss, &baseline_for(cfg.baseline, x), m.ig_steps),
        MethodKind::Sg => smoothgrad(model, x, &loss, m.sg_sigma, m.sg_samples, seed),
        MethodKind::Random => random_attribution(x.shape(), seed),
    }
}

fn map_stem(index: usize) -> String {
    format!("sample_{index:05}")
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributeSummary {
    pub method: &'static str,
    pub maps: Vec<PathBuf>,
    pub heatmaps: Vec<PathBuf>,
    pub gradient_evaluations: usize,
}

/// Writes `maps/sample_NNNNN.lam` and `.csv` per sample, plus PPM and PNG
/// heatmaps under `heatmaps/` when `run.heatmaps` is set.
pub fn cmd_attribute(cfg: &ExperimentConfig) -> Result<AttributeSummary> {
    let data = load_data(cfg)?;
    let model = load_model(cfg, &data)?;
    let chosen = select_samples(&data, cfg)?;
    let maps_dir = cfg.out_dir.join("maps");
    create_dir(&maps_dir)?;
    let heat_dir = cfg.out_dir.join("heatmaps");
    if cfg.heatmaps {
        create_dir(&heat_dir)?;
    }

    let results: Vec<(PathBuf, Vec<PathBuf>, usize)> = chosen
        .par_iter()
        .map(|&(index, sample)| {
            let counted = Counting::new(&model);
            let label = explained_label(&model, sample, cfg.label)?;
            let map = compute_map(&counted, &sample.input, label, cfg, derive_seed(cfg.seed, index as u64))?
                .with_sample(index);
            let stem = map_stem(index);
            let bin = maps_dir.join(format!("{stem}.lam"));
            map.write_binary(&bin)?;
            map.write_csv(&maps_dir.join(format!("{stem}.csv")))?;
            let mut images = Vec::new();
            if cfg.heatmaps {
                let hm = render(map.values.data(), sample.input.shape(), cfg.colormap)?;
                let ppm = heat_dir.join(format!("{stem}.ppm"));
                let png = heat_dir.join(format!("{stem}.png"));
                hm.write_ppm(&ppm)?;
                hm.write_png(&png)?;
                images.extend([ppm, png]);
            }
            Ok((bin, images, counted.count()))
        })
        .collect::<Result<_>>()?;

    let mut summary = AttributeSummary {
        method: method_tag(cfg),
        maps: Vec::new(),
        heatmaps: Vec::new(),
        gradient_evaluations: 0,
    };
    for (bin, images, evals) in results {
        summary.maps.push(bin);
        summary.heatmaps.extend(images);
        summary.gradient_evaluations += evals;
    }
    Ok(summary)
}

fn method_tag(cfg: &ExperimentConfig) -> &'static str {
    match cfg.method.kind {
        MethodKind::La => "la",
        MethodKind::Sm => "sm",
        MethodKind::Ig => "ig",
        MethodKind::Sg => "sg",
        MethodKind::Random => "random",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResult {
    pub index: usize,
    pub label: usize,
    pub predicted: usize,
    pub explained: usize,
    pub insertion_auc: f64,
    pub deletion_auc: f64,
    pub gradient_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub method: String,
    pub config: BTreeMap<String, String>,
    pub samples: Vec<SampleResult>,
    pub mean_insertion_auc: f64,
    pub mean_deletion_auc: f64,
    pub total_gradient_evaluations: usize,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// One row per sample, in report order.
    pub fn samples_csv(&self) -> String {
        let mut s = String::from("index,label,predicted,explained,insertion_auc,deletion_auc,gradient_evaluations\n");
        for r in &self.samples {
            s.push_str(&format!(
                "{},{},{},{},{:e},{:e},{}\n",
                r.index, r.label, r.predicted, r.explained, r.insertion_auc, r.deletion_auc, r.gradient_evaluations
            ));
        }
        s
    }
}

/// Everything computed for one evaluated sample.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub result: SampleResult,
    pub map: AttributionMap,
    pub insertion: MetricCurve,
    pub deletion: MetricCurve,
}

/// Attribution (inline, or read from `run.maps`) plus both curves.
pub fn evaluate_sample<M: Classifier + ?Sized>(
    model: &M,
    index: usize,
    sample: &Sample,
    cfg: &ExperimentConfig,
) -> Result<Evaluated> {
    let x = &sample.input;
    let predicted = model.predict(x)?;
    let explained = explained_label(model, sample, cfg.label)?;
    let counted = Counting::new(model);
    let map = match &cfg.maps_dir {
        Some(dir) => {
            let values = read_values(&dir.join(format!("{}.lam", map_stem(index))))?;
            values.ensure_same_shape(x, "stored attribution map")?;
            AttributionMap::new(values, MethodSnapshot::Random { seed: 0 })?
        }
        None => compute_map(&counted, x, explained, cfg, derive_seed(cfg.seed, index as u64))?,
    }
    .with_sample(index);
    let ranking = rank_dimensions(map.values.data())?;
    let baseline = baseline_for(cfg.baseline, x);
    let insertion = insertion_curve(model, x, &ranking, &baseline, cfg.n_points)?;
    let deletion = deletion_curve(model, x, &ranking, &baseline, cfg.n_points)?;
    if !insertion.auc.is_finite() || !deletion.auc.is_finite() {
        return Err(Error::Domain(format!("non-finite AUC for sample {index}")));
    }
    Ok(Evaluated {
        result: SampleResult {
            index,
            label: sample.label,
            predicted,
            explained,
            insertion_auc: insertion.auc,
            deletion_auc: deletion.auc,
            gradient_evaluations: counted.count(),
        },
        map,
        insertion,
        deletion,
    })
}

/// Evaluates every selected sample without touching the filesystem.
pub fn evaluate_in_memory<M: Classifier + ?Sized>(
    model: &M,
    data: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<(RunReport, Vec<Evaluated>)> {
    let start = Instant::now();
    let chosen = select_samples(data, cfg)?;
    let evaluated: Vec<Evaluated> = chosen
        .par_iter()
        .map(|&(index, sample)| evaluate_sample(model, index, sample, cfg))
        .collect::<Result<_>>()?;
    let samples: Vec<SampleResult> = evaluated.iter().map(|e| e.result.clone()).collect();
    let n = samples.len() as f64;
    let report = RunReport {
        method: if cfg.maps_dir.is_some() { "stored".into() } else { method_tag(cfg).into() },
        config: cfg.raw.clone(),
        mean_insertion_auc: samples.iter().map(|s| s.insertion_auc).sum::<f64>() / n,
        mean_deletion_auc: samples.iter().map(|s| s.deletion_auc).sum::<f64>() / n,
        total_gradient_evaluations: samples.iter().map(|s| s.gradient_evaluations).sum(),
        samples,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, evaluated))
}

/// Writes `report.json`, `samples.csv`, and `curves/sample_NNNNN_{insertion,deletion}.csv`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<RunReport> {
    let data = load_data(cfg)?;
    let model = load_model(cfg, &data)?;
    let (report, evaluated) = evaluate_in_memory(&model, &data, cfg)?;
    let curves = cfg.out_dir.join("curves");
    create_dir(&curves)?;
    for e in &evaluated {
        let stem = map_stem(e.result.index);
        write_file(&curves.join(format!("{stem}_insertion.csv")), e.insertion.to_csv())?;
        write_file(&curves.join(format!("{stem}_deletion.csv")), e.deletion.to_csv())?;
    }
    write_file(&cfg.out_dir.join("report.json"), report.to_json())?;
    write_file(&cfg.out_dir.join("samples.csv"), report.samples_csv())?;
    Ok(report)
}

/// Config key swept by an ablation parameter name.
pub fn ablation_key(param: &str) -> Result<&'static str> {
    Ok(match param {
        "mode" | "method.mode" => "method.mode",
        "attack_type" | "attack" | "method.attack" => "method.attack",
        "N" | "method.N" => "method.N",
        "s_range" | "method.s_range" => "method.s_range",
        "k_targets" | "method.k_targets" => "method.k_targets",
        other => {
            return Err(Error::Config(format!(
                "cannot sweep {other:?}; expected mode, attack_type, N, s_range or k_targets"
            )))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub value: String,
    pub mean_insertion_auc: f64,
    pub mean_deletion_auc: f64,
    pub gradient_evaluations: usize,
}

pub fn ablation_csv(param: &str, rows: &[AblationRow]) -> String {
    let mut s = format!("{param},mean_insertion_auc,mean_deletion_auc,gradient_evaluations\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:e},{:e},{}\n",
            r.value, r.mean_insertion_auc, r.mean_deletion_auc, r.gradient_evaluations
        ));
    }
    s
}

/// One evaluation per value of `ablate.param`, all under the same seed;
/// writes `ablation_<param>.csv`.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let param = cfg
        .ablate_param
        .as_deref()
        .ok_or_else(|| Error::Config("ablate.param is required".into()))?;
    let key = ablation_key(param)?;
    if cfg.ablate_values.is_empty() {
        return Err(Error::Config("ablate.values is empty".into()));
    }
    let data = load_data(cfg)?;
    let model = load_model(cfg, &data)?;
    let rows = ablate_in_memory(&model, &data, cfg, key)?;
    create_dir(&cfg.out_dir)?;
    let name = key.trim_start_matches("method.");
    write_file(&cfg.out_dir.join(format!("ablation_{name}.csv")), ablation_csv(name, &rows))?;
    Ok(rows)
}

pub fn ablate_in_memory<M: Classifier + ?Sized>(
    model: &M,
    data: &Dataset,
    cfg: &ExperimentConfig,
    key: &str,
) -> Result<Vec<AblationRow>> {
    cfg.ablate_values
        .iter()
        .map(|value| {
            let run = cfg.with(key, value)?;
            let (report, _) = evaluate_in_memory(model, data, &run)?;
            Ok(AblationRow {
                value: value.clone(),
                mean_insertion_auc: report.mean_insertion_auc,
                mean_deletion_auc: report.mean_deletion_auc,
                gradient_evaluations: report.total_gradient_evaluations,
            })
        })
        .collect()
}

/// Renders `render.input` (an attribution binary) to `render.output`. The
/// format follows the extension: `.png`, otherwise PPM.
pub fn cmd_render(cfg: &ExperimentConfig) -> Result<Heatmap> {
    let input = cfg
        .render_input
        .as_ref()
        .ok_or_else(|| Error::Config("render.input is required".into()))?;
    let output = cfg
        .render_output
        .as_ref()
        .ok_or_else(|| Error::Config("render.output is required".into()))?;
    let values = read_values(input)?;
    let shape = cfg.render_shape.clone().unwrap_or_else(|| values.shape().to_vec());
    let hm = render(values.data(), &shape, cfg.colormap)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    match output.extension().and_then(|e| e.to_str()) {
        Some("png") => hm.write_png(output)?,
        _ => hm.write_ppm(output)?,
    }
    Ok(hm)
}
