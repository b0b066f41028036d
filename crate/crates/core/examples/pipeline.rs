//! The full config-driven pipeline that the `localattr` binary runs: train,
//! attribute, evaluate, render. Artifacts land in the given directory.
//!
//!     cargo run --release --example pipeline -- out/pipeline

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use localattr::experiment::{cmd_attribute, cmd_evaluate, cmd_render, cmd_train};
use localattr::ExperimentConfig;

fn main() -> localattr::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("localattr-pipeline"));
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/digits");
    let base = |pairs: &[(&str, String)]| -> localattr::Result<ExperimentConfig> {
        let mut kv = BTreeMap::from([
            ("model.path".to_string(), out.join("cnn.law").display().to_string()),
            ("run.out".to_string(), out.display().to_string()),
            ("run.seed".to_string(), "7".to_string()),
        ]);
        kv.extend(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())));
        ExperimentConfig::from_map(kv)
    };
    let test = [
        ("data.images", data.join("test-images.idx3-ubyte").display().to_string()),
        ("data.labels", data.join("test-labels.idx1-ubyte").display().to_string()),
    ];

    let train = cmd_train(&base(&[
        ("data.images", data.join("train-images.idx3-ubyte").display().to_string()),
        ("data.labels", data.join("train-labels.idx1-ubyte").display().to_string()),
        ("data.test_images", test[0].1.clone()),
        ("data.test_labels", test[1].1.clone()),
        ("train.lr", "0.1".into()),
    ])?)?;
    println!("trained {} parameters, test accuracy {:.3}", train.parameters, train.test_accuracy.unwrap_or(f64::NAN));

    let mut pairs = test.to_vec();
    pairs.extend([("run.samples", "20".to_string()), ("run.heatmaps", "true".to_string())]);
    let attr = cmd_attribute(&base(&pairs)?)?;
    println!("{} maps, {} gradient evaluations", attr.maps.len(), attr.gradient_evaluations);

    let report = cmd_evaluate(&base(&pairs)?)?;
    println!(
        "insertion {:.3}, deletion {:.3} over {} samples",
        report.mean_insertion_auc,
        report.mean_deletion_auc,
        report.samples.len()
    );

    let hm = cmd_render(&base(&[
        ("render.input", attr.maps[0].display().to_string()),
        ("render.output", out.join("first.png").display().to_string()),
        ("run.colormap", "diverging".to_string()),
    ])?)?;
    println!("rendered {}x{} heatmap; artifacts in {}", hm.width, hm.height, out.display());
    Ok(())
}
