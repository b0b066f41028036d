//! Sweeps one LA parameter through the experiment runner and prints the CSV
//! that `localattr ablate` would write.
//!
//!     cargo run --release --example ablation_sweep -- N 1,5,10,20

use std::collections::BTreeMap;
use std::path::Path;

use localattr::experiment::{ablate_in_memory, ablation_csv, ablation_key, load_data};
use localattr::{presets, train_sgd, ExperimentConfig, ModelGraph, TrainConfig};

fn main() -> localattr::Result<()> {
    let mut args = std::env::args().skip(1);
    let param = args.next().unwrap_or_else(|| "mode".into());
    let values = args.next().unwrap_or_else(|| "linear,constant".into());
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/digits");

    let train_cfg = ExperimentConfig::from_map(BTreeMap::from([
        ("data.images".to_string(), dir.join("train-images.idx3-ubyte").display().to_string()),
        ("data.labels".to_string(), dir.join("train-labels.idx1-ubyte").display().to_string()),
    ]))?;
    let model = ModelGraph::build(&[1, 8, 8], &presets::small_cnn(8, 10), 9)?;
    let (model, _) = train_sgd(&model, &load_data(&train_cfg)?, &TrainConfig { learning_rate: 0.1, ..TrainConfig::default() })?;

    let cfg = ExperimentConfig::from_map(BTreeMap::from([
        ("data.images".to_string(), dir.join("test-images.idx3-ubyte").display().to_string()),
        ("data.labels".to_string(), dir.join("test-labels.idx1-ubyte").display().to_string()),
        ("run.samples".to_string(), "30".to_string()),
        ("ablate.param".to_string(), param.clone()),
        ("ablate.values".to_string(), values),
    ]))?;
    let key = ablation_key(&param)?;
    let rows = ablate_in_memory(&model, &load_data(&cfg)?, &cfg, key)?;
    print!("{}", ablation_csv(key.trim_start_matches("method."), &rows));
    Ok(())
}
