//! Trains the small CNN on the bundled 8x8 digits and saves a LAW1 weight
//! file.
//!
//!     cargo run --release --example train_digits -- out/digits.law

use std::path::{Path, PathBuf};

use localattr::{load_dataset, load_weights, presets, save_weights, train_sgd, DatasetSource, ModelGraph, TrainConfig};

fn split(name: &str) -> DatasetSource {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/digits");
    DatasetSource::Idx {
        images: dir.join(format!("{name}-images.idx3-ubyte")),
        labels: dir.join(format!("{name}-labels.idx1-ubyte")),
    }
}

fn main() -> localattr::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "digits.law".into());
    let train = load_dataset(&split("train"))?;
    let test = load_dataset(&split("test"))?;
    println!("{} training and {} test images of shape {:?}", train.len(), test.len(), train.input_shape());

    let model = ModelGraph::build(train.input_shape(), &presets::small_cnn(8, train.classes()), 9)?;
    let cfg = TrainConfig { learning_rate: 0.1, epochs: 30, batch_size: 16, seed: 9 };
    let start = std::time::Instant::now();
    let (model, report) = train_sgd(&model, &train, &cfg)?;
    println!(
        "{} epochs in {:.1}s: final loss {:.4}, train accuracy {:.3}, test accuracy {:.3}",
        report.epochs,
        start.elapsed().as_secs_f64(),
        report.final_loss,
        report.train_accuracy,
        model.accuracy(&test)?
    );

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| localattr::Error::Format(e.to_string()))?;
    }
    save_weights(&model, &out)?;
    assert_eq!(load_weights(&out)?, model);
    println!("saved {}", out.display());
    Ok(())
}
