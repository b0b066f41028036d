//! Runs Local Attribution on one test digit and prints what the exploration
//! did: evaluation count, completeness totals, decision preservation, and the
//! map as text.
//!
//!     cargo run --release --example explain_digit -- 3

use std::path::Path;

use localattr::local::AttackType;
use localattr::{
    completeness_residual, decision_preservation, load_dataset, local_attribution, presets, train_sgd, Classifier,
    DatasetSource, LocalConfig, ModelGraph, TrainConfig,
};

fn main() -> localattr::Result<()> {
    let index: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/digits");
    let load = |name: &str| {
        load_dataset(&DatasetSource::Idx {
            images: dir.join(format!("{name}-images.idx3-ubyte")),
            labels: dir.join(format!("{name}-labels.idx1-ubyte")),
        })
    };
    let train = load("train")?;
    let test = load("test")?;
    let model = ModelGraph::build(&[1, 8, 8], &presets::small_cnn(8, 10), 9)?;
    let (model, _) = train_sgd(&model, &train, &TrainConfig { learning_rate: 0.1, epochs: 15, ..TrainConfig::default() })?;

    let sample = &test.samples()[index];
    let label = model.predict(&sample.input)?;
    println!("sample {index}: true label {}, predicted {label}", sample.label);

    for attack in [AttackType::Both, AttackType::Untargeted] {
        let cfg = LocalConfig { attack, ..LocalConfig::default() };
        let (map, trace) = local_attribution(&model, &sample.input, label, &cfg)?;
        let c = completeness_residual(&trace, &model)?;
        println!(
            "\n{attack}: {} gradient evaluations, sum A = {:.5}, first-order total = {:.5}, loss change = {:.5}",
            trace.gradient_evaluations(),
            c.attribution_total,
            c.first_order_total,
            c.loss_delta_total
        );
        println!("explored states keeping the prediction: {:.3}", decision_preservation(&trace, &model)?);
        for row in map.values.data().chunks(8) {
            println!("  {}", row.iter().map(|v| format!("{:>8.4}", v * 1e3)).collect::<Vec<_>>().join(""));
        }
    }
    println!("\n(values scaled by 1e3)");
    Ok(())
}
