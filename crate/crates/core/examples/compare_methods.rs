//! Insertion/deletion AUCs of LA, saliency, integrated gradients, SmoothGrad
//! and a random ranking on the bundled digits.
//!
//!     cargo run --release --example compare_methods -- 50

use std::path::Path;

use localattr::local::AttackType;
use localattr::{
    deletion_curve, insertion_curve, integrated_gradients, load_dataset, local_attribution, presets,
    random_attribution, rank_dimensions, saliency, smoothgrad, train_sgd, AttributionMap, Classifier, DatasetSource,
    LocalConfig, Loss, ModelGraph, Tensor, TrainConfig,
};

fn main() -> localattr::Result<()> {
    let count: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
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
    let (model, _) = train_sgd(&model, &train, &TrainConfig { learning_rate: 0.1, epochs: 30, seed: 9, ..TrainConfig::default() })?;
    println!("test accuracy {:.3}", model.accuracy(&test)?);

    let zero = Tensor::zeros(&[1, 8, 8])?;
    let methods = ["la", "la-untargeted", "sm", "ig", "sg", "random"];
    let mut totals = vec![(0.0, 0.0); methods.len()];
    let samples = &test.samples()[..count.min(test.len())];
    for (i, s) in samples.iter().enumerate() {
        let x = &s.input;
        let y = model.predict(x)?;
        let ce = Loss::CrossEntropy(y);
        let maps: Vec<AttributionMap> = vec![
            local_attribution(&model, x, y, &LocalConfig::default())?.0,
            local_attribution(&model, x, y, &LocalConfig { attack: AttackType::Untargeted, ..LocalConfig::default() })?.0,
            saliency(&model, x, &ce, false)?,
            integrated_gradients(&model, x, &ce, &zero, 50)?,
            smoothgrad(&model, x, &ce, 0.15, 50, i as u64)?,
            random_attribution(x.shape(), i as u64)?,
        ];
        for (t, map) in totals.iter_mut().zip(&maps) {
            let r = rank_dimensions(map.values.data())?;
            t.0 += insertion_curve(&model, x, &r, &zero, 101)?.auc / samples.len() as f64;
            t.1 += deletion_curve(&model, x, &r, &zero, 101)?.auc / samples.len() as f64;
        }
    }
    println!("{:<14} {:>9} {:>9}", "method", "insertion", "deletion");
    for (name, (ins, del)) in methods.iter().zip(totals) {
        println!("{name:<14} {ins:>9.3} {del:>9.3}");
    }
    Ok(())
}
