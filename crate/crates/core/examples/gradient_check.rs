//! Compares reverse-mode input gradients with central finite differences on
//! a small CNN and an MLP.
//!
//!     cargo run --example gradient_check

use localattr::model::finite_diff_gradient;
use localattr::{presets, Classifier, LayerSpec, Loss, ModelGraph, Padding, Tensor};

fn max_rel_error(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn main() -> localattr::Result<()> {
    let cnn = ModelGraph::build(
        &[1, 6, 6],
        &[
            LayerSpec::Conv2d { in_channels: 1, out_channels: 4, kernel: 3, padding: Padding::Same },
            LayerSpec::Tanh,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 36, outputs: 3 },
        ],
        1,
    )?;
    let mlp = ModelGraph::build(&[5], &presets::mlp(5, 7, 4), 2)?;

    for (name, model) in [("cnn", &cnn), ("mlp", &mlp)] {
        let n: usize = model.input_shape().iter().product();
        let x = Tensor::new(model.input_shape().to_vec(), (0..n).map(|i| ((i * 37) % 17) as f64 / 17.0).collect())?;
        let loss = Loss::CrossEntropy(1);
        let exact = model.input_gradient(&x, &loss)?;
        let approx = finite_diff_gradient(model, &x, &loss, 1e-4)?;
        println!(
            "{name}: {} inputs, {} parameters, max relative error {:.2e}",
            n,
            model.parameter_count(),
            max_rel_error(&exact, &approx)
        );
    }

    // the logit gradient of cross-entropy is softmax(z) - onehot(y)
    let z = [2.0, 1.0, 0.0];
    let (loss, grad) = localattr::softmax_cross_entropy(&z, 0)?;
    println!("cross-entropy at z={z:?}, y=0: loss {loss:.4}, dL/dz {grad:.4?}");
    Ok(())
}
