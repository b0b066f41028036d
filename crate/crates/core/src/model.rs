//! Feed-forward classifiers: construction, evaluation, input gradients, and
//! mini-batch SGD training.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, softmax, Gradients, Loss, NodeId, Padding, ParamGrad, Tape};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Anything attribution methods can query: logits and exact input gradients.
pub trait Classifier: Sync {
    fn input_shape(&self) -> &[usize];

    fn num_classes(&self) -> usize;

    fn logits(&self, x: &Tensor) -> Result<Tensor>;

    /// Gradient of `loss` (a function of the logits) with respect to `x`.
    fn input_gradient(&self, x: &Tensor, loss: &Loss) -> Result<Tensor>;

    fn loss(&self, x: &Tensor, loss: &Loss) -> Result<f64> {
        loss.value(self.logits(x)?.data())
    }

    fn probabilities(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(softmax(self.logits(x)?.data()))
    }

    fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.logits(x)?.argmax())
    }
}

/// Central-difference estimate of the input gradient, one dimension at a time.
pub fn finite_diff_gradient<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    loss: &Loss,
    h: f64,
) -> Result<Tensor> {
    if !(h > 0.0) {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut grad = Tensor::zeros_like(x);
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = model.loss(&probe, loss)?;
        probe.data_mut()[i] = orig - h;
        let down = model.loss(&probe, loss)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Layer description used to build a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: Padding,
    },
    Relu,
    Tanh,
    Square,
    MaxPool2,
    Flatten,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense { weight: Tensor, bias: Tensor },
    Conv2d {
        kernel: Tensor,
        bias: Tensor,
        padding: Padding,
    },
    Relu,
    Tanh,
    Square,
    MaxPool2,
    Flatten,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense { weight, .. } => LayerSpec::Dense {
                inputs: weight.shape()[1],
                outputs: weight.shape()[0],
            },
            Layer::Conv2d {
                kernel, padding, ..
            } => LayerSpec::Conv2d {
                in_channels: kernel.shape()[1],
                out_channels: kernel.shape()[0],
                kernel: kernel.shape()[2],
                padding: *padding,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Tanh => LayerSpec::Tanh,
            Layer::Square => LayerSpec::Square,
            Layer::MaxPool2 => LayerSpec::MaxPool2,
            Layer::Flatten => LayerSpec::Flatten,
        }
    }

    pub(crate) fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Dense { weight, bias } => Some((weight, bias)),
            Layer::Conv2d { kernel, bias, .. } => Some((kernel, bias)),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Dense { weight, bias } => Some((weight, bias)),
            Layer::Conv2d { kernel, bias, .. } => Some((kernel, bias)),
            _ => None,
        }
    }
}

fn output_shape(spec: &LayerSpec, input: &[usize]) -> Result<Vec<usize>> {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => {
            if input != [inputs] {
                return Err(Error::Spec(format!(
                    "dense({inputs}->{outputs}) cannot take input shape {input:?}"
                )));
            }
            if outputs == 0 {
                return Err(Error::Spec("dense layer with zero outputs".into()));
            }
            Ok(vec![outputs])
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => {
            let &[c, h, w] = input else {
                return Err(Error::Spec(format!("conv2d needs [C,H,W] input, got {input:?}")));
            };
            if c != in_channels || out_channels == 0 || kernel == 0 {
                return Err(Error::Spec(format!(
                    "conv2d({in_channels}->{out_channels}, k={kernel}) cannot take input shape {input:?}"
                )));
            }
            match padding {
                Padding::Same => Ok(vec![out_channels, h, w]),
                Padding::Valid if kernel <= h && kernel <= w => {
                    Ok(vec![out_channels, h - kernel + 1, w - kernel + 1])
                }
                Padding::Valid => Err(Error::Spec(format!(
                    "kernel {kernel} larger than spatial input {h}x{w}"
                ))),
            }
        }
        LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Square => Ok(input.to_vec()),
        LayerSpec::MaxPool2 => match *input {
            [c, h, w] if h >= 2 && w >= 2 => Ok(vec![c, h / 2, w / 2]),
            _ => Err(Error::Spec(format!("max pool cannot take input shape {input:?}"))),
        },
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
    }
}

/// A differentiable feed-forward classifier. Immutable once built; share it
/// freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    classes: usize,
}

impl ModelGraph {
    /// Builds a model with parameters drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` using a seeded ChaCha stream.
    pub fn build(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in specs {
            let next = output_shape(spec, &shape)?;
            let layer = match *spec {
                LayerSpec::Dense { inputs, outputs } => {
                    let k = 1.0 / (inputs as f64).sqrt();
                    Layer::Dense {
                        weight: uniform(&mut rng, &[outputs, inputs], k),
                        bias: uniform(&mut rng, &[outputs], k),
                    }
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                } => {
                    let k = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
                    Layer::Conv2d {
                        kernel: uniform(&mut rng, &[out_channels, in_channels, kernel, kernel], k),
                        bias: uniform(&mut rng, &[out_channels], k),
                        padding,
                    }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Tanh => Layer::Tanh,
                LayerSpec::Square => Layer::Square,
                LayerSpec::MaxPool2 => Layer::MaxPool2,
                LayerSpec::Flatten => Layer::Flatten,
            };
            layers.push(layer);
            shape = next;
        }
        Self::from_layers(input_shape, layers)
    }

    /// Assembles a model from explicit layers, validating the shape chain.
    pub fn from_layers(input_shape: &[usize], layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Spec(format!("invalid input shape {input_shape:?}")));
        }
        let mut shape = input_shape.to_vec();
        for layer in &layers {
            if let Layer::Conv2d { kernel, .. } = layer {
                if kernel.shape().len() != 4 || kernel.shape()[2] != kernel.shape()[3] {
                    return Err(Error::Spec(format!(
                        "conv kernels must be square [O,C,K,K], got {:?}",
                        kernel.shape()
                    )));
                }
            }
            if let Some((w, b)) = layer.params() {
                if b.shape() != [w.shape()[0]] {
                    return Err(Error::Spec(format!(
                        "bias shape {:?} does not match weight shape {:?}",
                        b.shape(),
                        w.shape()
                    )));
                }
            }
            shape = output_shape(&layer.spec(), &shape)?;
        }
        let &[classes] = shape.as_slice() else {
            return Err(Error::Spec(format!("model must end in a vector of logits, got {shape:?}")));
        };
        if classes < 2 {
            return Err(Error::Spec(format!("need at least 2 classes, got {classes}")));
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            classes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::Dimension(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        x.ensure_finite("model input")
    }

    /// Records a forward pass on `tape`, returning the input and logit node ids.
    pub fn record<'m>(&'m self, tape: &mut Tape<'m>, x: &Tensor) -> Result<(NodeId, NodeId)> {
        self.check_input(x)?;
        let input = tape.input(x.clone())?;
        let mut cur = input;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Dense { weight, bias } => tape.dense(cur, weight, bias, Some(i))?,
                Layer::Conv2d {
                    kernel,
                    bias,
                    padding,
                } => tape.conv2d(cur, kernel, bias, *padding, Some(i))?,
                Layer::Relu => tape.relu(cur)?,
                Layer::Tanh => tape.tanh(cur)?,
                Layer::Square => tape.square(cur)?,
                Layer::MaxPool2 => tape.max_pool2(cur)?,
                Layer::Flatten => {
                    let n = tape.value(cur)?.len();
                    tape.reshape(cur, &[n])?
                }
            };
        }
        Ok((input, cur))
    }

    /// Forward pass that keeps the tape for a later backward pass.
    pub fn forward(&self, x: &Tensor) -> Result<Forward<'_>> {
        let mut tape = Tape::new();
        let (input, output) = self.record(&mut tape, x)?;
        Ok(Forward {
            tape,
            input,
            output,
        })
    }

    /// Applies `param -= lr * grad` for every parameterized layer in `grads`.
    pub fn apply_gradients(&mut self, grads: &std::collections::BTreeMap<usize, ParamGrad>, lr: f64) {
        for (&i, g) in grads {
            if let Some((w, b)) = self.layers[i].params_mut() {
                for (p, d) in w.data_mut().iter_mut().zip(g.weight.data()) {
                    *p -= lr * d;
                }
                for (p, d) in b.data_mut().iter_mut().zip(g.bias.data()) {
                    *p -= lr * d;
                }
            }
        }
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Argument("accuracy of an empty dataset".into()));
        }
        let mut hits = 0usize;
        for s in data.samples() {
            if self.predict(&s.input)? == s.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], k: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-k..=k)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive extents")
}

impl Classifier for ModelGraph {
    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Dense { weight, bias } => kernels::dense(weight, bias, &cur)?,
                Layer::Conv2d {
                    kernel,
                    bias,
                    padding,
                } => kernels::conv2d(kernel, bias, &cur, *padding)?,
                Layer::Relu => cur.map(kernels::relu),
                Layer::Tanh => cur.map(f64::tanh),
                Layer::Square => cur.map(|v| v * v),
                Layer::MaxPool2 => kernels::max_pool2(&cur)?.0,
                Layer::Flatten => {
                    let n = cur.len();
                    cur.reshape(&[n])?
                }
            };
        }
        Ok(cur)
    }

    fn input_gradient(&self, x: &Tensor, loss: &Loss) -> Result<Tensor> {
        self.forward(x)?.grad_input(loss)
    }
}

/// A recorded forward pass.
#[derive(Debug)]
pub struct Forward<'m> {
    tape: Tape<'m>,
    input: NodeId,
    output: NodeId,
}

impl<'m> Forward<'m> {
    pub fn logits(&self) -> &Tensor {
        self.tape.value(self.output).expect("output recorded")
    }

    pub fn tape(&self) -> &Tape<'m> {
        &self.tape
    }

    fn seed(&self, loss: &Loss) -> Result<Tensor> {
        Ok(Tensor::from_vec(loss.logit_gradient(self.logits().data())?))
    }

    /// Exact gradient of `loss` with respect to the recorded input.
    pub fn grad_input(&self, loss: &Loss) -> Result<Tensor> {
        let grads = self.tape.backward_inputs(self.output, &self.seed(loss)?)?;
        let g = grads
            .wrt(self.input)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros_like(self.tape.value(self.input).expect("input")));
        Ok(g)
    }

    /// Full backward pass, including parameter gradients.
    pub fn backward(&self, loss: &Loss) -> Result<Gradients> {
        self.tape.backward(self.output, &self.seed(loss)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    /// Mean cross-entropy over the last epoch.
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Plain mini-batch SGD on softmax cross-entropy. Sample order is reshuffled
/// each epoch from `cfg.seed`.
pub fn train_sgd(model: &ModelGraph, data: &Dataset, cfg: &TrainConfig) -> Result<(ModelGraph, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if !(cfg.learning_rate >= 0.0) || !cfg.learning_rate.is_finite() {
        return Err(Error::Argument(format!("learning rate {} must be >= 0", cfg.learning_rate)));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Argument("batch size must be positive".into()));
    }
    if data.input_shape() != model.input_shape() {
        return Err(Error::Dimension(format!(
            "dataset inputs {:?} vs model inputs {:?}",
            data.input_shape(),
            model.input_shape()
        )));
    }
    if data.classes() > model.num_classes() {
        return Err(Error::Dimension(format!(
            "dataset has {} classes, model only {}",
            data.classes(),
            model.num_classes()
        )));
    }

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut final_loss = f64::NAN;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: std::collections::BTreeMap<usize, ParamGrad> = Default::default();
            for &i in batch {
                let s = &data.samples()[i];
                let fwd = model.forward(&s.input)?;
                let loss = Loss::CrossEntropy(s.label);
                epoch_loss += loss.value(fwd.logits().data())?;
                for (k, g) in fwd.backward(&loss)?.into_params() {
                    match acc.get_mut(&k) {
                        Some(a) => {
                            for (x, y) in a.weight.data_mut().iter_mut().zip(g.weight.data()) {
                                *x += y;
                            }
                            for (x, y) in a.bias.data_mut().iter_mut().zip(g.bias.data()) {
                                *x += y;
                            }
                        }
                        None => {
                            acc.insert(k, g);
                        }
                    }
                }
            }
            if cfg.learning_rate > 0.0 {
                model.apply_gradients(&acc, cfg.learning_rate / batch.len() as f64);
            }
        }
        final_loss = epoch_loss / data.len() as f64;
        if !final_loss.is_finite() {
            return Err(Error::Domain("training loss diverged".into()));
        }
    }

    let train_accuracy = model.accuracy(data)?;
    Ok((
        model,
        TrainReport {
            epochs: cfg.epochs,
            final_loss,
            train_accuracy,
        },
    ))
}

/// Ready-made architectures.
pub mod presets {
    use super::LayerSpec;
    use crate::autodiff::Padding;

    /// `inputs -> hidden (relu) -> classes`.
    pub fn mlp(inputs: usize, hidden: usize, classes: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs,
                outputs: hidden,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: hidden,
                outputs: classes,
            },
        ]
    }

    /// Small LeNet-style network for single-channel `side x side` images:
    /// conv3x3(8) relu pool, conv3x3(16) relu pool, dense(32) relu, dense(classes).
    pub fn small_cnn(side: usize, classes: usize) -> Vec<LayerSpec> {
        let after = (side / 2) / 2;
        vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 8,
                kernel: 3,
                padding: Padding::Same,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv2d {
                in_channels: 8,
                out_channels: 16,
                kernel: 3,
                padding: Padding::Same,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 16 * after * after,
                outputs: 32,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: 32,
                outputs: classes,
            },
        ]
    }
}
