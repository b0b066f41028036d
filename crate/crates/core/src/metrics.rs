//! Insertion and deletion curves over a joint ranking of every input
//! dimension, with trapezoidal AUC.
//!
//! Multi-channel inputs are not reduced to pixels: each scalar dimension is
//! ranked and flipped on its own.

use serde::{Deserialize, Serialize};

use crate::autodiff::softmax;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::tensor::{argmax, Tensor};

pub const DEFAULT_CURVE_POINTS: usize = 101;

/// Dimension indices, most important first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    /// Wraps `order` after checking that it is a permutation of `0..len`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            match seen.get_mut(i) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::Argument(format!("ranking is not a permutation (index {i})"))),
            }
        }
        Ok(Self(order))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().copied().collect())
    }
}

/// Sorts dimensions by descending score; equal scores keep ascending index.
pub fn rank_dimensions(values: &[f64]) -> Result<Ranking> {
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Argument(format!("attribution value at {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("no NaN"));
    Ok(Ranking(order))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    /// `(fraction of dimensions processed, probability of the tracked class)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    /// Class whose probability is tracked: the model's prediction at `x`.
    pub class: usize,
}

impl MetricCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fraction,probability\n");
        for (f, p) in &self.points {
            s.push_str(&format!("{f},{p}\n"));
        }
        s
    }
}

/// Trapezoidal area under `(x, y)` points with increasing `x`.
pub fn auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Argument("AUC needs at least two points".into()));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Argument("curve fractions must be strictly increasing".into()));
    }
    Ok(points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum())
}

/// Number of ranked dimensions switched at curve point `j` of `n_points`.
fn switched(j: usize, n_points: usize, dims: usize) -> usize {
    let steps = n_points - 1;
    (j * dims + steps / 2) / steps
}

fn check_curve_args(x: &Tensor, ranking: &Ranking, baseline: &Tensor, n_points: usize) -> Result<()> {
    x.ensure_same_shape(baseline, "curve baseline")?;
    if ranking.len() != x.len() {
        return Err(Error::Argument(format!(
            "ranking covers {} dimensions, input has {}",
            ranking.len(),
            x.len()
        )));
    }
    if n_points < 2 {
        return Err(Error::Argument("a curve needs at least two points".into()));
    }
    Ok(())
}

/// Shared walk for both curves: starting from `start`, the first `k`
/// ranked dimensions take their values from `end`.
fn sweep(
    eval: impl Fn(&Tensor) -> Result<Vec<f64>>,
    start: &Tensor,
    end: &Tensor,
    ranking: &Ranking,
    n_points: usize,
    class: usize,
) -> Result<MetricCurve> {
    let mut state = start.clone();
    let mut done = 0usize;
    let mut points = Vec::with_capacity(n_points);
    for j in 0..n_points {
        let k = switched(j, n_points, state.len());
        for &d in &ranking.as_slice()[done..k] {
            state.data_mut()[d] = end.data()[d];
        }
        done = k;
        let p = eval(&state)?[class];
        points.push((j as f64 / (n_points - 1) as f64, p));
    }
    let auc = auc(&points)?;
    Ok(MetricCurve { points, auc, class })
}

/// Probability of the originally predicted class as ranked dimensions are
/// restored from `baseline` to their values in `x`.
pub fn insertion_curve<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    ranking: &Ranking,
    baseline: &Tensor,
    n_points: usize,
) -> Result<MetricCurve> {
    check_curve_args(x, ranking, baseline, n_points)?;
    let class = model.predict(x)?;
    sweep(|s| model.probabilities(s), baseline, x, ranking, n_points, class)
}

/// Probability of the originally predicted class as ranked dimensions of `x`
/// are replaced by `baseline` values, most important first.
pub fn deletion_curve<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    ranking: &Ranking,
    baseline: &Tensor,
    n_points: usize,
) -> Result<MetricCurve> {
    check_curve_args(x, ranking, baseline, n_points)?;
    let class = model.predict(x)?;
    sweep(|s| model.probabilities(s), x, baseline, ranking, n_points, class)
}

/// Closed-form insertion curve for affine logits `z = W x + b`, computed
/// without the differentiation engine. `weights` is row-major `[classes][n]`.
pub fn linear_model_oracle(
    weights: &[Vec<f64>],
    bias: &[f64],
    x: &Tensor,
    ranking: &Ranking,
    baseline: &Tensor,
    n_points: usize,
) -> Result<MetricCurve> {
    affine_oracle(weights, bias, x, ranking, baseline, n_points, false)
}

/// Deletion counterpart of [`linear_model_oracle`].
pub fn linear_model_deletion_oracle(
    weights: &[Vec<f64>],
    bias: &[f64],
    x: &Tensor,
    ranking: &Ranking,
    baseline: &Tensor,
    n_points: usize,
) -> Result<MetricCurve> {
    affine_oracle(weights, bias, x, ranking, baseline, n_points, true)
}

fn affine_oracle(
    weights: &[Vec<f64>],
    bias: &[f64],
    x: &Tensor,
    ranking: &Ranking,
    baseline: &Tensor,
    n_points: usize,
    deletion: bool,
) -> Result<MetricCurve> {
    check_curve_args(x, ranking, baseline, n_points)?;
    if weights.len() != bias.len() || weights.iter().any(|r| r.len() != x.len()) {
        return Err(Error::Dimension("oracle weights do not match bias/input".into()));
    }
    let logits = |v: &[f64]| -> Vec<f64> {
        weights
            .iter()
            .zip(bias)
            .map(|(row, b)| b + row.iter().zip(v).map(|(w, xi)| w * xi).sum::<f64>())
            .collect()
    };
    let class = argmax(&logits(x.data()));
    let probs = |s: &Tensor| Ok(softmax(&logits(s.data())));
    if deletion {
        sweep(probs, x, baseline, ranking, n_points, class)
    } else {
        sweep(probs, baseline, x, ranking, n_points, class)
    }
}

/// Mean per-channel blur of `x` used as an alternative baseline: every value
/// replaced by its channel mean.
pub fn mean_baseline(x: &Tensor) -> Tensor {
    let shape = x.shape();
    let plane = if shape.len() == 3 { shape[1] * shape[2] } else { x.len() };
    let mut out = x.clone();
    for chunk in out.data_mut().chunks_mut(plane) {
        let m = chunk.iter().sum::<f64>() / chunk.len() as f64;
        chunk.iter_mut().for_each(|v| *v = m);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layer, ModelGraph};

    fn toy() -> ModelGraph {
        // p(class 0) = sigmoid(x1 + 2 x2)
        ModelGraph::from_layers(
            &[2],
            vec![Layer::Dense {
                weight: Tensor::new(vec![2, 2], vec![1.0, 2.0, 0.0, 0.0]).unwrap(),
                bias: Tensor::from_vec(vec![0.0, 0.0]),
            }],
        )
        .unwrap()
    }

    fn sigmoid(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_dimensions(&[0.1, 0.9, 0.5]).unwrap().as_slice(), &[1, 2, 0]);
        assert_eq!(rank_dimensions(&[0.5, 0.5]).unwrap().as_slice(), &[0, 1]);
        assert_eq!(rank_dimensions(&[-1.0, 0.0, 2.0]).unwrap().as_slice(), &[2, 1, 0]);
        assert!(rank_dimensions(&[0.0, f64::NAN]).is_err());
        assert!(Ranking::new(vec![0, 0]).is_err());
        assert!(Ranking::new(vec![0, 2]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(), 0.5);
        assert_eq!(auc(&[(0.0, 0.3), (0.25, 0.3), (1.0, 0.3)]).unwrap(), 0.3);
        assert_eq!(auc(&[(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)]).unwrap(), 0.5);
        assert!(auc(&[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn worked_insertion_and_deletion() {
        let m = toy();
        let x = Tensor::from_vec(vec![1.0, 1.0]);
        let b = Tensor::from_vec(vec![0.0, 0.0]);
        let r = Ranking::new(vec![1, 0]).unwrap();

        let ins = insertion_curve(&m, &x, &r, &b, 3).unwrap();
        let expect = [0.5, sigmoid(2.0), sigmoid(3.0)];
        for ((_, p), e) in ins.points.iter().zip(expect) {
            assert!((p - e).abs() < 1e-12);
        }
        assert!((ins.auc - 0.8036).abs() < 1e-3);

        let del = deletion_curve(&m, &x, &r, &b, 3).unwrap();
        let expect = [sigmoid(3.0), sigmoid(1.0), 0.5];
        for ((_, p), e) in del.points.iter().zip(expect) {
            assert!((p - e).abs() < 1e-12);
        }
        assert!((del.auc - 0.7287).abs() < 1e-3);

        let w = [vec![1.0, 2.0], vec![0.0, 0.0]];
        let oracle = linear_model_oracle(&w, &[0.0, 0.0], &x, &r, &b, 3).unwrap();
        assert!((oracle.auc - ins.auc).abs() < 1e-12);
        let oracle = linear_model_deletion_oracle(&w, &[0.0, 0.0], &x, &r, &b, 3).unwrap();
        assert!((oracle.auc - del.auc).abs() < 1e-12);
    }

    #[test]
    fn endpoints_match_untouched_input() {
        let m = toy();
        let x = Tensor::from_vec(vec![0.3, 0.8]);
        let b = Tensor::from_vec(vec![0.0, 0.0]);
        let r = Ranking::new(vec![0, 1]).unwrap();
        let p = m.probabilities(&x).unwrap()[0];
        assert_eq!(insertion_curve(&m, &x, &r, &b, 5).unwrap().points.last().unwrap().1, p);
        assert_eq!(deletion_curve(&m, &x, &r, &b, 5).unwrap().points[0].1, p);
    }

    #[test]
    fn constant_curve_when_input_is_baseline() {
        let m = toy();
        let x = Tensor::from_vec(vec![0.3, 0.8]);
        let r = Ranking::new(vec![1, 0]).unwrap();
        let c = insertion_curve(&m, &x, &r, &x, 11).unwrap();
        let p0 = c.points[0].1;
        assert!(c.points.iter().all(|&(_, p)| p == p0));
        assert!((c.auc - p0).abs() < 1e-12);
    }

    #[test]
    fn oracle_zero_weights_and_one_dimension() {
        let x = Tensor::from_vec(vec![0.7]);
        let b = Tensor::from_vec(vec![0.0]);
        let r = Ranking::new(vec![0]).unwrap();
        let c = linear_model_oracle(&[vec![0.0], vec![0.0]], &[1.0, 0.0], &x, &r, &b, 3).unwrap();
        let p = sigmoid(1.0);
        assert!(c.points.iter().all(|&(_, q)| (q - p).abs() < 1e-15));
        assert!((c.auc - p).abs() < 1e-12);

        // one dimension, three points: flips at the midpoint (k = round(0.5))
        let c = linear_model_oracle(&[vec![2.0], vec![0.0]], &[0.0, 0.0], &x, &r, &b, 3).unwrap();
        let fractions: Vec<f64> = c.points.iter().map(|p| p.0).collect();
        assert_eq!(fractions, vec![0.0, 0.5, 1.0]);
        assert!((c.points[0].1 - 0.5).abs() < 1e-15);
        assert!((c.points[1].1 - sigmoid(1.4)).abs() < 1e-15);
        assert!((c.points[2].1 - sigmoid(1.4)).abs() < 1e-15);
    }

    #[test]
    fn mean_baseline_per_channel() {
        let x = Tensor::new(vec![2, 1, 2], vec![0.0, 1.0, 0.5, 0.5]).unwrap();
        assert_eq!(mean_baseline(&x).data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn invalid_permutation_rejected_by_curve() {
        let m = toy();
        let x = Tensor::from_vec(vec![0.3, 0.8]);
        let r = Ranking::new(vec![0]).unwrap();
        assert!(insertion_curve(&m, &x, &r, &x, 3).is_err());
    }
}
