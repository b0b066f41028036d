//! Reference attribution methods: saliency, integrated gradients,
//! SmoothGrad, and a random ranking control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attribution::{AttributionMap, MethodSnapshot};
use crate::autodiff::Loss;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::tensor::Tensor;

pub const DEFAULT_IG_STEPS: usize = 50;
pub const DEFAULT_SG_SIGMA: f64 = 0.15;
pub const DEFAULT_SG_SAMPLES: usize = 50;

/// `|∂L/∂x|`, or the signed gradient when `signed` is set. Callers normally
/// pass `Loss::CrossEntropy(label)`.
pub fn saliency<M: Classifier + ?Sized>(model: &M, x: &Tensor, loss: &Loss, signed: bool) -> Result<AttributionMap> {
    let g = model.input_gradient(x, loss)?;
    let values = if signed { g } else { g.map(f64::abs) };
    AttributionMap::new(values, MethodSnapshot::Saliency { signed })
}

/// Midpoint Riemann sum of the gradient along the straight path from
/// `baseline` to `x`, scaled by `x - baseline`.
pub fn integrated_gradients<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    loss: &Loss,
    baseline: &Tensor,
    steps: usize,
) -> Result<AttributionMap> {
    if steps < 1 {
        return Err(Error::Argument("integrated gradients needs at least one step".into()));
    }
    x.ensure_same_shape(baseline, "integrated gradients baseline")?;
    let delta = x.zip_map(baseline, |a, b| a - b)?;
    let mut total = vec![0.0; x.len()];
    for k in 1..=steps {
        let alpha = (k as f64 - 0.5) / steps as f64;
        let point = baseline.zip_map(&delta, |b, d| b + alpha * d)?;
        let g = model.input_gradient(&point, loss)?;
        for (t, gv) in total.iter_mut().zip(g.data()) {
            *t += gv;
        }
    }
    let values = total
        .iter()
        .zip(delta.data())
        .map(|(t, d)| d * t / steps as f64)
        .collect();
    AttributionMap::new(
        Tensor::new(x.shape().to_vec(), values)?,
        MethodSnapshot::IntegratedGradients { steps },
    )
}

/// Mean absolute gradient over `samples` Gaussian perturbations of `x`.
pub fn smoothgrad<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    loss: &Loss,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Result<AttributionMap> {
    if samples < 1 {
        return Err(Error::Argument("smoothgrad needs at least one sample".into()));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Argument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let snapshot = MethodSnapshot::SmoothGrad { sigma, samples, seed };
    if sigma == 0.0 {
        // every noisy copy is x itself
        let g = model.input_gradient(x, loss)?;
        return AttributionMap::new(g.map(f64::abs), snapshot);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = vec![0.0; x.len()];
    for _ in 0..samples {
        let values = x.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
        let noisy = Tensor::new(x.shape().to_vec(), values)?;
        let g = model.input_gradient(&noisy, loss)?;
        for (t, gv) in total.iter_mut().zip(g.data()) {
            *t += gv.abs();
        }
    }
    let values = total.into_iter().map(|t| t / samples as f64).collect();
    AttributionMap::new(Tensor::new(x.shape().to_vec(), values)?, snapshot)
}

/// I.i.d. uniform `[0, 1)` scores.
pub fn random_attribution(shape: &[usize], seed: u64) -> Result<AttributionMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random::<f64>()).collect();
    AttributionMap::new(Tensor::new(shape.to_vec(), values)?, MethodSnapshot::Random { seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layer, ModelGraph};

    /// Two-class model whose class-0 logit is `w · x`, class-1 logit 0.
    fn affine(w: &[f64]) -> ModelGraph {
        let n = w.len();
        let mut weight = w.to_vec();
        weight.extend(std::iter::repeat(0.0).take(n));
        ModelGraph::from_layers(
            &[n],
            vec![Layer::Dense {
                weight: Tensor::new(vec![2, n], weight).unwrap(),
                bias: Tensor::from_vec(vec![0.0, 0.0]),
            }],
        )
        .unwrap()
    }

    const LINEAR: Loss = Loss::Logit(0);

    #[test]
    fn saliency_of_linear_model() {
        let m = affine(&[1.0, -2.0]);
        let x = Tensor::from_vec(vec![0.4, 0.1]);
        let a = saliency(&m, &x, &LINEAR, false).unwrap();
        assert_eq!(a.values.data(), &[1.0, 2.0]);
        let s = saliency(&m, &x, &LINEAR, true).unwrap();
        assert_eq!(s.values.data(), &[1.0, -2.0]);
        // cross-entropy of class 1 at the origin: dL/dx = p0 * w with p0 = 1/2
        let ce = saliency(&m, &Tensor::from_vec(vec![0.0, 0.0]), &Loss::CrossEntropy(1), false).unwrap();
        assert_eq!(ce.values.data(), &[0.5, 1.0]);
    }

    #[test]
    fn ig_of_linear_model() {
        let m = affine(&[1.5, -2.0, 0.25]);
        let x = Tensor::from_vec(vec![0.2, 0.6, 1.0]);
        let zero = Tensor::from_vec(vec![0.0; 3]);
        for steps in [1, 7, 50] {
            let a = integrated_gradients(&m, &x, &LINEAR, &zero, steps).unwrap();
            for ((v, w), xi) in a.values.data().iter().zip([1.5, -2.0, 0.25]).zip(x.data()) {
                assert!((v - w * xi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothgrad_of_linear_model() {
        let m = affine(&[1.0, -2.0]);
        let x = Tensor::from_vec(vec![0.5, 0.5]);
        for sigma in [0.0, 0.1, 3.0] {
            let a = smoothgrad(&m, &x, &LINEAR, sigma, 20, 4).unwrap();
            assert_eq!(a.values.data(), &[1.0, 2.0]);
        }
    }

    #[test]
    fn saliency_zero_gradient() {
        let m = affine(&[0.0, 0.0]);
        let a = saliency(&m, &Tensor::from_vec(vec![0.3, 0.6]), &Loss::CrossEntropy(0), false).unwrap();
        assert!(a.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ig_zero_when_input_is_baseline() {
        let m = affine(&[1.0, 3.0]);
        let x = Tensor::from_vec(vec![0.2, 0.7]);
        let a = integrated_gradients(&m, &x, &LINEAR, &x, 10).unwrap();
        assert!(a.values.data().iter().all(|&v| v == 0.0));
        assert!(integrated_gradients(&m, &x, &LINEAR, &x, 0).is_err());
    }

    #[test]
    fn smoothgrad_degenerate_and_deterministic() {
        let m = ModelGraph::build(&[3], &crate::model::presets::mlp(3, 5, 2), 9).unwrap();
        let x = Tensor::from_vec(vec![0.1, 0.5, 0.9]);
        let ce = Loss::CrossEntropy(1);
        let sm = saliency(&m, &x, &ce, false).unwrap();
        let sg0 = smoothgrad(&m, &x, &ce, 0.0, 50, 1).unwrap();
        assert_eq!(sm.values, sg0.values);
        let a = smoothgrad(&m, &x, &ce, 0.2, 8, 5).unwrap();
        let b = smoothgrad(&m, &x, &ce, 0.2, 8, 5).unwrap();
        assert_eq!(a, b);
        assert!(smoothgrad(&m, &x, &ce, 0.2, 0, 5).is_err());
        assert!(smoothgrad(&m, &x, &ce, -0.1, 3, 5).is_err());
    }

    #[test]
    fn random_map_properties() {
        let a = random_attribution(&[16], 1).unwrap();
        let b = random_attribution(&[16], 1).unwrap();
        let c = random_attribution(&[16], 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert!(a.values.data().iter().all(|v| (0.0..1.0).contains(v)));
    }
}
