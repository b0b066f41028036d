//! Local Attribution: gradient-based feature attribution by constrained
//! exploration of the input's neighbourhood, plus reference baselines,
//! insertion/deletion evaluation, and a small reverse-mode engine to run
//! everything on CPU.
//!
//! ```no_run
//! use localattr::{presets, local_attribution, LocalConfig, ModelGraph, Tensor, Classifier};
//!
//! let model = ModelGraph::build(&[1, 8, 8], &presets::small_cnn(8, 10), 0)?;
//! let x = Tensor::zeros(&[1, 8, 8])?;
//! let label = model.predict(&x)?;
//! let (map, trace) = local_attribution(&model, &x, label, &LocalConfig::default())?;
//! assert_eq!(map.values.shape(), x.shape());
//! assert_eq!(trace.gradient_evaluations(), 10 * 20);
//! # Ok::<(), localattr::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks

pub mod attribution;
pub mod autodiff;
pub mod baselines;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod heatmap;
pub mod local;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod weights;

pub use attribution::{AttributionMap, MethodSnapshot};
pub use autodiff::{softmax, softmax_cross_entropy, Loss, Padding, Tape};
pub use baselines::{integrated_gradients, random_attribution, saliency, smoothgrad};
pub use config::ExperimentConfig;
pub use dataset::{load_dataset, Dataset, DatasetSource, Sample};
pub use error::{Error, Result};
pub use heatmap::{render, Colormap, Heatmap};
pub use local::{
    completeness_residual, decision_preservation, local_attribution, AttackType, ConstraintMode, ExplorationTrace,
    LocalConfig,
};
pub use metrics::{deletion_curve, insertion_curve, rank_dimensions, MetricCurve, Ranking};
pub use model::{presets, train_sgd, Classifier, LayerSpec, ModelGraph, TrainConfig};
pub use tensor::Tensor;
pub use weights::{load_weights, save_weights};
