//! Local attribution: gradient-sign exploration confined to a per-dimension
//! box around the explained sample.
//!
//! For a sample `x` the box is `|x̃_i - x_i| <= ε_i`. Each exploration step
//! starts from a state `x̃` at most `ε/2` away from `x`, takes one signed
//! step of size `ε/2` (`x̂ = x̃ ± ε/2 · sign(g)`), and credits dimension `i`
//! with `(x̂_i - x̃_i) · g_i`. The next state restarts from the original `x`
//! using the sign pattern just observed, so no state ever drifts more than
//! `ε/2` from `x` and no explored `x̂` more than `ε`.
//!
//! Untargeted steps ascend the loss of the explained label. Targeted steps
//! descend the loss of alternative classes, picked in order of decreasing
//! probability, and their increments enter the map with the opposite sign.

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionMap, MethodSnapshot};
use crate::autodiff::{softmax, Loss};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::tensor::Tensor;

/// How the per-dimension radius is derived from the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConstraintMode {
    /// `ε_i = max(|x_i| / s, floor)`.
    Linear,
    /// `ε_i = radius` everywhere.
    Constant { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackType {
    Both,
    Untargeted,
    Targeted,
}

impl std::str::FromStr for AttackType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(AttackType::Both),
            "untargeted" => Ok(AttackType::Untargeted),
            "targeted" => Ok(AttackType::Targeted),
            other => Err(Error::Config(format!("unknown attack type {other:?}"))),
        }
    }
}

impl std::fmt::Display for AttackType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackType::Both => "both",
            AttackType::Untargeted => "untargeted",
            AttackType::Targeted => "targeted",
        })
    }
}

pub const DEFAULT_ITERATIONS: usize = 20;
pub const DEFAULT_SPATIAL_RANGE: f64 = 20.0;
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-3;
pub const MAX_DEFAULT_TARGETS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConfig {
    /// Exploration steps per phase (`N`).
    pub iterations: usize,
    /// Divisor `s` of the linear radius.
    pub spatial_range: f64,
    /// Number of alternative classes attacked; `None` means `min(c - 1, 20)`.
    pub targets: Option<usize>,
    pub mode: ConstraintMode,
    /// Lower bound on linear-mode radii so zero-valued inputs stay explorable.
    pub epsilon_floor: f64,
    pub attack: AttackType,
    /// Clamp explored states to `[0, 1]` before evaluating the model.
    pub clamp: bool,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            spatial_range: DEFAULT_SPATIAL_RANGE,
            targets: None,
            mode: ConstraintMode::Linear,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            attack: AttackType::Both,
            clamp: true,
        }
    }
}

impl LocalConfig {
    /// Number of targeted classes actually attacked for a `classes`-way model.
    pub fn effective_targets(&self, classes: usize) -> usize {
        if self.attack == AttackType::Untargeted {
            return 0;
        }
        let max = classes.saturating_sub(1);
        self.targets.unwrap_or(max.min(MAX_DEFAULT_TARGETS)).min(max)
    }

    /// Input-gradient evaluations one run performs.
    pub fn gradient_evaluations(&self, classes: usize) -> usize {
        let untargeted = usize::from(self.attack != AttackType::Targeted);
        (untargeted + self.effective_targets(classes)) * self.iterations
    }
}

/// Per-dimension radius vector.
pub fn epsilon_vector(x: &Tensor, spatial_range: f64, mode: ConstraintMode, floor: f64) -> Result<Tensor> {
    if !(spatial_range > 0.0) || !spatial_range.is_finite() {
        return Err(Error::Argument(format!("spatial range must be positive, got {spatial_range}")));
    }
    if !(floor >= 0.0) {
        return Err(Error::Argument(format!("epsilon floor must be >= 0, got {floor}")));
    }
    match mode {
        ConstraintMode::Linear => Ok(x.map(|v| (v.abs() / spatial_range).max(floor))),
        ConstraintMode::Constant { radius } => {
            if !(radius >= 0.0) || !radius.is_finite() {
                return Err(Error::Argument(format!("constant radius must be >= 0, got {radius}")));
            }
            Ok(x.map(|_| radius))
        }
    }
}

/// The box `B_ε(x)` that every explored state must stay inside.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSpace {
    center: Tensor,
    radius: Tensor,
    mode: ConstraintMode,
    spatial_range: f64,
    floor: f64,
}

impl LocalSpace {
    pub fn new(center: &Tensor, spatial_range: f64, mode: ConstraintMode, floor: f64) -> Result<Self> {
        center.ensure_finite("local space center")?;
        Ok(Self {
            radius: epsilon_vector(center, spatial_range, mode, floor)?,
            center: center.clone(),
            mode,
            spatial_range,
            floor,
        })
    }

    pub fn center(&self) -> &Tensor {
        &self.center
    }

    pub fn radius(&self) -> &Tensor {
        &self.radius
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    pub fn spatial_range(&self) -> f64 {
        self.spatial_range
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Whether `state` lies in the box scaled by `fraction` (1 for `B_ε`,
    /// 0.5 for `B_{ε/2}`). A materialized state `x + δ` carries rounding, so
    /// a couple of ulps of slack are allowed; the exact offsets live in the
    /// trace.
    pub fn contains(&self, state: &Tensor, fraction: f64) -> bool {
        state.shape() == self.center.shape()
            && state
                .data()
                .iter()
                .zip(self.center.data())
                .zip(self.radius.data())
                .all(|((s, c), r)| (s - c).abs() <= fraction * r + 2.0 * f64::EPSILON * (c.abs() + r))
    }
}

/// `sign` with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn signed_step(state: &Tensor, grad: &Tensor, eps: &Tensor, direction: f64) -> Result<Tensor> {
    state.ensure_same_shape(grad, "exploration step (gradient)")?;
    state.ensure_same_shape(eps, "exploration step (radius)")?;
    let data = state
        .data()
        .iter()
        .zip(grad.data())
        .zip(eps.data())
        .map(|((&s, &g), &e)| clamp_unit(s + direction * 0.5 * e * sign(g)))
        .collect();
    Tensor::new(state.shape().to_vec(), data)
}

/// `x̂ = clamp(x̃ + ε/2 · sign(g))`: one ascent step on the explained label's loss.
pub fn untargeted_step(state: &Tensor, grad: &Tensor, eps: &Tensor) -> Result<Tensor> {
    signed_step(state, grad, eps, 1.0)
}

/// `x̂ = clamp(x̃ - ε/2 · sign(g_t))`: one descent step toward a target class.
pub fn targeted_step(state: &Tensor, grad: &Tensor, eps: &Tensor) -> Result<Tensor> {
    signed_step(state, grad, eps, -1.0)
}

/// The `k` most probable classes other than the argmax, most probable first.
/// Ties go to the lower index; `k` is clamped to `c - 1`.
pub fn select_targets(probs: &[f64], k: usize) -> Result<Vec<usize>> {
    if probs.is_empty() {
        return Err(Error::Argument("empty probability vector".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Argument("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Argument(format!("probabilities sum to {total}, not 1")));
    }
    let top = crate::tensor::argmax(probs);
    let mut rest: Vec<usize> = (0..probs.len()).filter(|&i| i != top).collect();
    // stable sort keeps ascending index order among equal probabilities
    rest.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).expect("finite"));
    rest.truncate(k);
    Ok(rest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Untargeted,
    Targeted,
}

/// One gradient evaluation and the step taken from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationStep {
    pub attack: AttackKind,
    /// Label whose cross-entropy was differentiated.
    pub label: usize,
    /// `x̃ - x` before clamping; every entry is `0` or `±ε_i/2`.
    pub offset: Vec<f64>,
    /// `x̂ - x̃` before clamping; every entry is `0` or `±ε_i/2`.
    pub step: Vec<f64>,
    /// `∂L/∂x̃`, taken at the (clamped) state `x̃`.
    pub gradient: Tensor,
    /// `step ⊙ gradient`, this step's contribution to the map.
    pub increment: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationTrace {
    space: LocalSpace,
    clamp: bool,
    steps: Vec<ExplorationStep>,
    gradient_evaluations: usize,
}

impl ExplorationTrace {
    pub fn space(&self) -> &LocalSpace {
        &self.space
    }

    pub fn steps(&self) -> &[ExplorationStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn gradient_evaluations(&self) -> usize {
        self.gradient_evaluations
    }

    fn state(&self, f: impl Fn(usize) -> f64) -> Tensor {
        let c = self.space.center();
        let data = (0..c.len())
            .map(|i| {
                let v = c.data()[i] + f(i);
                if self.clamp {
                    clamp_unit(v)
                } else {
                    v
                }
            })
            .collect();
        Tensor::new(c.shape().to_vec(), data).expect("center shape")
    }

    /// State `x̃` of step `k` as fed to the model.
    pub fn state_before(&self, k: usize) -> Tensor {
        let s = &self.steps[k];
        self.state(|i| s.offset[i])
    }

    /// Explored state `x̂` of step `k` as fed to the model.
    pub fn state_after(&self, k: usize) -> Tensor {
        let s = &self.steps[k];
        self.state(|i| s.offset[i] + s.step[i])
    }

    /// Sum of all step increments, dimension by dimension.
    pub fn attribution(&self) -> Tensor {
        let mut a = Tensor::zeros_like(self.space.center());
        for s in &self.steps {
            for (acc, inc) in a.data_mut().iter_mut().zip(&s.increment) {
                *acc += inc;
            }
        }
        a
    }
}

/// Runs both exploration phases and returns the map with its full trace.
pub fn local_attribution<M: Classifier + ?Sized>(
    model: &M,
    x: &Tensor,
    label: usize,
    cfg: &LocalConfig,
) -> Result<(AttributionMap, ExplorationTrace)> {
    if cfg.iterations < 1 {
        return Err(Error::Argument("local attribution needs at least one iteration".into()));
    }
    let classes = model.num_classes();
    if label >= classes {
        return Err(Error::Index {
            index: label,
            len: classes,
        });
    }
    let space = LocalSpace::new(x, cfg.spatial_range, cfg.mode, cfg.epsilon_floor)?;
    let half: Vec<f64> = space.radius().data().iter().map(|e| 0.5 * e).collect();

    let mut trace = ExplorationTrace {
        space,
        clamp: cfg.clamp,
        steps: Vec::with_capacity(cfg.gradient_evaluations(classes)),
        gradient_evaluations: 0,
    };
    let mut attribution = vec![0.0; x.len()];

    let mut explore = |trace: &mut ExplorationTrace, attack: AttackKind, target: usize| -> Result<()> {
        let direction = match attack {
            AttackKind::Untargeted => 1.0,
            AttackKind::Targeted => -1.0,
        };
        let loss = Loss::CrossEntropy(target);
        let mut offset = vec![0.0; x.len()];
        for _ in 0..cfg.iterations {
            let state = trace.state(|i| offset[i]);
            let gradient = model.input_gradient(&state, &loss)?;
            trace.gradient_evaluations += 1;
            gradient.ensure_finite("input gradient")?;
            let step: Vec<f64> = gradient
                .data()
                .iter()
                .zip(&half)
                .map(|(&g, &h)| direction * h * sign(g))
                .collect();
            let increment: Vec<f64> = step.iter().zip(gradient.data()).map(|(s, g)| s * g).collect();
            for (a, inc) in attribution.iter_mut().zip(&increment) {
                *a += inc;
            }
            // next state restarts from x along the sign pattern just observed
            let next = step.clone();
            trace.steps.push(ExplorationStep {
                attack,
                label: target,
                offset: std::mem::replace(&mut offset, next),
                step,
                gradient,
                increment,
            });
        }
        Ok(())
    };

    if cfg.attack != AttackType::Targeted {
        explore(&mut trace, AttackKind::Untargeted, label)?;
    }
    let k = cfg.effective_targets(classes);
    if k > 0 {
        let probs = softmax(model.logits(x)?.data());
        for target in select_targets(&probs, k)? {
            explore(&mut trace, AttackKind::Targeted, target)?;
        }
    }

    let mut snapshot = *cfg;
    snapshot.targets = Some(k);
    let values = Tensor::new(x.shape().to_vec(), attribution)?;
    let map = AttributionMap::new(values, MethodSnapshot::Local(snapshot))?;
    Ok((map, trace))
}

/// Totals relating the map to the loss changes it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Completeness {
    /// `Σ_i A_i`.
    pub attribution_total: f64,
    /// `Σ_steps (x̂ - x̃) · g`.
    pub first_order_total: f64,
    /// `Σ_steps L(x̂) - L(x̃)`, each step under its own label.
    pub loss_delta_total: f64,
}

impl Completeness {
    /// Gap between the first-order estimate and the realized loss change.
    pub fn taylor_residual(&self) -> f64 {
        (self.first_order_total - self.loss_delta_total).abs()
    }
}

pub fn completeness_residual<M: Classifier + ?Sized>(trace: &ExplorationTrace, model: &M) -> Result<Completeness> {
    if trace.is_empty() {
        return Err(Error::Argument("empty exploration trace".into()));
    }
    let attribution_total = trace.attribution().sum();
    let mut first_order_total = 0.0;
    let mut loss_delta_total = 0.0;
    for (k, s) in trace.steps().iter().enumerate() {
        first_order_total += s.step.iter().zip(s.gradient.data()).map(|(d, g)| d * g).sum::<f64>();
        let loss = Loss::CrossEntropy(s.label);
        loss_delta_total += model.loss(&trace.state_after(k), &loss)? - model.loss(&trace.state_before(k), &loss)?;
    }
    Ok(Completeness {
        attribution_total,
        first_order_total,
        loss_delta_total,
    })
}

/// Fraction of explored states `x̂` that keep the prediction made at `x`.
pub fn decision_preservation<M: Classifier + ?Sized>(trace: &ExplorationTrace, model: &M) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::Argument("empty exploration trace".into()));
    }
    let original = model.predict(trace.space().center())?;
    let mut kept = 0usize;
    for k in 0..trace.len() {
        if model.predict(&trace.state_after(k))? == original {
            kept += 1;
        }
    }
    Ok(kept as f64 / trace.len() as f64)
}
