//! Optimizers: per-image gradient descent safeguarded by the Armijo rule,
//! full-batch L-BFGS, and the finite-difference gradient oracle.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::geometry::{plan_geometry, GeometryPlan};
use crate::loss::LabelImage;
use crate::map::Map;
use crate::network::{backward_dense, forward_dense, Model};
use crate::rng::SplitMix64;

/// Something we can minimize: returns loss and gradient at a parameter
/// vector. `loss` alone may be cheaper (no backward pass); line searches use
/// it for candidate points.
pub trait Objective {
    fn loss_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn loss(&mut self, params: &[f64]) -> Result<f64> {
        Ok(self.loss_grad(params)?.0)
    }
}

/// Backtracking line-search constants. Defaults: sufficient decrease
/// `c = 1e-4`, backtrack factor `beta = 0.5`, initial step `0.1`, at most 20
/// backtracks, and the accepted step is grown by 2x to seed the next one.
#[derive(Debug, Clone)]
pub struct ArmijoConfig {
    pub c: f64,
    pub beta: f64,
    pub alpha0: f64,
    pub max_backtracks: usize,
    pub alpha_growth: f64,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        ArmijoConfig {
            c: 1e-4,
            beta: 0.5,
            alpha0: 0.1,
            max_backtracks: 20,
            alpha_growth: 2.0,
        }
    }
}

impl ArmijoConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::invalid("armijo c must be in (0, 1)"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("armijo beta must be in (0, 1)"));
        }
        if !(self.alpha0 > 0.0) {
            return Err(Error::invalid("armijo alpha0 must be positive"));
        }
        Ok(())
    }
}

/// Result of one Armijo-safeguarded step.
#[derive(Debug, Clone)]
pub struct ArmijoOutcome {
    /// New parameters if accepted, the input parameters if skipped.
    pub params: Vec<f64>,
    pub accepted: bool,
    /// Step size that satisfied the condition (0 when skipped).
    pub alpha: f64,
    pub loss_before: f64,
    /// Loss at the returned parameters.
    pub loss_after: f64,
    pub grad_norm_sq: f64,
    pub backtracks: usize,
}

/// One steepest-descent step along `-gradient` with Armijo backtracking:
/// accept the first `alpha` with
/// `L(p - alpha g) <= L(p) - c * alpha * |g|^2`, halving from `alpha_start`.
/// If `max_backtracks` halvings are exhausted the parameters are returned
/// unchanged with `accepted = false`.
///
/// A non-finite loss or gradient at the *current* point aborts with an error;
/// a non-finite candidate loss merely fails the condition and backtracks.
pub fn armijo_step(
    params: &[f64],
    obj: &mut impl Objective,
    cfg: &ArmijoConfig,
    alpha_start: f64,
) -> Result<ArmijoOutcome> {
    cfg.validate()?;
    let (loss0, grad) = obj.loss_grad(params)?;
    if !loss0.is_finite() {
        return Err(Error::NonFinite(format!("loss at current point: {loss0}")));
    }
    if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component: {bad}")));
    }
    let grad_norm_sq: f64 = grad.iter().map(|g| g * g).sum();

    let mut alpha = alpha_start.max(f64::MIN_POSITIVE);
    for backtracks in 0..=cfg.max_backtracks {
        let candidate: Vec<f64> = params
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - alpha * g)
            .collect();
        let loss = obj.loss(&candidate)?;
        if loss.is_finite() && loss <= loss0 - cfg.c * alpha * grad_norm_sq {
            return Ok(ArmijoOutcome {
                params: candidate,
                accepted: true,
                alpha,
                loss_before: loss0,
                loss_after: loss,
                grad_norm_sq,
                backtracks,
            });
        }
        alpha *= cfg.beta;
    }
    Ok(ArmijoOutcome {
        params: params.to_vec(),
        accepted: false,
        alpha: 0.0,
        loss_before: loss0,
        loss_after: loss0,
        grad_norm_sq,
        backtracks: cfg.max_backtracks + 1,
    })
}

/// L-BFGS settings. The line search reuses the Armijo machinery but starts at
/// a unit step, the natural scale for a quasi-Newton direction.
#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    pub grad_tolerance: f64,
    pub armijo: ArmijoConfig,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iters: 100,
            grad_tolerance: 1e-8,
            armijo: ArmijoConfig {
                alpha0: 1.0,
                ..ArmijoConfig::default()
            },
        }
    }
}

/// Curvature history plus a cache of the last evaluated point, so one
/// objective evaluation per accepted step is shared with the next iteration.
#[derive(Debug, Clone, Default)]
pub struct LbfgsState {
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
    cached: Option<(Vec<f64>, f64, Vec<f64>)>,
}

impl LbfgsState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsStepOutcome {
    pub params: Vec<f64>,
    pub loss: f64,
    /// Euclidean norm of the gradient at the returned parameters.
    pub grad_norm: f64,
    pub alpha: f64,
    pub accepted: bool,
    /// True when the two-loop direction was not a descent direction and the
    /// step fell back to steepest descent.
    pub used_fallback: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: approximate `H * g` from the curvature history, with
/// the usual `(s.y)/(y.y)` initial scaling.
fn two_loop_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let rho = 1.0 / dot(s, y);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y), a) in history.iter().zip(alphas.iter().rev()) {
        let rho = 1.0 / dot(s, y);
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

const CURVATURE_FLOOR: f64 = 1e-10;

/// One L-BFGS iteration: two-loop direction, Armijo backtracking along it
/// (falling back to steepest descent if the direction fails to point
/// downhill), then a curvature update `(s, y)` kept only when `s.y` exceeds
/// a small floor. History never exceeds `memory` pairs.
pub fn lbfgs_step(
    state: &mut LbfgsState,
    params: &[f64],
    obj: &mut impl Objective,
    cfg: &LbfgsConfig,
) -> Result<LbfgsStepOutcome> {
    if cfg.memory == 0 {
        return Err(Error::invalid("lbfgs memory must be >= 1"));
    }
    cfg.armijo.validate()?;

    let (loss0, grad) = match state.cached.take() {
        Some((p, l, g)) if p == params => (l, g),
        _ => obj.loss_grad(params)?,
    };
    if !loss0.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(String::from(
            "loss or gradient at current point",
        )));
    }

    let mut direction = two_loop_direction(&grad, &state.history);
    let mut slope = dot(&direction, &grad);
    let mut used_fallback = false;
    if !(slope < 0.0) {
        direction = grad.iter().map(|g| -g).collect();
        slope = -dot(&grad, &grad);
        used_fallback = true;
        if slope == 0.0 {
            // Zero gradient: already stationary.
            return Ok(LbfgsStepOutcome {
                params: params.to_vec(),
                loss: loss0,
                grad_norm: 0.0,
                alpha: 0.0,
                accepted: true,
                used_fallback,
            });
        }
    }

    let mut alpha = cfg.armijo.alpha0;
    for _ in 0..=cfg.armijo.max_backtracks {
        let candidate: Vec<f64> = params
            .iter()
            .zip(&direction)
            .map(|(p, d)| p + alpha * d)
            .collect();
        let loss = obj.loss(&candidate)?;
        if loss.is_finite() && loss <= loss0 + cfg.armijo.c * alpha * slope {
            let (loss_new, grad_new) = obj.loss_grad(&candidate)?;
            let s: Vec<f64> = candidate.iter().zip(params).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > CURVATURE_FLOOR {
                state.history.push_back((s, y));
                while state.history.len() > cfg.memory {
                    state.history.pop_front();
                }
            }
            let grad_norm = libm::sqrt(dot(&grad_new, &grad_new));
            state.cached = Some((candidate.clone(), loss_new, grad_new));
            return Ok(LbfgsStepOutcome {
                params: candidate,
                loss: loss_new,
                grad_norm,
                alpha,
                accepted: true,
                used_fallback,
            });
        }
        alpha *= cfg.armijo.beta;
    }

    Ok(LbfgsStepOutcome {
        params: params.to_vec(),
        loss: loss0,
        grad_norm: libm::sqrt(dot(&grad, &grad)),
        alpha: 0.0,
        accepted: false,
        used_fallback,
    })
}

/// Central-difference gradient: the independent oracle the analytic
/// gradients are checked against.
pub fn finite_diff_gradient(
    params: &[f64],
    mut eval_loss: impl FnMut(&[f64]) -> Result<f64>,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + step;
        let plus = eval_loss(&work)?;
        work[i] = orig - step;
        let minus = eval_loss(&work)?;
        work[i] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Inverse-frequency class weights `w_c = N / (C * n_c)` over the given
/// label images. Every class must occur at least once.
pub fn auto_class_weights<'a>(
    labels: impl IntoIterator<Item = &'a LabelImage>,
    n_classes: usize,
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; n_classes];
    let mut total = 0usize;
    for image in labels {
        for (cls, n) in image.class_histogram().iter().enumerate() {
            if cls < n_classes {
                counts[cls] += n;
            }
            total += n;
        }
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!(
            "class {missing} absent from the data; pass explicit class weights"
        )));
    }
    Ok(counts
        .iter()
        .map(|&n| total as f64 / (n_classes as f64 * n as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SgdArmijo,
    Lbfgs,
}

#[derive(Debug, Clone)]
pub enum ClassWeightSpec {
    Auto,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub shuffle_seed: u64,
    pub class_weights: ClassWeightSpec,
    pub armijo: ArmijoConfig,
    pub lbfgs: LbfgsConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::SgdArmijo,
            epochs: 10,
            shuffle_seed: 0,
            class_weights: ClassWeightSpec::Auto,
            armijo: ArmijoConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-image loss over the training split, evaluated at the
    /// end-of-epoch parameters (not the running mean during the epoch, which
    /// depends on presentation order).
    pub mean_loss: f64,
    /// Balanced per-class pixel error on the validation split, if any.
    pub val_pixel_error: Option<f64>,
    pub accepted_alpha_mean: f64,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub warnings: Vec<String>,
    pub class_weights: Vec<f64>,
}

/// Everything a test needs to re-verify one optimizer step.
#[derive(Debug, Clone)]
pub struct StepEvent {
    pub epoch: usize,
    pub item_index: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub alpha: f64,
    pub grad_norm_sq: f64,
    pub accepted: bool,
    pub params_before: Vec<f64>,
    pub params_after: Vec<f64>,
}

/// Warn when more than half the steps of an epoch were skipped.
pub fn skipped_step_warning(epoch: usize, skipped: usize, total: usize) -> Option<String> {
    if total > 0 && skipped * 2 > total {
        Some(format!(
            "epoch {epoch}: {skipped} of {total} steps skipped by the Armijo safeguard"
        ))
    } else {
        None
    }
}

/// Loss and gradient of the model on one image.
pub struct ImageObjective<'a> {
    scratch: Model<f64>,
    image: &'a Map<f64>,
    labels: &'a LabelImage,
    plan: &'a GeometryPlan,
    class_weights: &'a [f64],
}

impl<'a> ImageObjective<'a> {
    pub fn new(
        model: &Model<f64>,
        image: &'a Map<f64>,
        labels: &'a LabelImage,
        plan: &'a GeometryPlan,
        class_weights: &'a [f64],
    ) -> Self {
        ImageObjective {
            scratch: model.clone(),
            image,
            labels,
            plan,
            class_weights,
        }
    }
}

impl Objective for ImageObjective<'_> {
    fn loss_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.scratch.set_from_flat(params)?;
        let (_, tape) = forward_dense(self.image, &self.scratch, self.plan)?;
        backward_dense(&self.scratch, &tape, self.labels, self.class_weights)
    }

    fn loss(&mut self, params: &[f64]) -> Result<f64> {
        self.scratch.set_from_flat(params)?;
        let (_, tape) = forward_dense(self.image, &self.scratch, self.plan)?;
        let (loss, _) = crate::loss::mcce_loss_and_delta(
            tape.logits(),
            self.labels,
            self.class_weights,
        )?;
        Ok(loss)
    }
}

/// Mean loss and gradient over a set of images (full-batch for L-BFGS).
struct BatchObjective<'a> {
    scratch: Model<f64>,
    items: Vec<(usize, &'a GeometryPlan)>,
    dataset: &'a Dataset,
    class_weights: &'a [f64],
}

impl Objective for BatchObjective<'_> {
    fn loss_grad(&mut self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.scratch.set_from_flat(params)?;
        let mut total_loss = 0.0;
        let mut total_grad = vec![0.0; params.len()];
        for &(idx, plan) in &self.items {
            let item = &self.dataset.items[idx];
            let (_, tape) = forward_dense(&item.image, &self.scratch, plan)?;
            let (loss, grad) =
                backward_dense(&self.scratch, &tape, &item.labels, self.class_weights)?;
            total_loss += loss;
            for (t, g) in total_grad.iter_mut().zip(&grad) {
                *t += g;
            }
        }
        let inv = 1.0 / self.items.len() as f64;
        total_loss *= inv;
        for g in total_grad.iter_mut() {
            *g *= inv;
        }
        Ok((total_loss, total_grad))
    }

    fn loss(&mut self, params: &[f64]) -> Result<f64> {
        self.scratch.set_from_flat(params)?;
        let mut total = 0.0;
        for &(idx, plan) in &self.items {
            let item = &self.dataset.items[idx];
            let (_, tape) = forward_dense(&item.image, &self.scratch, plan)?;
            let (loss, _) = crate::loss::mcce_loss_and_delta(
                tape.logits(),
                &item.labels,
                self.class_weights,
            )?;
            total += loss;
        }
        Ok(total / self.items.len() as f64)
    }
}

/// Mean per-image loss of the model over the given items.
fn mean_loss_over(
    model: &Model<f64>,
    dataset: &Dataset,
    indices: &[usize],
    plans: &[Option<GeometryPlan>],
    class_weights: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for &idx in indices {
        let item = &dataset.items[idx];
        let plan = plans[idx].as_ref().unwrap();
        let (_, tape) = forward_dense(&item.image, model, plan)?;
        let (loss, _) =
            crate::loss::mcce_loss_and_delta(tape.logits(), &item.labels, class_weights)?;
        total += loss;
    }
    Ok(total / indices.len() as f64)
}

/// Balanced per-class pixel error of the model over one dataset split.
/// `None` when the split is empty.
pub fn balanced_pixel_error(
    model: &Model<f64>,
    dataset: &Dataset,
    split: Split,
) -> Result<Option<f64>> {
    let classes = model.classes();
    let mut wrong = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    let mut any = false;
    for item in dataset.items_in(split) {
        any = true;
        let plan = plan_geometry(&model.arch, item.image.rows(), item.image.cols())?;
        let (probs, _) = forward_dense(&item.image, model, &plan)?;
        for r in 0..item.labels.rows() {
            for c in 0..item.labels.cols() {
                let truth = item.labels.at(r, c);
                let mut best = 0usize;
                for ch in 1..classes {
                    if probs[ch].at(r, c) > probs[best].at(r, c) {
                        best = ch;
                    }
                }
                total[truth] += 1;
                if best != truth {
                    wrong[truth] += 1;
                }
            }
        }
    }
    if !any {
        return Ok(None);
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (w, t) in wrong.iter().zip(&total) {
        if *t > 0 {
            sum += *w as f64 / *t as f64;
            n += 1;
        }
    }
    Ok(Some(sum / n as f64))
}

/// Train a model on the dataset's train split, logging one record per epoch.
///
/// SGD+Armijo presents images one at a time in a seeded shuffled order,
/// updating after each; the accepted step size, grown by `alpha_growth`,
/// seeds the next line search. L-BFGS aggregates loss and gradient over the
/// whole training split per iteration (one iteration = one logged epoch) and
/// stops early at the gradient tolerance.
///
/// The optional `observer` receives every SGD step with parameter snapshots;
/// tests use it to re-verify the Armijo inequality.
pub fn train(
    dataset: &Dataset,
    model: &mut Model<f64>,
    cfg: &TrainConfig,
    mut observer: Option<&mut dyn FnMut(&StepEvent)>,
) -> Result<TrainLog> {
    if cfg.epochs == 0 {
        return Err(Error::invalid("epochs must be >= 1"));
    }
    let classes = model.classes();
    if dataset.class_count > classes {
        return Err(Error::invalid(format!(
            "dataset has {} classes, model only {}",
            dataset.class_count, classes
        )));
    }
    let train_idx = dataset.indices_in(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::invalid("dataset has no training items"));
    }

    let class_weights = match &cfg.class_weights {
        ClassWeightSpec::Auto => auto_class_weights(
            dataset.items_in(Split::Train).map(|i| &i.labels),
            classes,
        )?,
        ClassWeightSpec::Explicit(w) => {
            if w.len() != classes {
                return Err(Error::invalid(format!(
                    "{} class weights for {} classes",
                    w.len(),
                    classes
                )));
            }
            w.clone()
        }
    };

    let mut plans: Vec<Option<GeometryPlan>> = vec![None; dataset.items.len()];
    for &idx in &train_idx {
        let item = &dataset.items[idx];
        plans[idx] = Some(plan_geometry(
            &model.arch,
            item.image.rows(),
            item.image.cols(),
        )?);
    }

    let mut log = TrainLog {
        epochs: Vec::with_capacity(cfg.epochs),
        warnings: Vec::new(),
        class_weights: class_weights.clone(),
    };

    match cfg.optimizer {
        OptimizerKind::SgdArmijo => {
            let mut rng = SplitMix64::new(cfg.shuffle_seed);
            let mut alpha_seed = cfg.armijo.alpha0;
            for epoch in 0..cfg.epochs {
                let mut order = train_idx.clone();
                rng.shuffle(&mut order);
                let mut alpha_sum = 0.0;
                let mut accepted = 0usize;
                let mut skipped = 0usize;
                for &idx in &order {
                    let item = &dataset.items[idx];
                    let plan = plans[idx].as_ref().unwrap();
                    let params = model.flatten();
                    let mut obj = ImageObjective::new(
                        model,
                        &item.image,
                        &item.labels,
                        plan,
                        &class_weights,
                    );
                    let outcome = armijo_step(&params, &mut obj, &cfg.armijo, alpha_seed)?;
                    if outcome.accepted {
                        model.set_from_flat(&outcome.params)?;
                        // Grow the seed, bounded so a run of zero-gradient
                        // steps cannot inflate it to infinity.
                        alpha_seed = (outcome.alpha * cfg.armijo.alpha_growth).min(1e6);
                        alpha_sum += outcome.alpha;
                        accepted += 1;
                        debug_assert!(outcome.loss_after <= outcome.loss_before);
                    } else {
                        skipped += 1;
                        alpha_seed = cfg.armijo.alpha0;
                    }
                    if let Some(obs) = observer.as_mut() {
                        obs(&StepEvent {
                            epoch,
                            item_index: idx,
                            loss_before: outcome.loss_before,
                            loss_after: outcome.loss_after,
                            alpha: outcome.alpha,
                            grad_norm_sq: outcome.grad_norm_sq,
                            accepted: outcome.accepted,
                            params_before: params,
                            params_after: outcome.params,
                        });
                    }
                }
                if let Some(w) = skipped_step_warning(epoch, skipped, order.len()) {
                    log.warnings.push(w);
                }
                log.epochs.push(EpochRecord {
                    epoch,
                    mean_loss: mean_loss_over(model, dataset, &train_idx, &plans, &class_weights)?,
                    val_pixel_error: balanced_pixel_error(model, dataset, Split::Validation)?,
                    accepted_alpha_mean: if accepted > 0 {
                        alpha_sum / accepted as f64
                    } else {
                        0.0
                    },
                    skipped_steps: skipped,
                });
            }
        }
        OptimizerKind::Lbfgs => {
            let items: Vec<(usize, &GeometryPlan)> = train_idx
                .iter()
                .map(|&idx| (idx, plans[idx].as_ref().unwrap()))
                .collect();
            let mut obj = BatchObjective {
                scratch: model.clone(),
                items,
                dataset,
                class_weights: &class_weights,
            };
            let mut state = LbfgsState::new();
            let mut params = model.flatten();
            for epoch in 0..cfg.epochs {
                let out = lbfgs_step(&mut state, &params, &mut obj, &cfg.lbfgs)?;
                params = out.params.clone();
                model.set_from_flat(&params)?;
                if let Some(w) =
                    skipped_step_warning(epoch, usize::from(!out.accepted), 1)
                {
                    log.warnings.push(w);
                }
                log.epochs.push(EpochRecord {
                    epoch,
                    mean_loss: out.loss,
                    val_pixel_error: balanced_pixel_error(model, dataset, Split::Validation)?,
                    accepted_alpha_mean: out.alpha,
                    skipped_steps: usize::from(!out.accepted),
                });
                if out.grad_norm < cfg.lbfgs.grad_tolerance {
                    break;
                }
            }
        }
    }

    Ok(log)
}
