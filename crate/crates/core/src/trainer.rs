//! Gradients, Adam and the training loop.
//!
//! Parameters are laid out as `[α_0 … α_{N−1}, θ_0 … θ_{LK−1}]`. Gradients come
//! from per-string adjoints of the engine: each string contributes to `∂/∂α`
//! directly and to `∂/∂O`, which a single reverse sweep over the Givens
//! rotations turns into `∂/∂θ`.

use std::path::PathBuf;
use std::time::Instant;

use crate::datagen::BitDataset;
use crate::engine::{Engine, FbmModel};
use crate::error::{invalid, Error, Result};
use crate::flo::{angle_gradient, build_orthogonal, decompose_orthogonal};
use crate::loss::{
    flatten, mmd2_estimate, mmd2_model_gradient, sample_all, target_expectations, KernelSpec, KernelStrings,
    LossEstimate,
};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Gradient split by parameter family.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Gradient {
    pub fn flat(&self) -> Vec<f64> {
        self.alpha.iter().chain(&self.theta).copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.alpha.iter().chain(&self.theta).map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Flat parameter vector of a model.
pub fn parameters(model: &FbmModel) -> Vec<f64> {
    model
        .magic()
        .alpha()
        .iter()
        .chain(model.ansatz().angles())
        .copied()
        .collect()
}

/// Writes a flat parameter vector back; `α` is reduced modulo 2π.
pub fn set_parameters(model: &mut FbmModel, params: &[f64]) -> Result<()> {
    let n_alpha = model.registers();
    if params.len() != model.parameter_count() {
        return Err(invalid(format!(
            "expected {} parameters, got {}",
            model.parameter_count(),
            params.len()
        )));
    }
    model.magic_mut().alpha_mut().copy_from_slice(&params[..n_alpha]);
    model.magic_mut().canonicalize();
    model.ansatz_mut().angles_mut().copy_from_slice(&params[n_alpha..]);
    Ok(())
}

fn max_len(groups: &[KernelStrings]) -> usize {
    groups
        .iter()
        .flat_map(|g| g.strings.iter().map(|z| z.len()))
        .max()
        .unwrap_or(0)
}

/// Loss and gradient against precomputed target expectations (in
/// [`flatten`] order).
pub fn loss_and_gradient_with_targets(
    model: &FbmModel,
    targets: &[f64],
    groups: &[KernelStrings],
) -> Result<(LossEstimate, Gradient)> {
    let strings = flatten(groups);
    let engine = Engine::with_max_len(model, max_len(groups));
    let evaluated: Vec<_> = crate::par::map_collect(&strings, |z| engine.expectation_with_adjoint(z, 1.0))
        .into_iter()
        .collect::<Result<_>>()?;
    let values: Vec<f64> = evaluated.iter().map(|(v, _)| *v).collect();
    let estimate = mmd2_estimate(targets, &values, groups)?;
    let dv = mmd2_model_gradient(targets, &values, groups);

    let dim = engine.orthogonal().dim();
    let mut grad_o = vec![0.0; dim * dim];
    let mut alpha = vec![0.0; model.registers()];
    for ((_, adj), &g) in evaluated.iter().zip(&dv) {
        if g == 0.0 {
            continue;
        }
        for (i, &r) in adj.rows.iter().enumerate() {
            let src = &adj.orthogonal[i * dim..(i + 1) * dim];
            for (dst, s) in grad_o[r * dim..(r + 1) * dim].iter_mut().zip(src) {
                *dst += g * s;
            }
        }
        for (a, s) in alpha.iter_mut().zip(&adj.alpha) {
            *a += g * s;
        }
    }
    let theta = angle_gradient(model.ansatz(), &grad_o);
    Ok((estimate, Gradient { alpha, theta }))
}

/// Loss and gradient of the MMD² estimate on `groups` against `data`.
pub fn loss_and_gradient(
    model: &FbmModel,
    data: &BitDataset,
    groups: &[KernelStrings],
) -> Result<(LossEstimate, Gradient)> {
    check_columns(model, data)?;
    let targets = target_expectations(data, &flatten(groups))?;
    loss_and_gradient_with_targets(model, &targets, groups)
}

/// Loss only; cheaper than [`loss_and_gradient`].
pub fn evaluate_loss(model: &FbmModel, data: &BitDataset, groups: &[KernelStrings]) -> Result<LossEstimate> {
    check_columns(model, data)?;
    let strings = flatten(groups);
    let targets = target_expectations(data, &strings)?;
    let values = Engine::with_max_len(model, max_len(groups)).batch(&strings)?;
    mmd2_estimate(&targets, &values, groups)
}

fn check_columns(model: &FbmModel, data: &BitDataset) -> Result<()> {
    if model.variables() != data.n() {
        return Err(invalid(format!(
            "model has {} measured variables but the dataset has {} columns",
            model.variables(),
            data.n()
        )));
    }
    Ok(())
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(parameters: usize) -> Self {
        Self {
            first_moment: vec![0.0; parameters],
            second_moment: vec![0.0; parameters],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(invalid(format!(
            "shape mismatch: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::TrainingAborted {
            epoch: state.step as usize,
            message: format!("non-finite gradient component {i}: {}", grads[i]),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub path: PathBuf,
    /// Write every this many epochs; 0 disables.
    pub every: usize,
    /// Seed recorded in the checkpoint file.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub kernels: Vec<KernelSpec>,
    pub seed: u64,
    /// Draw fresh strings every epoch instead of reusing the first draw.
    pub resample_strings: bool,
    /// Enumerate every string up to each kernel's cutoff with exact weights
    /// instead of sampling; overrides `resample_strings`.
    pub exact_strings: bool,
    pub checkpoint: Option<Checkpoint>,
    /// Epochs already completed by the input model (resume).
    pub start_epoch: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, kernels: Vec<KernelSpec>, seed: u64) -> Self {
        Self {
            epochs,
            learning_rate,
            kernels,
            seed,
            resample_strings: true,
            exact_strings: false,
            checkpoint: None,
            start_epoch: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.epochs < 1 {
            return Err(invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.kernels.is_empty() {
            return Err(invalid("at least one kernel is required"));
        }
        self.kernels.iter().try_for_each(|k| k.validate(n))
    }

    /// Strings used at absolute epoch `epoch` (0-based).
    pub fn strings_for_epoch(&self, n: usize, epoch: usize) -> Result<Vec<KernelStrings>> {
        if self.exact_strings {
            return self.kernels.iter().map(|k| KernelStrings::enumerate(k, n)).collect();
        }
        let round = if self.resample_strings { epoch as u64 } else { 0 };
        sample_all(
            &self.kernels,
            n,
            self.seed.wrapping_add(round.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        )
    }
}

/// Per-epoch records. `loss[e]` and `grad_norm[e]` are taken at the
/// parameters entering epoch `e`, before its update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Absolute epoch numbers, 1-based.
    pub epoch: Vec<usize>,
    pub loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub seconds: Vec<f64>,
    /// Loss of the returned model on the last epoch's strings.
    pub final_loss: Option<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,grad_norm,seconds\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{:e},{:e},{:.6}\n",
                self.epoch[i], self.loss[i], self.grad_norm[i], self.seconds[i]
            ));
        }
        out
    }
}

/// Result of [`train`]; `aborted` is set when the loop stopped early, in
/// which case `model` holds the last good parameters.
#[derive(Debug)]
pub struct TrainRun {
    pub model: FbmModel,
    pub history: TrainHistory,
    pub aborted: Option<Error>,
}

/// Adam on the MMD² estimate. Deterministic for a fixed seed.
pub fn train(model: &FbmModel, data: &BitDataset, config: &TrainConfig) -> Result<TrainRun> {
    train_with(model, data, config, |_, _| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model: &FbmModel,
    data: &BitDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &TrainHistory),
) -> Result<TrainRun> {
    check_columns(model, data)?;
    config.validate(data.n())?;
    let n = data.n();
    let mut model = model.clone();
    let mut params = parameters(&model);
    let mut state = OptimizerState::new(params.len());
    let mut history = TrainHistory::default();

    let mut groups = config.strings_for_epoch(n, config.start_epoch)?;
    let mut targets = target_expectations(data, &flatten(&groups))?;

    for e in config.start_epoch..config.start_epoch + config.epochs {
        let started = Instant::now();
        if config.resample_strings && !config.exact_strings && e > config.start_epoch {
            groups = config.strings_for_epoch(n, e)?;
            targets = target_expectations(data, &flatten(&groups))?;
        }
        let step = loss_and_gradient_with_targets(&model, &targets, &groups).and_then(|(est, grad)| {
            let flat = grad.flat();
            adam_step(&mut params, &flat, &mut state, config.learning_rate).map_err(|err| match err {
                Error::TrainingAborted { message, .. } => Error::TrainingAborted { epoch: e + 1, message },
                other => other,
            })?;
            if !est.value.is_finite() {
                return Err(Error::TrainingAborted {
                    epoch: e + 1,
                    message: format!("non-finite loss {}", est.value),
                });
            }
            Ok((est.value, grad.norm()))
        });
        let (loss, gnorm) = match step {
            Ok(x) => x,
            Err(err) => {
                return Ok(TrainRun {
                    model,
                    history,
                    aborted: Some(err),
                })
            }
        };
        set_parameters(&mut model, &params)?;
        history.epoch.push(e + 1);
        history.loss.push(loss);
        history.grad_norm.push(gnorm);
        history.seconds.push(started.elapsed().as_secs_f64());
        if let Some(cp) = &config.checkpoint {
            if cp.every > 0 && (e + 1) % cp.every == 0 {
                crate::cli::persist::save_model(&model, cp.seed, e + 1, &cp.path)?;
            }
        }
        on_epoch(e + 1, &history);
    }
    history.final_loss = Some(
        mmd2_estimate(
            &targets,
            &Engine::with_max_len(&model, max_len(&groups)).batch(&flatten(&groups))?,
            &groups,
        )?
        .value,
    );
    Ok(TrainRun {
        model,
        history,
        aborted: None,
    })
}

/// Re-expresses the product of all layers as a single layer.
pub fn compile_layers(model: &FbmModel) -> Result<FbmModel> {
    let o = build_orthogonal(model.ansatz());
    let defect = o.orthogonality_defect();
    if defect > 1e-8 {
        return Err(Error::Numerical(format!(
            "accumulated transformation lost orthogonality ({defect:.2e})"
        )));
    }
    let single = decompose_orthogonal(&o)?;
    model.with_ansatz(single)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ZString;
    use crate::flo::FloAnsatz;
    use crate::loss::KernelSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture(seed: u64) -> (FbmModel, BitDataset, Vec<KernelStrings>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = FbmModel::random(2, 2, &mut rng);
        let mn = crate::datagen::GridMN::generate(2, 3, seed).unwrap();
        let data = crate::datagen::mn_sample(&mn, 200, seed);
        let groups = sample_all(
            &[KernelSpec::gaussian(1.0, 4, 30), KernelSpec::gaussian(2.0, 3, 30)],
            6,
            seed,
        )
        .unwrap();
        (model, data, groups)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, data, groups) = fixture(3);
        let (_, grad) = loss_and_gradient(&model, &data, &groups).unwrap();
        let flat = grad.flat();
        let p0 = parameters(&model);
        let h = 1e-4;
        for i in 0..p0.len() {
            let at = |delta: f64| {
                let mut m = model.clone();
                let mut p = p0.clone();
                p[i] += delta;
                set_parameters(&mut m, &p).unwrap();
                evaluate_loss(&m, &data, &groups).unwrap().value
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!(
                (fd - flat[i]).abs() <= 1e-5 * fd.abs().max(1e-3),
                "param {i}: {fd} vs {}",
                flat[i]
            );
        }
    }

    #[test]
    fn zero_difference_has_zero_gradient() {
        let (model, _, groups) = fixture(4);
        let strings = flatten(&groups);
        let targets = Engine::new(&model).batch(&strings).unwrap();
        let (est, grad) = loss_and_gradient_with_targets(&model, &targets, &groups).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(grad.flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn hidden_mode_rotations_have_zero_gradient() {
        // final layer: only rotations generated by m_{2j} m_{2j+1} of hidden modes j,
        // so they act after everything else and commute with every measured Z
        let (model, data, groups) = fixture(5);
        let d = model.modes();
        let pairs = crate::flo::brickwork_pairs(d);
        let hidden: Vec<usize> = (0..pairs.len())
            .filter(|&r| pairs[r].is_multiple_of(2) && (pairs[r] / 2) % 4 == 3)
            .collect();
        let mut last = vec![0.0; pairs.len()];
        for (i, &r) in hidden.iter().enumerate() {
            last[r] = 0.3 + i as f64;
        }
        let tail = FloAnsatz::new(d, 1, last).unwrap();
        let model = model.with_ansatz(model.ansatz().concat(&tail).unwrap()).unwrap();
        let (_, grad) = loss_and_gradient(&model, &data, &groups).unwrap();
        let offset = (model.ansatz().layers() - 1) * pairs.len();
        assert!(!hidden.is_empty());
        for r in hidden {
            assert!(grad.theta[offset + r].abs() < 1e-8, "{}", grad.theta[offset + r]);
        }
    }

    #[test]
    fn adam_examples() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1);
        adam_step(&mut p, &[0.0], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.0]);
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        assert!((p[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        let before = p[0];
        adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        assert!((before - p[0]) <= 0.1 * 1.01);
        assert!(matches!(
            adam_step(&mut p, &[f64::NAN], &mut s, 0.1),
            Err(Error::TrainingAborted { .. })
        ));
        assert!(adam_step(&mut p, &[1.0, 2.0], &mut s, 0.1).is_err());
    }

    #[test]
    fn config_rejects_zero_epochs() {
        let c = TrainConfig::new(0, 0.01, vec![KernelSpec::gaussian(1.0, 2, 10)], 0);
        assert!(c.validate(4).is_err());
        let c = TrainConfig::new(1, -1.0, vec![KernelSpec::gaussian(1.0, 2, 10)], 0);
        assert!(c.validate(4).is_err());
    }

    #[test]
    fn frozen_training_is_deterministic_and_descends() {
        let (model, data, _) = fixture(6);
        let mut cfg = TrainConfig::new(15, 0.05, vec![KernelSpec::gaussian(1.0, 3, 40)], 9);
        cfg.resample_strings = false;
        let a = train(&model, &data, &cfg).unwrap();
        let b = train(&model, &data, &cfg).unwrap();
        assert!(a.aborted.is_none());
        assert_eq!(a.history.loss, b.history.loss);
        assert_eq!(a.history.grad_norm, b.history.grad_norm);
        assert_eq!(a.history.epoch, (1..=15).collect::<Vec<_>>());
        assert!(a.history.final_loss.unwrap() < a.history.loss[0]);
    }

    #[test]
    fn compiled_model_keeps_expectations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = FbmModel::random(2, 2, &mut rng);
        let single = compile_layers(&model).unwrap();
        assert_eq!(single.ansatz().layers(), 1);
        assert!(build_orthogonal(single.ansatz()).max_abs_diff(&build_orthogonal(model.ansatz())) < 1e-10);
        let strings = ZString::all_up_to(6, 3);
        let a = Engine::new(&model).batch(&strings).unwrap();
        let b = Engine::new(&single).batch(&strings).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        let identity = model.with_ansatz(FloAnsatz::zeros(8, 3)).unwrap();
        let c = compile_layers(&identity).unwrap();
        assert!(c.ansatz().angles().iter().all(|&t| t == 0.0));
    }
}
