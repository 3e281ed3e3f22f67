use fermiborn::datagen::{mn_sample, BitDataset, GridMN};
use fermiborn::engine::{Engine, FbmModel, ZString};
use fermiborn::loss::{sample_all, KernelSpec, KernelStrings};
use fermiborn::trainer::{
    adam_step, compile_layers, evaluate_loss, loss_and_gradient, parameters, set_parameters, train, train_with,
    OptimizerState, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_data(rows: usize, cols: usize, count: usize, seed: u64) -> BitDataset {
    mn_sample(&GridMN::generate(rows, cols, seed).unwrap(), count, seed + 1)
}

/// Largest violation of `|fd − g| ≤ 1e−5 · max(|fd|, 1e−3)` over all parameters.
fn finite_difference_violation(model: &FbmModel, data: &BitDataset, groups: &[KernelStrings]) -> f64 {
    let (_, grad) = loss_and_gradient(model, data, groups).unwrap();
    let g = grad.flat();
    let p0 = parameters(model);
    let h = 1e-4;
    (0..p0.len())
        .map(|i| {
            let at = |delta: f64| {
                let mut m = model.clone();
                let mut p = p0.clone();
                p[i] += delta;
                set_parameters(&mut m, &p).unwrap();
                evaluate_loss(&m, data, groups).unwrap().value
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            (fd - g[i]).abs() / (1e-5 * fd.abs().max(1e-3))
        })
        .fold(0.0, f64::max)
}

#[test]
fn gradients_match_finite_differences_on_random_instances() {
    for seed in 0..8 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let layers = 1 + seed as usize % 2;
        let model = FbmModel::random(2, layers, &mut rng);
        let data = grid_data(2, 3, 300, seed);
        let groups = sample_all(
            &[KernelSpec::gaussian(1.0, 4, 60), KernelSpec::gaussian(3.0, 2, 60)],
            6,
            seed,
        )
        .unwrap();
        let worst = finite_difference_violation(&model, &data, &groups);
        assert!(worst <= 1.0, "seed {seed}: violation ratio {worst}");
    }
}

#[test]
fn linear_kernel_gradient_matches_finite_differences() {
    let model = FbmModel::random(2, 2, &mut ChaCha8Rng::seed_from_u64(4));
    let data = grid_data(2, 3, 300, 4);
    let groups = sample_all(&[KernelSpec::linear()], 6, 0).unwrap();
    assert!(finite_difference_violation(&model, &data, &groups) <= 1.0);
}

#[test]
fn small_steps_on_a_fixed_objective_descend() {
    let data = grid_data(2, 3, 1000, 7);
    let groups = vec![KernelStrings::enumerate(&KernelSpec::gaussian(1.0, 2, 1), 6).unwrap()];
    let mut model = FbmModel::random(2, 2, &mut ChaCha8Rng::seed_from_u64(8));
    let mut params = parameters(&model);
    let mut state = OptimizerState::new(params.len());
    let mut losses = Vec::new();
    for _ in 0..21 {
        let (est, grad) = loss_and_gradient(&model, &data, &groups).unwrap();
        losses.push(est.value);
        adam_step(&mut params, &grad.flat(), &mut state, 1e-3).unwrap();
        set_parameters(&mut model, &params).unwrap();
    }
    let violations = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(violations <= 2, "{violations} increases in {losses:?}");
    assert!(losses[20] < losses[0]);
}

#[test]
fn training_reduces_loss_on_grid_data() {
    let data = grid_data(2, 3, 1000, 2);
    let model = FbmModel::random(2, 2, &mut ChaCha8Rng::seed_from_u64(2));
    let mut config = TrainConfig::new(300, 0.02, vec![KernelSpec::gaussian(1.0, 3, 200)], 5);
    config.resample_strings = false;
    let run = train(&model, &data, &config).unwrap();
    assert!(run.aborted.is_none());
    assert_eq!(run.history.len(), 300);
    let first = run.history.loss[0];
    let last = run.history.final_loss.unwrap();
    assert!(last < 0.5 * first, "loss {first} → {last}");
}

#[test]
fn training_is_deterministic_and_numbers_epochs() {
    let data = grid_data(2, 3, 200, 3);
    let model = FbmModel::random(2, 1, &mut ChaCha8Rng::seed_from_u64(3));
    let mut config = TrainConfig::new(5, 0.05, vec![KernelSpec::gaussian(2.0, 2, 50)], 9);
    let a = train(&model, &data, &config).unwrap();
    let b = train(&model, &data, &config).unwrap();
    assert_eq!(a.history.loss, b.history.loss);
    assert_eq!(parameters(&a.model), parameters(&b.model));
    assert_eq!(a.history.epoch, vec![1, 2, 3, 4, 5]);

    config.start_epoch = 5;
    let mut seen = Vec::new();
    let c = train_with(&a.model, &data, &config, |e, _| seen.push(e)).unwrap();
    assert_eq!(c.history.epoch, vec![6, 7, 8, 9, 10]);
    assert_eq!(seen.len(), 5);
}

#[test]
fn column_mismatch_is_rejected() {
    let data = grid_data(3, 3, 10, 0);
    let model = FbmModel::vacuum(2, 1);
    let config = TrainConfig::new(1, 0.01, vec![KernelSpec::gaussian(1.0, 2, 10)], 0);
    assert!(train(&model, &data, &config).is_err());
}

#[test]
fn compiled_single_layer_preserves_expectations() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for layers in [2, 3, 5] {
        let model = FbmModel::random(2, layers, &mut rng);
        let single = compile_layers(&model).unwrap();
        assert_eq!(single.ansatz().layers(), 1);
        let strings: Vec<ZString> = ZString::all_up_to(6, 3);
        let a = Engine::with_max_len(&model, 3).batch(&strings).unwrap();
        let b = Engine::with_max_len(&single, 3).batch(&strings).unwrap();
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{layers} layers: {worst}");
    }
}
