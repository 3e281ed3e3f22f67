//! Browser bindings: train a small Born machine on a grid Markov network and
//! inspect its output distribution and Z-string expectations.
//!
//! Everything runs single-threaded; the trainer's wall-clock history is not
//! used because `std::time` is unavailable on `wasm32-unknown-unknown`.

use fermiborn::datagen::{mn_sample, BitDataset, GridMN};
use fermiborn::engine::{Engine, FbmModel, ZString};
use fermiborn::loss::{KernelSpec, KernelStrings};
use fermiborn::oracle::{exact_distribution, tvd};
use fermiborn::trainer::{adam_step, loss_and_gradient, parameters, set_parameters, OptimizerState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: fermiborn::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// A 2×3 grid target (6 variables) and a two-register model.
#[wasm_bindgen]
pub struct Demo {
    target: GridMN,
    data: BitDataset,
    model: FbmModel,
    groups: Vec<KernelStrings>,
    state: OptimizerState,
    epochs: usize,
}

#[wasm_bindgen]
impl Demo {
    /// `ell_max` is the longest Z-string in the loss (1 to 6).
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, layers: usize, ell_max: usize) -> Result<Demo, JsError> {
        let seed = u64::from(seed);
        let target = GridMN::generate(2, 3, seed).map_err(js_err)?;
        let data = mn_sample(&target, 1000, seed + 1);
        let model = FbmModel::random(2, layers.max(1), &mut ChaCha8Rng::seed_from_u64(seed + 2));
        let spec = KernelSpec::gaussian(1.0, ell_max.clamp(1, 6), 1);
        let groups = vec![KernelStrings::enumerate(&spec, 6).map_err(js_err)?];
        let state = OptimizerState::new(model.parameter_count());
        Ok(Demo {
            target,
            data,
            model,
            groups,
            state,
            epochs: 0,
        })
    }

    /// Runs `steps` Adam updates and returns the loss before the last one.
    pub fn train(&mut self, steps: usize, learning_rate: f64) -> Result<f64, JsError> {
        let mut params = parameters(&self.model);
        let mut last = f64::NAN;
        for _ in 0..steps {
            let (est, grad) = loss_and_gradient(&self.model, &self.data, &self.groups).map_err(js_err)?;
            adam_step(&mut params, &grad.flat(), &mut self.state, learning_rate).map_err(js_err)?;
            set_parameters(&mut self.model, &params).map_err(js_err)?;
            last = est.value;
            self.epochs += 1;
        }
        Ok(last)
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    /// Total variation distance between the model and the exact target.
    pub fn tvd(&self) -> Result<f64, JsError> {
        let q = exact_distribution(&self.model).map_err(js_err)?;
        tvd(self.target.joint(), &q).map_err(js_err)
    }

    /// Target probabilities followed by model probabilities, 64 each, with
    /// variable 0 as the most significant bit.
    pub fn distributions(&self) -> Result<Vec<f64>, JsError> {
        let q = exact_distribution(&self.model).map_err(js_err)?;
        Ok(self.target.joint().probs().iter().chain(q.probs()).copied().collect())
    }

    /// Model and data expectation of `Z` on the given variables.
    pub fn expectation(&self, variables: Vec<usize>) -> Result<Vec<f64>, JsError> {
        let z = ZString::new(variables, 6).map_err(js_err)?;
        let model = Engine::with_max_len(&self.model, z.len().max(1))
            .expectation(&z)
            .map_err(js_err)?;
        let data = fermiborn::loss::target_expectations(&self.data, std::slice::from_ref(&z)).map_err(js_err)?[0];
        Ok(vec![model, data])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_lowers_tvd() {
        let mut demo = Demo::new(3, 2, 4).unwrap_or_else(|_| panic!("demo"));
        let before = demo.tvd().unwrap_or_else(|_| panic!("tvd"));
        demo.train(150, 0.05).unwrap_or_else(|_| panic!("train"));
        let after = demo.tvd().unwrap_or_else(|_| panic!("tvd"));
        assert_eq!(demo.epochs(), 150);
        assert!(after < before, "{before} → {after}");
        let d = demo.distributions().unwrap_or_else(|_| panic!("dist"));
        assert_eq!(d.len(), 128);
        assert!((d[64..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn expectations_are_bounded() {
        let demo = Demo::new(1, 1, 2).unwrap_or_else(|_| panic!("demo"));
        let v = demo.expectation(vec![0, 4]).unwrap_or_else(|_| panic!("expectation"));
        assert!(v.iter().all(|x| x.abs() <= 1.0 + 1e-12));
    }
}
