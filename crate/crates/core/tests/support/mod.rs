//! Helpers shared by integration tests.

#![allow(dead_code)]

use ctl_core::lm::{Model, ModelConfig};
use ctl_core::par::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const STEP: f64 = 1e-3;

fn central(m: &mut Model<f64>, batch: &[&[u32]], i: usize, h: f64) -> f64 {
    let orig = m.params()[i];
    m.params_mut()[i] = orig + h;
    let up = m.loss(batch, Execution::Sequential).unwrap();
    m.params_mut()[i] = orig - h;
    let down = m.loss(batch, Execution::Sequential).unwrap();
    m.params_mut()[i] = orig;
    (up - down) / (2.0 * h)
}

/// Richardson-extrapolated central differences (steps h and h/2) in f64.
pub fn numeric_gradient(m: &mut Model<f64>, batch: &[&[u32]], i: usize) -> f64 {
    (4.0 * central(m, batch, i, STEP / 2.0) - central(m, batch, i, STEP)) / 3.0
}

/// Two layers, two heads, width 8, vocabulary 7: 1399 parameters, pushed
/// away from initialization so no gradient is trivially tiny.
pub fn perturbed_micro_model() -> Model<f64> {
    let config = ModelConfig::custom(2, 2, 8, 16, 8, 7);
    let mut m: Model<f64> = Model::init(config, 11).unwrap().cast();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.3).unwrap();
    for p in m.params_mut() {
        *p += noise.sample(&mut rng);
    }
    m
}

pub struct GradientCheck {
    pub parameters: usize,
    pub max_rel_error: f64,
    pub worst_tensor: String,
}

pub fn gradient_check() -> GradientCheck {
    let mut m = perturbed_micro_model();
    let batch: [&[u32]; 2] = [&[2, 5, 3, 6, 4, 1, 2, 0], &[6, 6, 3]];
    let analytic = m.loss_and_grad(&batch, Execution::Sequential).unwrap().grad;
    let mut worst = (0.0f64, 0);
    for (i, &a) in analytic.iter().enumerate() {
        let n = numeric_gradient(&mut m, &batch, i);
        let denom = a.abs().max(n.abs());
        // key biases have an exactly zero gradient; compare those absolutely
        let rel = if denom < 1e-10 {
            (a - n).abs()
        } else {
            (a - n).abs() / denom
        };
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    let name = m
        .layout()
        .tensors
        .iter()
        .find(|t| t.range().contains(&worst.1))
        .unwrap()
        .name
        .clone();
    GradientCheck {
        parameters: analytic.len(),
        max_rel_error: worst.0,
        worst_tensor: name,
    }
}
