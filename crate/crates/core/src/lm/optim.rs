use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::codec::TokenId;
use crate::error::{Error, Result};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
}

impl AdamState {
    pub fn new(params: usize) -> Self {
        Self {
            m: vec![0.0; params],
            v: vec![0.0; params],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Loss before the update.
    pub loss: f64,
    pub grad_norm: f64,
    pub tokens: usize,
}

/// One clipped Adam update on the mean loss of `batch`.
pub fn train_step(
    model: &mut Model,
    batch: &[&[TokenId]],
    state: &mut AdamState,
    cfg: &AdamConfig,
    exec: Execution,
) -> Result<StepStats> {
    if state.m.len() != model.params().len() {
        return Err(Error::validation("optimizer state does not match the model"));
    }
    let bg = model.loss_and_grad(batch, exec)?;
    if let Some(i) = bg.grad.iter().position(|g| !g.is_finite()) {
        let name = model
            .layout()
            .tensors
            .iter()
            .find(|t| t.range().contains(&i))
            .map_or("?", |t| t.name.as_str());
        return Err(Error::Training(format!(
            "non-finite gradient in tensor {name} at step {} (loss {})",
            state.step + 1,
            bg.loss
        )));
    }
    let norm = bg.grad.iter().map(|&g| f64::from(g) * f64::from(g)).sum::<f64>().sqrt();
    let clip = match cfg.clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let lr_t = cfg.learning_rate * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
    let (b1f, b2f, clipf) = (b1 as f32, b2 as f32, clip as f32);
    let (lr_f, eps_f) = (lr_t as f32, cfg.eps as f32);
    for (((p, &g), m), v) in model
        .params_mut()
        .iter_mut()
        .zip(&bg.grad)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let g = g * clipf;
        *m = b1f * *m + (1.0 - b1f) * g;
        *v = b2f * *v + (1.0 - b2f) * g * g;
        *p -= lr_f * *m / (v.sqrt() + eps_f);
    }
    Ok(StepStats {
        loss: bg.loss,
        grad_norm: norm,
        tokens: bg.tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::ModelConfig;

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut m = Model::init(ModelConfig::custom(1, 2, 8, 16, 8, 7), 1).unwrap();
        let before = m.clone();
        let mut st = AdamState::new(m.params().len());
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..AdamConfig::default()
        };
        let w: Vec<TokenId> = vec![2, 3, 4, 5];
        for _ in 0..3 {
            train_step(&mut m, &[&w], &mut st, &cfg, Execution::Sequential).unwrap();
        }
        assert_eq!(m, before);
        assert_eq!(st.step(), 3);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let mut m = Model::init(ModelConfig::custom(1, 2, 8, 16, 8, 7), 1).unwrap();
        m.tensor_mut("head.w").unwrap()[0] = f32::NAN;
        let mut st = AdamState::new(m.params().len());
        let err = train_step(
            &mut m,
            &[&[2, 3, 4]],
            &mut st,
            &AdamConfig::default(),
            Execution::Sequential,
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Training(ref msg) if msg.contains("non-finite")),
            "{err}"
        );
    }

    #[test]
    fn overfits_a_single_token_language() {
        let mut m = Model::init(ModelConfig::custom(1, 2, 16, 32, 16, 9), 2).unwrap();
        let mut st = AdamState::new(m.params().len());
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        };
        let w: Vec<TokenId> = vec![4; 16];
        let first = train_step(&mut m, &[&w], &mut st, &cfg, Execution::Sequential)
            .unwrap()
            .loss;
        for _ in 0..100 {
            train_step(&mut m, &[&w], &mut st, &cfg, Execution::Sequential).unwrap();
        }
        let last = m.loss(&[&w], Execution::Sequential).unwrap();
        assert!(first > 1.5 && last < 0.01, "{first} -> {last}");
    }
}
