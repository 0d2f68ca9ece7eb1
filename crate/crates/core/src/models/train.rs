use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};
use crate::features::TrainingSample;
use crate::numeric::{Adagrad, Gradients};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adagrad_decay: f64,
    pub adagrad_epsilon: f64,
    /// Log the smoothed loss every this many steps (0 disables).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            batch_size: 256,
            epochs: 1,
            seed: 7,
            adagrad_decay: 0.9999,
            adagrad_epsilon: 1e-8,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.adagrad_decay > 0.0 && self.adagrad_decay <= 1.0) {
            return Err(Error::Config(format!(
                "adagrad_decay {} outside (0, 1]",
                self.adagrad_decay
            )));
        }
        if !(self.adagrad_epsilon > 0.0) {
            return Err(Error::Config("adagrad_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Mean batch loss of every optimizer step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub losses: Vec<f64>,
}

impl LossCurve {
    /// Mean of the last `window` steps.
    pub fn smoothed_tail(&self, window: usize) -> Option<f64> {
        let n = self.losses.len().min(window);
        (n > 0).then(|| self.losses[self.losses.len() - n..].iter().sum::<f64>() / n as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

/// Loss and gradient of the mean NLL over `batch`.
pub fn batch_gradient(
    net: &Network,
    batch: &[&TrainingSample],
    grads: &mut Gradients,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let w = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        total += net.accumulate(s.user_input(), s.target_input(), s.label, w, grads)?;
    }
    Ok(total * w)
}

/// Mini-batch Adagrad over seeded shuffles of `samples`.
pub fn train(
    net: &mut Network,
    samples: &[TrainingSample],
    cfg: &TrainConfig,
) -> Result<LossCurve> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for s in samples {
        s.validate(&net.vocab)?;
    }
    let mut rng = seeded(cfg.seed);
    let mut opt = Adagrad::new(
        &net.params,
        cfg.learning_rate,
        cfg.adagrad_decay,
        cfg.adagrad_epsilon,
    )?;
    let mut grads = Gradients::zeros_like(&net.params);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = LossCurve::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &samples[i]).collect();
            grads.reset();
            let loss = batch_gradient(net, &batch, &mut grads)?;
            let step = curve.losses.len() + 1;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            opt.step(&mut net.params, &grads)?;
            curve.losses.push(loss);
            if cfg.log_every > 0 && step % cfg.log_every == 0 {
                info!(
                    "{} epoch {} step {step}: loss {:.5}",
                    net.kind.name(),
                    epoch + 1,
                    curve.smoothed_tail(cfg.log_every).unwrap_or(loss)
                );
            }
        }
    }
    Ok(curve)
}
