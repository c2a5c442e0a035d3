//! Minibatch training of an [`Mlp`] against a per-item loss.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.adam.lr
            )));
        }
        Ok(())
    }
}

/// Divides `grad` by `n`, the usual batch mean.
fn scale(grad: &mut [f64], n: usize) {
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
}

/// Mean loss over every item, in item order.
pub fn mean_loss<F>(mlp: &Mlp, inputs: &[Vec<f64>], item_loss: &F) -> Result<f64>
where
    F: Fn(usize, &[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut total = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let (v, _) = item_loss(i, &mlp.forward(x).output)?;
        total += v;
    }
    let mean = total / inputs.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Numerical(format!("non-finite mean loss {mean}")));
    }
    Ok(mean)
}

/// Trains with Adam on shuffled minibatches. `item_loss(i, output)` returns
/// the loss of item `i` and its gradient with respect to the raw network
/// output. Returns the full-data mean loss before training followed by one
/// entry per epoch.
pub fn fit<R, F>(
    mlp: &mut Mlp,
    inputs: &[Vec<f64>],
    cfg: &TrainConfig,
    rng: &mut R,
    item_loss: F,
) -> Result<Vec<f64>>
where
    R: Rng,
    F: Fn(usize, &[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot train on an empty set".into(),
        ));
    }
    let mut opt = Adam::new(cfg.adam, mlp.params.len());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    trace.push(mean_loss(mlp, inputs, &item_loss)?);
    let mut grad = vec![0.0; mlp.params.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let x = &inputs[i];
                let fwd = mlp.forward(x);
                let (v, g_out) = item_loss(i, &fwd.output)?;
                if !v.is_finite() || g_out.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {epoch}, batch {b}, item {i}"
                    )));
                }
                mlp.backward(x, &fwd, &g_out, &mut grad);
            }
            scale(&mut grad, batch.len());
            opt.step(&mut mlp.params, &grad);
        }
        trace.push(mean_loss(mlp, inputs, &item_loss)?);
    }
    Ok(trace)
}
