use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::NumericTable;
use crate::error::{Error, Result};
use crate::seed::rng_for;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::backprop::backward;
use super::mlp::{mae_loss, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 10,
            learning_rate: 1e-3,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Training MAE of the parameters at the end of each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub losses: Vec<f64>,
    /// Index of the lowest loss; ties keep the earliest epoch.
    pub best_epoch: usize,
    pub adam_steps: u64,
}

impl LossHistory {
    pub fn best_loss(&self) -> f64 {
        self.losses[self.best_epoch]
    }
}

/// Minibatch Adam on the MAE loss.
///
/// Rows are reshuffled every epoch from a stream seeded by `config.seed`; the
/// last batch of an epoch may be short. After each epoch the full training
/// MAE is recorded, and the parameters of the lowest-loss epoch are returned.
/// A fresh optimizer state is used, and frozen layers in `mlp` stay fixed.
pub fn train(mlp: &Mlp, data: &NumericTable, config: &TrainConfig) -> Result<(Mlp, LossHistory)> {
    config.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::Argument("cannot train on an empty table".into()));
    }
    if data.n_features() != mlp.input_dim() {
        return Err(Error::Shape(format!(
            "network expects {} inputs, table has {} features",
            mlp.input_dim(),
            data.n_features()
        )));
    }

    let mut net = mlp.clone();
    let mut state = AdamState::new(&net, AdamConfig::with_learning_rate(config.learning_rate));
    let mut rng = rng_for(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Mlp)> = None;

    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(config.batch_size) {
            let batch = data.select_rows(chunk);
            let (grads, _) = backward(&net, batch.features(), batch.target())?;
            adam_step(&mut net, &grads, &mut state)?;
        }

        let preds = net.forward_batch(data.features())?;
        let loss = mae_loss(&preds, data.target())?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite training loss at epoch {epoch}"
            )));
        }
        losses.push(loss);
        if best.as_ref().is_none_or(|(_, l, _)| loss < *l) {
            best = Some((epoch, loss, net.clone()));
        }
    }

    let (best_epoch, _, best_net) = best.expect("epochs >= 1");
    Ok((
        best_net,
        LossHistory {
            losses,
            best_epoch,
            adam_steps: state.t,
        },
    ))
}
