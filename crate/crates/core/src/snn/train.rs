use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::bptt::{loss_and_grad, Heaviside};
use super::{mape, predict, Architecture, SnnModel};
use crate::dataset::FlimSample;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Squared error on the lifetime mapped to `[0, 1]` over the model range.
    MseNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Upper bound; training stops earlier once validation MAPE has not
    /// improved for `patience` epochs.
    pub epochs: usize,
    pub patience: usize,
    pub surrogate_slope: f64,
    /// Drop the reset path from the gradient.
    pub detach_reset: bool,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 200,
            patience: 20,
            surrogate_slope: 25.0,
            detach_reset: true,
            seed: 0,
            loss: Loss::MseNormalized,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.batch_size > 0
            && self.epochs > 0
            && self.patience > 0
            && self.surrogate_slope > 0.0;
        if !positive {
            return Err(Error::InvalidConfig(
                "learning rate, batch size, epochs, patience and surrogate slope must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Loss over the whole training set after the epoch's last update.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MAPE.
    pub model: SnnModel,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn update(&mut self, params: &mut [&mut f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            **p -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

fn evaluate(model: &SnnModel, val: &[FlimSample]) -> Result<(f64, f64)> {
    let preds = predict(model, val)?;
    let loss = val
        .iter()
        .zip(&preds)
        .map(|(s, &p)| (model.normalize(p) - model.normalize(s.lifetime_ns)).powi(2))
        .sum::<f64>()
        / val.len() as f64;
    let m = mape(val.iter().map(|s| s.lifetime_ns).zip(preds.iter().copied()))?;
    Ok((loss, m))
}

/// Minibatch Adam over surrogate-gradient BPTT, keeping the parameters with
/// the best validation MAPE. `on_epoch` sees each epoch's statistics.
pub fn train_bptt<F>(
    train: &[FlimSample],
    val: &[FlimSample],
    arch: Architecture,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochStats),
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if let Some(s) = train.iter().chain(val).find(|s| s.spikes.len() != arch.n_steps) {
        return Err(Error::Shape {
            what: "spike train length vs model steps",
            expected: arch.n_steps,
            got: s.spikes.len(),
        });
    }

    let mut model = SnnModel::init(arch, cfg.seed)?;
    let mut adam = Adam::new(model.n_params(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut flat = vec![0.0; model.n_params()];
    let h = arch.n_hidden;

    let mut best = model.clone();
    let mut best_mape = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();

    for epoch in 1..=cfg.epochs {
        let mut rng = seed::rng(seed::derive(cfg.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        for (batch_index, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&FlimSample> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, g) = loss_and_grad::<Heaviside>(&model, &batch, cfg.surrogate_slope, cfg.detach_reset)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            flat[..h].copy_from_slice(&g.w_in);
            flat[h..2 * h].copy_from_slice(&g.w_out);
            flat[2 * h] = g.b_out;
            let mut params: Vec<&mut f64> = model
                .w_in
                .iter_mut()
                .chain(model.w_out.iter_mut())
                .chain(std::iter::once(&mut model.b_out))
                .collect();
            adam.update(&mut params, &flat);
        }
        let (train_loss, _) = evaluate(&model, train)?;
        let (val_loss, val_mape) = evaluate(&model, val)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        let stats = EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_mape,
        };
        on_epoch(&stats);
        history.push(stats);
        if val_mape < best_mape {
            best_mape = val_mape;
            best_epoch = epoch;
            best = model.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        history,
    })
}
