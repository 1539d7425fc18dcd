//! Plain stochastic gradient descent.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::{Gradients, Network};

/// Hyperparameters for [`sgd_train`]. Construction enforces positivity, so a
/// zero learning rate or epoch count never reaches the training loop.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(Error::argument(format!("learning rate must be positive, got {learning_rate}")));
        }
        if epochs == 0 || batch_size == 0 {
            return Err(Error::argument("epochs and batch size must be positive"));
        }
        Ok(TrainConfig { learning_rate, epochs, batch_size, seed, shuffle: true })
    }

    pub fn with_shuffle(mut self, shuffle: bool) -> Self {
        self.shuffle = shuffle;
        self
    }
}

/// Trains a copy of `net` by mini-batch SGD and returns it with one loss
/// entry per epoch.
///
/// Batch gradients are summed in index order and applied as the mean, and
/// shuffling draws from the config seed, so the result is a pure function of
/// (initial network, data, config). The loss recorded for an epoch is the
/// mean per-example loss over the full dataset *after* that epoch's updates.
pub fn sgd_train(
    net: &Network,
    inputs: &[Tensor],
    targets: &[Tensor],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    if inputs.is_empty() {
        return Err(Error::argument("sgd_train: empty dataset"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::argument(format!(
            "sgd_train: {} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let mut net = net.clone();
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        for batch in order.chunks(cfg.batch_size) {
            let mut accumulated: Option<Gradients> = None;
            for &idx in batch {
                let pass = net.forward(&inputs[idx])?;
                let grads = net.backward(&pass, &targets[idx])?;
                match &mut accumulated {
                    Some(acc) => acc.accumulate(&grads),
                    None => accumulated = Some(grads),
                }
            }
            let grads = accumulated.expect("non-empty batch");
            net.apply_gradients(&grads, cfg.learning_rate / batch.len() as f64);
        }
        history.push(mean_loss(&net, inputs, targets)?);
    }
    Ok((net, history))
}

/// Mean per-example loss over a dataset.
pub fn mean_loss(net: &Network, inputs: &[Tensor], targets: &[Tensor]) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        total += net.loss_value(&net.forward(x)?, t)?;
    }
    Ok(total / inputs.len() as f64)
}
