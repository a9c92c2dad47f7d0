use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkSpec};
use super::optim::{Optimizer, TrainConfig};
use super::Dataset;
use crate::error::{EinconvError, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample cross-entropy over the epoch's updates.
    pub loss: f64,
    /// Accuracy of the predictions made during the epoch's updates.
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub network: Network<T>,
    pub history: Vec<EpochRecord>,
}

pub fn write_history_csv(w: &mut impl Write, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,loss,train_acc,test_acc,seconds")?;
    for r in history {
        let test = r.test_acc.map(|a| format!("{a:.6}")).unwrap_or_default();
        writeln!(w, "{},{:.8},{:.6},{},{:.3}", r.epoch, r.loss, r.train_acc, test, r.seconds)?;
    }
    Ok(())
}

fn check_data(net_classes: usize, input: &[usize], data: &Dataset) -> Result<()> {
    if data.sample_shape != input {
        return Err(EinconvError::Network(format!(
            "dataset samples are {:?}, network expects {input:?}",
            data.sample_shape
        )));
    }
    if data.classes > net_classes {
        return Err(EinconvError::Network(format!(
            "{} classes in data, {net_classes} network outputs",
            data.classes
        )));
    }
    Ok(())
}

/// Initializes `spec` from `cfg.seed` and trains it.
pub fn train<T: Scalar>(
    spec: &NetworkSpec,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let net = Network::init(spec, cfg.seed)?;
    train_network(net, data, test, cfg)
}

/// Mini-batch training of an initialized network. Sample order is shuffled
/// every epoch from a stream seeded by `cfg.seed`.
pub fn train_network<T: Scalar>(
    mut net: Network<T>,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.check()?;
    check_data(net.classes(), &net.spec.input, data)?;
    if let Some(t) = test {
        check_data(net.classes(), &net.spec.input, t)?;
    }
    if data.is_empty() {
        return Err(EinconvError::Network("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.weight_decay);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = cfg.schedule.rate(cfg.learning_rate, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = data.batch::<T>(chunk);
            let (loss, grads, preds) = net.loss_and_grads(&x, &y)?;
            if !loss.is_finite() {
                return Err(EinconvError::Divergence { epoch, step, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += preds.iter().zip(&y).filter(|(p, t)| p == t).count();
            let grads: Vec<&[T]> = grads.iter().map(|g| g.data()).collect();
            let mut params = net.params_mut();
            let mut bufs: Vec<&mut [T]> = params.iter_mut().map(|p| p.data_mut()).collect();
            opt.step(&mut bufs, &grads, lr);
        }
        let test_acc = match test {
            Some(t) => Some(evaluate(&net, t)?),
            None => None,
        };
        history.push(EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
            test_acc,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { network: net, history })
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, y) = data.batch::<T>(chunk);
        let preds = net.predict(&x)?;
        correct += preds.iter().zip(&y).filter(|(p, t)| p == t).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mean cross-entropy over `(x, labels)` and its gradient for every tensor
/// of [`Network::params`], in that order.
pub fn grad_network<T: Scalar>(
    net: &Network<T>,
    x: &DenseTensor<T>,
    labels: &[usize],
) -> Result<(f64, Vec<DenseTensor<T>>)> {
    let (loss, grads, _) = net.loss_and_grads(x, labels)?;
    Ok((loss, grads))
}
