use serde::{Deserialize, Serialize};

use crate::error::{EinconvError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    MomentumSgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = EinconvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "momentum" | "momentum-sgd" | "momentum_sgd" => Ok(OptimizerKind::MomentumSgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(EinconvError::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Schedule {
    Constant,
    /// Halve the rate every `every` epochs.
    StepHalving { every: usize },
}

impl Schedule {
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::StepHalving { every } => base * 0.5f64.powi((epoch / every.max(1)) as i32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 2e-4,
            weight_decay: 1e-6,
            batch_size: 16,
            epochs: 50,
            seed: 0,
            schedule: Schedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(EinconvError::Config("learning rate must be finite and non-negative".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(EinconvError::Config("weight decay must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(EinconvError::Config("batch size must be positive".into()));
        }
        if let Schedule::StepHalving { every: 0 } = self.schedule {
            return Err(EinconvError::Config("step-halving period must be positive".into()));
        }
        Ok(())
    }
}

pub const MOMENTUM: f64 = 0.9;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer state over a fixed list of parameter buffers.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    weight_decay: f64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            weight_decay,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update with rate `lr`; weight decay enters as `g + wd * θ`.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) {
        assert_eq!(params.len(), grads.len());
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            if self.kind == OptimizerKind::Adam {
                self.second = self.first.clone();
            }
        }
        self.steps += 1;
        let wd = T::of(self.weight_decay);
        let lr_t = T::of(lr);
        let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
        let c1 = T::of(1.0 - ADAM_BETA1.powi(self.steps as i32));
        let c2 = T::of(1.0 - ADAM_BETA2.powi(self.steps as i32));
        let eps = T::of(ADAM_EPS);
        let mu = T::of(MOMENTUM);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for (j, (w, &gr)) in p.iter_mut().zip(g.iter()).enumerate() {
                let gr = gr + wd * *w;
                match self.kind {
                    OptimizerKind::Sgd => *w -= lr_t * gr,
                    OptimizerKind::MomentumSgd => {
                        let v = &mut self.first[k][j];
                        *v = mu * *v + gr;
                        *w -= lr_t * *v;
                    }
                    OptimizerKind::Adam => {
                        let m = &mut self.first[k][j];
                        *m = b1 * *m + (T::one() - b1) * gr;
                        let v = &mut self.second[k][j];
                        *v = b2 * *v + (T::one() - b2) * gr * gr;
                        let mhat = self.first[k][j] / c1;
                        let vhat = self.second[k][j] / c2;
                        *w -= lr_t * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
