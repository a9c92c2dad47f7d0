use crate::error::Result;
use crate::scalar::Scalar;
use crate::train::{evaluate, train, Dataset, LayerSpec, NetworkSpec, TrainConfig};

use super::mutation::Genome;
use super::nsga2::Objectives;

/// Scores a genome. Implementations must be deterministic in `(genome, seed)`.
pub trait Evaluator: Sync {
    fn evaluate(&self, genome: &Genome, seed: u64) -> Result<Objectives>;

    /// One-line description of the accuracy objective, written into results.
    fn describe(&self) -> String;

    /// Parameter objective without evaluating; used when evaluation fails.
    fn params(&self, genome: &Genome) -> u64 {
        genome.graph.param_count()
    }
}

/// Trains a preset network with the genome's graph in every Einconv block
/// and reports validation accuracy and the Einconv parameter count.
pub struct TrainerEvaluator<'a> {
    pub preset: fn(LayerSpec) -> NetworkSpec,
    pub train: &'a Dataset,
    pub valid: &'a Dataset,
    pub config: TrainConfig,
}

impl TrainerEvaluator<'_> {
    fn run<T: Scalar>(&self, genome: &Genome, seed: u64) -> Result<Objectives> {
        let spec = (self.preset)(LayerSpec::Graph(genome.graph.clone()));
        let cfg = TrainConfig {
            seed,
            ..self.config.clone()
        };
        let out = train::<T>(&spec, self.train, None, &cfg)?;
        let acc = evaluate(&out.network, self.valid)?;
        Ok(Objectives::new(acc, out.network.conv_param_count()))
    }
}

impl Evaluator for TrainerEvaluator<'_> {
    fn evaluate(&self, genome: &Genome, seed: u64) -> Result<Objectives> {
        self.run::<f32>(genome, seed)
    }

    fn describe(&self) -> String {
        format!(
            "validation accuracy after {} epoch(s) of {:?} (lr {}, batch {}) on {} training samples, {} validation samples",
            self.config.epochs,
            self.config.optimizer,
            self.config.learning_rate,
            self.config.batch_size,
            self.train.len(),
            self.valid.len()
        )
    }

    fn params(&self, genome: &Genome) -> u64 {
        let spec = (self.preset)(LayerSpec::Graph(genome.graph.clone()));
        spec.einconv_graphs()
            .map(|gs| gs.iter().map(|g| g.param_count()).sum())
            .unwrap_or_else(|_| genome.graph.param_count())
    }
}

/// Cheap stand-in for training: accuracy `1 - exp(-params / scale)` plus a
/// small structure-dependent offset from the canonical hash.
pub struct SurrogateEvaluator {
    pub scale: f64,
}

impl Default for SurrogateEvaluator {
    fn default() -> Self {
        SurrogateEvaluator { scale: 500.0 }
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, genome: &Genome, _seed: u64) -> Result<Objectives> {
        let params = genome.graph.param_count();
        let h = u64::from_str_radix(&genome.hash()[..8], 16).unwrap_or(0);
        let jitter = (h % 1000) as f64 * 1e-5;
        let acc = (1.0 - (-(params as f64) / self.scale).exp()) * 0.98 + jitter;
        Ok(Objectives::new(acc, params))
    }

    fn describe(&self) -> String {
        format!("surrogate accuracy 0.98*(1-exp(-params/{})) + hash jitter", self.scale)
    }
}
