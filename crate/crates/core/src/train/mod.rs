//! Small-network training: IDX data, network blocks, optimizers.

mod fit;
mod idx;
mod network;
mod optim;

pub use fit::{evaluate, grad_network, train, train_network, write_history_csv, EpochRecord, TrainOutcome};
pub use idx::{load_idx, parse_idx, write_idx, Dataset, IMAGE_MAGIC, LABEL_MAGIC};
pub use network::{separable_synthetic, Block, BlockParams, LayerSpec, Network, NetworkSpec, Shape};
pub use optim::{
    Optimizer, OptimizerKind, Schedule, TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, MOMENTUM,
};
