use std::path::PathBuf;

use clap::Args;
use einconv_core::search::{search, SearchConfig, SurrogateEvaluator, TrainerEvaluator};
use einconv_core::train::{NetworkSpec, TrainConfig};

use crate::train::load_split;
use crate::util::{header_line, parse_geometry, CliError, CliResult};

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long, default_value = "lenet-mini")]
    preset: String,
    #[arg(long, default_value_t = 24)]
    pop: usize,
    #[arg(long, default_value_t = 5)]
    generations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Results directory; an existing state.json there is resumed.
    #[arg(long)]
    out: PathBuf,
    /// Score genomes with the closed-form surrogate instead of training.
    #[arg(long)]
    surrogate: bool,
    /// IDX directory for the trainer objective.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Stop after this many distinct evaluations.
    #[arg(long)]
    budget: Option<usize>,
    /// Geometry genomes are stored at: HxW,IxJ,C,C'.
    #[arg(long, default_value = "14x14,3x3,8,16")]
    reference: String,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Leading training samples used for fitting each genome.
    #[arg(long, default_value_t = 500)]
    train_subset: usize,
    /// Training samples after the fitting subset, used for the accuracy objective.
    #[arg(long, default_value_t = 250)]
    valid_subset: usize,
}

pub fn run(a: &SearchArgs) -> CliResult<()> {
    if a.preset != "lenet-mini" && a.preset != "lenet_mini" {
        return Err(CliError::usage(format!("unknown preset `{}`", a.preset)));
    }
    let mut cfg = SearchConfig::new(a.pop, a.generations, a.seed, parse_geometry(&a.reference)?);
    cfg.eval_budget = a.budget;
    cfg.header = vec![header_line()];
    let state = if a.surrogate {
        search(&cfg, &SurrogateEvaluator::default(), Some(&a.out))?
    } else {
        let dir = a.data.as_deref().ok_or_else(|| CliError::usage("training objective needs --data (or --surrogate)"))?;
        let (all, _) = load_split(dir)?;
        let n_fit = a.train_subset.min(all.len());
        let n_val = a.valid_subset.min(all.len() - n_fit);
        if n_fit == 0 || n_val == 0 {
            return Err(CliError::usage("training data too small for the requested subsets"));
        }
        let fit = all.select(&(0..n_fit).collect::<Vec<_>>());
        let valid = all.select(&(n_fit..n_fit + n_val).collect::<Vec<_>>());
        let ev = TrainerEvaluator {
            preset: NetworkSpec::lenet_mini,
            train: &fit,
            valid: &valid,
            config: TrainConfig {
                epochs: a.epochs,
                learning_rate: a.lr,
                batch_size: a.batch_size,
                ..TrainConfig::default()
            },
        };
        search(&cfg, &ev, Some(&a.out))?
    };
    println!(
        "generation {} archive {} front {}",
        state.generation,
        state.archive.len(),
        state.front().len()
    );
    Ok(())
}
