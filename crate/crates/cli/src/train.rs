use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use einconv_core::graph::{EinconvGraph, NamedKind};
use einconv_core::train::{
    load_idx, separable_synthetic, train, write_history_csv, Dataset, EpochRecord, LayerSpec, NetworkSpec,
    OptimizerKind, TrainConfig,
};
use einconv_core::Scalar;

use crate::util::{header_line, parse_ranks, read_text, strip_comments, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Preset (lenet-mini, separable) or a network JSON file.
    #[arg(long)]
    net: String,
    /// Directory with train-/test- IDX files; not needed for `separable`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// TOML training config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Einconv layer for lenet-mini, e.g. standard or cp.
    #[arg(long, default_value = "standard")]
    layer: String,
    /// Graph JSON used as the lenet-mini layer instead of --layer.
    #[arg(long)]
    layer_graph: Option<PathBuf>,
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long, default_value_t = 3)]
    filter: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "f32")]
    precision: Precision,
    /// Output directory for history.csv and checkpoint/.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn find(dir: &Path, prefixes: &[&str], suffix: &str) -> Option<PathBuf> {
    prefixes.iter().map(|p| dir.join(format!("{p}{suffix}"))).find(|p| p.exists())
}

/// Training and (optional) test split from an IDX directory.
pub fn load_split(dir: &Path) -> CliResult<(Dataset, Option<Dataset>)> {
    if !dir.is_dir() {
        return Err(CliError {
            code: crate::util::EXIT_VALIDATION,
            kind: "io",
            message: format!("data directory {} not found", dir.display()),
        });
    }
    let missing = |what: &str| CliError {
        code: crate::util::EXIT_VALIDATION,
        kind: "io",
        message: format!("{what} not found in {}", dir.display()),
    };
    let ti = find(dir, &["train"], "-images-idx3-ubyte").ok_or_else(|| missing("train-images-idx3-ubyte"))?;
    let tl = find(dir, &["train"], "-labels-idx1-ubyte").ok_or_else(|| missing("train-labels-idx1-ubyte"))?;
    let train = load_idx(&ti, &tl)?;
    let test = match (
        find(dir, &["test", "t10k"], "-images-idx3-ubyte"),
        find(dir, &["test", "t10k"], "-labels-idx1-ubyte"),
    ) {
        (Some(i), Some(l)) => Some(load_idx(&i, &l)?),
        _ => None,
    };
    Ok((train, test))
}

fn layer_spec(a: &TrainArgs) -> CliResult<LayerSpec> {
    if let Some(path) = &a.layer_graph {
        return Ok(LayerSpec::Graph(EinconvGraph::from_json(&strip_comments(&read_text(path)?))?));
    }
    let kind: NamedKind = a.layer.parse()?;
    Ok(LayerSpec::Named {
        kind,
        filter: a.filter,
        ranks: parse_ranks(a.ranks.as_deref())?,
    })
}

fn config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => toml::from_str::<TrainConfig>(&read_text(path)?).map_err(|e| CliError {
            code: crate::util::EXIT_VALIDATION,
            kind: "config",
            message: format!("{}: {e}", path.display()),
        })?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.optimizer {
        cfg.optimizer = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.check()?;
    Ok(cfg)
}

fn fit<T: Scalar>(
    spec: &NetworkSpec,
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    checkpoint: &Path,
) -> CliResult<Vec<EpochRecord>> {
    let out = train::<T>(spec, data, test, cfg)?;
    out.network.save(checkpoint)?;
    Ok(out.history)
}

pub fn run(a: &TrainArgs) -> CliResult<()> {
    let cfg = config(a)?;
    let (spec, data, test) = match a.net.as_str() {
        "separable" => (
            NetworkSpec::separable_pointwise(),
            separable_synthetic(200, cfg.seed),
            Some(separable_synthetic(100, cfg.seed.wrapping_add(1))),
        ),
        "lenet-mini" | "lenet_mini" => {
            let dir = a.data.as_deref().ok_or_else(|| CliError::usage("lenet-mini needs --data"))?;
            let (train, test) = load_split(dir)?;
            (NetworkSpec::lenet_mini(layer_spec(a)?), train, test)
        }
        path => {
            let spec: NetworkSpec = serde_json::from_str(&strip_comments(&read_text(Path::new(path))?))
                .map_err(|e| CliError::usage(format!("{path}: {e}")))?;
            let dir = a.data.as_deref().ok_or_else(|| CliError::usage("a network file needs --data"))?;
            let (train, test) = load_split(dir)?;
            (spec, train, test)
        }
    };
    fs::create_dir_all(&a.out)?;
    let checkpoint = a.out.join("checkpoint");
    let result = match a.precision {
        Precision::F32 => fit::<f32>(&spec, &data, test.as_ref(), &cfg, &checkpoint),
        Precision::F64 => fit::<f64>(&spec, &data, test.as_ref(), &cfg, &checkpoint),
    };
    let history = result?;
    let mut buf = format!("# {}\n", header_line()).into_bytes();
    write_history_csv(&mut buf, &history)?;
    fs::write(a.out.join("history.csv"), buf)?;
    if let Some(last) = history.last() {
        println!(
            "epoch {} loss {:.6} train_acc {:.4} test_acc {}",
            last.epoch,
            last.loss,
            last.train_acc,
            last.test_acc.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}
