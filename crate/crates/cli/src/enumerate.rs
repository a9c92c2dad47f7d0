use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use einconv_core::enumeration::{enumerate_graphs, variant_report, EnumerationConfig};
use einconv_core::graph::canonical_hash;
use einconv_core::layer::complexity;

use crate::util::{header_line, parse_extents, CliError, CliResult};

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    /// Number of spatial axes (2 or 3).
    #[arg(long)]
    dims: usize,
    /// Filter extents, e.g. 3x3.
    #[arg(long, default_value = "3x3")]
    filter: String,
    #[arg(long, default_value_t = 2)]
    max_rank_indices: usize,
    #[arg(long, default_value_t = 2)]
    rank_dim: usize,
    /// Spatial extent of the geometry attached to the output graphs.
    #[arg(long)]
    spatial: Option<usize>,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    /// Maximum number of candidate vertex sets.
    #[arg(long)]
    cap: Option<u64>,
    /// Also write variants.csv with counts under every rule interpretation.
    #[arg(long)]
    variant_report: bool,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: &EnumerateArgs) -> CliResult<()> {
    let filter = parse_extents(&a.filter)?;
    if filter.len() != a.dims {
        return Err(CliError::usage(format!("--filter {} has {} axes, --dims is {}", a.filter, filter.len(), a.dims)));
    }
    let mut cfg = EnumerationConfig::new(a.dims, filter[0], a.max_rank_indices, a.rank_dim);
    cfg.filter = filter;
    cfg.channels_in = a.channels;
    cfg.channels_out = a.channels;
    if let Some(s) = a.spatial {
        cfg.spatial = s;
    }
    if let Some(c) = a.cap {
        cfg.cap = c;
    }
    let graphs = enumerate_graphs(&cfg)?;
    let header = header_line();
    fs::create_dir_all(&a.out)?;
    let mut jsonl = fs::File::create(a.out.join("graphs.jsonl"))?;
    let mut csv = fs::File::create(a.out.join("summary.csv"))?;
    writeln!(jsonl, "# {header}")?;
    writeln!(csv, "# {header}")?;
    writeln!(csv, "canonical_hash,n_vertices,n_rank_indices,params,flops")?;
    for g in &graphs {
        writeln!(jsonl, "{}", g.to_json())?;
        let (params, flops) = complexity(g)?;
        writeln!(
            csv,
            "{},{},{},{},{}",
            canonical_hash(g),
            g.parameter_indices().len(),
            g.rank_labels().len(),
            params,
            flops
        )?;
    }
    if a.variant_report {
        let mut v = fs::File::create(a.out.join("variants.csv"))?;
        writeln!(v, "# {header}")?;
        writeln!(
            v,
            "fixed_subset,require_connected,budget_includes_c,spatial_symmetry,channel_symmetry,count_2d,count_3d"
        )?;
        for row in variant_report(a.rank_dim)? {
            let r = row.variant;
            writeln!(
                v,
                "{},{},{},{},{},{},{}",
                r.fixed_subset,
                r.require_connected,
                r.budget_includes_c,
                r.spatial_symmetry,
                r.channel_symmetry,
                row.count_2d,
                row.count_3d
            )?;
        }
    }
    println!("{}", graphs.len());
    Ok(())
}
