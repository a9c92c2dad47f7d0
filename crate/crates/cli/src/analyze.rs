use std::fs;
use std::path::PathBuf;

use clap::Args;
use einconv_core::graph::{canonical_hash, validate};
use einconv_core::layer::complexity;
use einconv_core::reduction::reduce;

use crate::util::{header_line, load_graph, CliError, CliResult};

#[derive(Args, Debug)]
pub struct GraphArgs {
    /// Graph JSON file.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Named layer instead of a file, e.g. cp or bottleneck.
    #[arg(long)]
    named: Option<String>,
    /// Rank dims for --named, e.g. Gamma=8 or A=4,B=4.
    #[arg(long)]
    ranks: Option<String>,
    /// HxW,IxJ,C,C'[,P[,S]]
    #[arg(long)]
    geometry: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Where to write the reduced graph JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(a: &GraphArgs) -> CliResult<einconv_core::graph::EinconvGraph> {
    let g = load_graph(a.graph.as_deref(), a.named.as_deref(), a.ranks.as_deref(), a.geometry.as_deref())?;
    let v = validate(&g);
    if !v.is_ok() {
        let msg: Vec<String> = v.violations.iter().map(|x| x.to_string()).collect();
        return Err(CliError {
            code: crate::util::EXIT_VALIDATION,
            kind: "invalid_graph",
            message: msg.join("; "),
        });
    }
    Ok(g)
}

pub fn analyze(a: &GraphArgs) -> CliResult<()> {
    let g = load(a)?;
    let (params, flops) = complexity(&g)?;
    println!("params\t{params}");
    println!("flops\t{flops}");
    println!("canonical_hash\t{}", canonical_hash(&g));
    let trace = reduce(&g);
    if trace.steps.is_empty() {
        println!("redundant\tfalse");
    } else {
        println!("redundant\ttrue");
        for s in &trace.steps {
            println!("step\t{}", serde_json::to_string(s).expect("trace step serializes"));
        }
        println!("reduced_hash\t{}", canonical_hash(&trace.result));
    }
    Ok(())
}

pub fn reduce_cmd(a: &ReduceArgs) -> CliResult<()> {
    let g = load(&a.graph)?;
    let trace = reduce(&g);
    for s in &trace.steps {
        println!("{}", serde_json::to_string(s).expect("trace step serializes"));
    }
    match &a.out {
        Some(path) => fs::write(path, format!("# {}\n{}\n", header_line(), trace.result.to_json()))?,
        None => println!("{}", trace.result.to_json()),
    }
    Ok(())
}
