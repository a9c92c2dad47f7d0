use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use einconv_core::search::{pareto_front, Objectives};
use serde::Deserialize;

use crate::util::{header_line, read_text, CliError, CliResult};

#[derive(Args, Debug)]
pub struct ParetoArgs {
    /// Archive CSV with at least `params` and `accuracy` columns.
    #[arg(long)]
    archive: PathBuf,
    /// Directory for pareto.csv and pareto.tsv; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct Row {
    params: u64,
    accuracy: f64,
}

/// Header and records of a `#`-commented CSV, records kept verbatim.
fn read_archive(path: &Path) -> CliResult<(Vec<String>, Vec<csv::StringRecord>, Vec<Objectives>)> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |e: csv::Error| CliError {
        code: crate::util::EXIT_VALIDATION,
        kind: "parse",
        message: format!("{}: {e}", path.display()),
    };
    let headers = rdr.headers().map_err(bad)?.clone();
    let mut records = Vec::new();
    let mut objs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        let row: Row = rec.deserialize(Some(&headers)).map_err(bad)?;
        objs.push(Objectives::new(row.accuracy, row.params));
        records.push(rec);
    }
    Ok((headers.iter().map(String::from).collect(), records, objs))
}

pub fn run(a: &ParetoArgs) -> CliResult<()> {
    let (headers, records, objs) = read_archive(&a.archive)?;
    let mut front = pareto_front(&objs);
    front.sort_by_key(|&k| (objs[k].params, k));
    let header = format!("# {}\n", header_line());
    let mut csv_text = header.clone();
    if !headers.is_empty() {
        csv_text.push_str(&headers.join(","));
        csv_text.push('\n');
    }
    for &k in &front {
        csv_text.push_str(&records[k].iter().collect::<Vec<_>>().join(","));
        csv_text.push('\n');
    }
    let mut tsv = header;
    tsv.push_str("# params\taccuracy\n");
    for &k in &front {
        tsv.push_str(&format!("{}\t{}\n", objs[k].params, objs[k].accuracy));
    }
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("pareto.csv"), csv_text)?;
            fs::write(dir.join("pareto.tsv"), tsv)?;
            println!("{}", front.len());
        }
        None => print!("{csv_text}"),
    }
    Ok(())
}
