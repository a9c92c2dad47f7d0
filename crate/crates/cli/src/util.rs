use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use einconv_core::error::EinconvError;
use einconv_core::graph::{make_named, ConvGeometry, EinconvGraph, NamedKind};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn json(&self) -> String {
        serde_json::json!({"error": self.kind, "message": self.message, "exit_code": self.code}).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<EinconvError> for CliError {
    fn from(e: EinconvError) -> Self {
        let (code, kind) = match &e {
            EinconvError::Overflow { .. } => (EXIT_CAP, "cap_exceeded"),
            EinconvError::Divergence { .. } => (EXIT_DIVERGENCE, "divergence"),
            EinconvError::Io(_) => (EXIT_VALIDATION, "io"),
            EinconvError::Parse(_) => (EXIT_VALIDATION, "parse"),
            EinconvError::Config(_) => (EXIT_VALIDATION, "config"),
            _ => (EXIT_VALIDATION, "validation"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        EinconvError::from(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// `# einconv <version> <args>`, written at the top of every output file.
pub fn header_line() -> String {
    let args: Vec<String> = std::env::args().skip(1).collect();
    format!("einconv {} {}", env!("CARGO_PKG_VERSION"), args.join(" "))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError {
        code: EXIT_VALIDATION,
        kind: "io",
        message: format!("{}: {e}", path.display()),
    })
}

/// Drops `#` header lines so written files can be read back.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

/// `3x3` or `3x3x3`.
pub fn parse_extents(s: &str) -> CliResult<Vec<usize>> {
    s.split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::usage(format!("expected extents like 3x3, got `{s}`")))
}

/// `HxW,IxJ,C,C'[,P[,S]]`; padding defaults to (I-1)/2 and stride to 1.
pub fn parse_geometry(s: &str) -> CliResult<ConvGeometry> {
    let parts: Vec<&str> = s.split(',').collect();
    if !(4..=6).contains(&parts.len()) {
        return Err(CliError::usage(format!("geometry `{s}`: expected HxW,IxJ,C,C'[,P[,S]]")));
    }
    let num = |p: &str| {
        p.trim()
            .parse::<usize>()
            .map_err(|_| CliError::usage(format!("geometry `{s}`: bad number `{p}`")))
    };
    let mut g = ConvGeometry::same(&parse_extents(parts[0])?, &parse_extents(parts[1])?, num(parts[2])?, num(parts[3])?);
    if let Some(p) = parts.get(4) {
        g.padding = num(p)?;
    }
    if let Some(p) = parts.get(5) {
        g.stride = num(p)?;
    }
    g.check()?;
    Ok(g)
}

/// `R=4,A=2`.
pub fn parse_ranks(s: Option<&str>) -> CliResult<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    let Some(s) = s else { return Ok(out) };
    for item in s.split(',').filter(|x| !x.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("rank `{item}`: expected KEY=DIM")))?;
        let v = v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("rank `{item}`: bad dim")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

/// Graph from a JSON file or a named kind, optionally refitted to `geometry`.
pub fn load_graph(
    graph: Option<&Path>,
    named: Option<&str>,
    ranks: Option<&str>,
    geometry: Option<&str>,
) -> CliResult<EinconvGraph> {
    let geom = geometry.map(parse_geometry).transpose()?;
    match (graph, named) {
        (Some(path), None) => {
            let g = EinconvGraph::from_json(&strip_comments(&read_text(path)?))?;
            Ok(match geom {
                Some(geom) => g.with_geometry(&geom)?,
                None => g,
            })
        }
        (None, Some(kind)) => {
            let kind: NamedKind = kind.parse()?;
            let geom = geom.ok_or_else(|| CliError::usage("--named needs --geometry"))?;
            Ok(make_named(kind, &geom, &parse_ranks(ranks)?)?)
        }
        _ => Err(CliError::usage("give exactly one of --graph and --named")),
    }
}
