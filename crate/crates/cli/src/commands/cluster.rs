use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use serde_json::json;
use vlmd::analysis::{cluster_points, Linkage, Metric};

use crate::error::{CliError, CliResult};
use crate::io::{read_table, CsvOptions, OutDir};
use crate::manifest::{sha256_hex, write_manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Coefficients,
    /// One-based mode index.
    Mode(usize),
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("coefficients") {
            return Ok(Target::Coefficients);
        }
        match s.split_once(':') {
            Some((m, k)) if m.eq_ignore_ascii_case("mode") => match k.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Target::Mode(k)),
                _ => Err(format!("mode index in {s:?} must be a positive integer")),
            },
            _ => Err(format!("unknown target {s:?}; use `coefficients` or `mode:K`")),
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Coefficients => write!(f, "coefficients"),
            Target::Mode(k) => write!(f, "mode:{k}"),
        }
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Output directory of a previous `decompose` run.
    pub run: PathBuf,
    /// `coefficients` or `mode:K` (K counts from 1).
    #[arg(long, default_value = "coefficients")]
    pub target: Target,
    #[arg(long, default_value = "average")]
    pub linkage: Linkage,
    /// Defaults to euclidean for coefficients and correlation for modes.
    #[arg(long)]
    pub metric: Option<Metric>,
    /// Collapse the tree to at most this many leaves in the exports.
    #[arg(long)]
    pub max_leaves: Option<usize>,
    /// Defaults to `<run>/cluster_<target>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn artifact(run: &Path, target: Target) -> CliResult<PathBuf> {
    let (name, hint) = match target {
        Target::Coefficients => (
            "coefficients.csv".to_string(),
            "`vlmd decompose --solver vlmd` (the baseline solver has no coefficient matrix)".to_string(),
        ),
        Target::Mode(k) => (format!("modes_k{k}.csv"), format!("`vlmd decompose` with --modes {k} or more")),
    };
    let path = run.join(&name);
    if !path.is_file() {
        return Err(CliError::runtime(format!(
            "{} has no {name}; produce it with {hint}",
            run.display()
        )));
    }
    Ok(path)
}

pub fn run(args: ClusterArgs) -> CliResult<()> {
    let started = Instant::now();
    if !args.run.is_dir() {
        return Err(CliError::runtime(format!(
            "run directory {} not found; create it with `vlmd decompose --out`",
            args.run.display()
        )));
    }
    if args.max_leaves == Some(0) {
        return Err(CliError::usage("--max-leaves must be positive"));
    }
    let path = artifact(&args.run, args.target)?;
    let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let table = read_table(&path, &CsvOptions::default())?;
    if table.names.len() < 2 {
        return Err(CliError::runtime("clustering needs at least two channels"));
    }
    let metric = args.metric.unwrap_or(match args.target {
        Target::Coefficients => Metric::Euclidean,
        Target::Mode(_) => Metric::Correlation,
    });
    if metric == Metric::Correlation && table.data.nrows() < 3 {
        return Err(CliError::runtime(format!(
            "correlation needs at least 3 values per channel, {} has {}",
            path.display(),
            table.data.nrows()
        )));
    }
    // Channels are columns in both artifacts; cluster them as points.
    let dendrogram = cluster_points(table.data.t(), &table.names, metric, args.linkage)?;

    let out_dir = args.out.clone().unwrap_or_else(|| {
        let tag = args.target.to_string().replace(':', "");
        args.run.join(format!("cluster_{tag}"))
    });
    let mut out = OutDir::create(&out_dir)?;
    let export = dendrogram.export(args.max_leaves);
    let text = serde_json::to_string_pretty(&export).map_err(|e| CliError::runtime(e.to_string()))?;
    out.write("dendrogram.json", text.as_bytes())?;
    let mut newick = dendrogram.to_newick(args.max_leaves);
    newick.push('\n');
    out.write("dendrogram.newick", newick.as_bytes())?;
    let config = json!({
        "run": args.run,
        "target": args.target.to_string(),
        "linkage": args.linkage,
        "metric": metric,
        "max_leaves": args.max_leaves,
    });
    write_manifest(&mut out, "cluster", config, Some(sha256_hex(&bytes)), None, started)?;
    if !dendrogram.flagged_leaves.is_empty() {
        log::warn!("{} zero-variance channel(s) placed at distance 1", dendrogram.flagged_leaves.len());
    }
    println!(
        "{} leaves, {} merges; outputs in {}",
        dendrogram.n_leaves(),
        dendrogram.merges.len(),
        out.path().display()
    );
    Ok(())
}
