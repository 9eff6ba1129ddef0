use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use ndarray::{s, Axis};
use serde_json::json;

use super::{input_bytes, CsvArgs};
use crate::error::CliResult;
use crate::io::{read_table, OutDir};
use crate::manifest::{sha256_hex, write_manifest};
use crate::preprocess::filter_clients;

#[derive(Debug, Args)]
pub struct FilterArgs {
    pub input: PathBuf,
    /// Rows to discard from the start.
    #[arg(long, default_value_t = 0)]
    pub drop_head_rows: usize,
    /// Rows to discard from the end.
    #[arg(long, default_value_t = 0)]
    pub drop_tail_rows: usize,
    /// Largest tolerated fraction of zero readings per column.
    #[arg(long, default_value_t = 1.0)]
    pub max_zero_frac: f64,
    #[command(flatten)]
    pub csv: CsvArgs,
    /// Output directory; receives `filtered.csv` and a manifest.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: FilterArgs) -> CliResult<()> {
    let started = Instant::now();
    let opts = args.csv.options()?;
    let bytes = input_bytes(&args.input)?;
    let table = read_table(&args.input, &opts)?;
    let f = filter_clients(&table.data, args.drop_head_rows, args.drop_tail_rows, args.max_zero_frac)?;
    let window = table.data.slice(s![f.row_range.0..f.row_range.1, ..]);
    let kept = window.select(Axis(1), &f.kept);
    let names: Vec<String> = f.kept.iter().map(|&c| table.names[c].clone()).collect();

    let mut out = OutDir::create(&args.out)?;
    out.write_table("filtered.csv", &names, kept.view())?;
    let config = json!({
        "input": args.input,
        "drop_head_rows": args.drop_head_rows,
        "drop_tail_rows": args.drop_tail_rows,
        "max_zero_frac": args.max_zero_frac,
        "csv": opts,
        "retained_columns": names.len(),
        "dropped_columns": table.names.len() - names.len(),
        "rows": kept.nrows(),
    });
    write_manifest(&mut out, "filter-clients", config, Some(sha256_hex(&bytes)), None, started)?;
    println!("retained {} of {} columns over {} rows", names.len(), table.names.len(), kept.nrows());
    Ok(())
}
