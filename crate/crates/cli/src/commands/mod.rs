pub mod bench;
pub mod cluster;
pub mod decompose;
pub mod filter;
pub mod synth;

use std::path::PathBuf;

use clap::Args;

use crate::io::CsvOptions;

/// Input CSV layout flags shared by commands that read user data.
#[derive(Debug, Clone, Args)]
pub struct CsvArgs {
    /// The first row holds data, not channel names.
    #[arg(long)]
    pub no_header: bool,
    /// Field delimiter, a single character.
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Number of leading columns to ignore (timestamps, ids).
    #[arg(long, default_value_t = 0)]
    pub skip_cols: usize,
    /// Values use a decimal comma; requires a non-comma delimiter.
    #[arg(long)]
    pub decimal_comma: bool,
}

impl CsvArgs {
    pub fn options(&self) -> crate::error::CliResult<CsvOptions> {
        if !self.delimiter.is_ascii() {
            return Err(crate::error::CliError::usage(format!(
                "delimiter {:?} must be a single ASCII character",
                self.delimiter
            )));
        }
        let opts = CsvOptions {
            has_header: !self.no_header,
            delimiter: self.delimiter as u8,
            skip_cols: self.skip_cols,
            decimal_comma: self.decimal_comma,
        };
        opts.validate()?;
        Ok(opts)
    }
}

pub fn input_bytes(path: &PathBuf) -> crate::error::CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| crate::error::CliError::io(path, e))
}
