//! CSV tables and crash-safe file writes.
//!
//! Tables are one row per time sample and one column per channel, with an
//! optional header of channel names. Numbers are written with Rust's
//! shortest round-trip formatting, so reading a written file back is exact.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CsvOptions {
    pub has_header: bool,
    #[serde(serialize_with = "delimiter_as_char")]
    pub delimiter: u8,
    /// Leading columns to ignore, e.g. timestamps.
    pub skip_cols: usize,
    /// Fields use `,` as the decimal mark.
    pub decimal_comma: bool,
}

fn delimiter_as_char<S: serde::Serializer>(d: &u8, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_char(*d as char)
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            delimiter: b',',
            skip_cols: 0,
            decimal_comma: false,
        }
    }
}

impl CsvOptions {
    pub fn validate(&self) -> CliResult<()> {
        if self.decimal_comma && self.delimiter == b',' {
            return Err(CliError::usage(
                "--decimal-comma needs a delimiter other than ',' (e.g. --delimiter ';')",
            ));
        }
        Ok(())
    }
}

/// Named numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    /// `rows × columns`.
    pub data: Array2<f64>,
}

pub fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("ch{i}")).collect()
}

pub fn read_table(path: &Path, opts: &CsvOptions) -> CliResult<Table> {
    opts.validate()?;
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, msg: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut names: Option<Vec<String>> = None;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() <= opts.skip_cols {
            return Err(parse_err(
                line,
                format!("{} field(s), nothing left after skipping {}", record.len(), opts.skip_cols),
            ));
        }
        let fields: Vec<&str> = record.iter().skip(opts.skip_cols).collect();
        if opts.has_header && names.is_none() {
            names = Some(fields.iter().map(|s| s.to_string()).collect());
            width = Some(fields.len());
            continue;
        }
        match width {
            Some(w) if w != fields.len() => {
                return Err(parse_err(line, format!("expected {w} values, found {}", fields.len())))
            }
            None => width = Some(fields.len()),
            _ => {}
        }
        for (col, field) in fields.iter().enumerate() {
            let text = if opts.decimal_comma {
                field.replace(',', ".")
            } else {
                field.to_string()
            };
            let v: f64 = text
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: not a number: {field:?}", col + opts.skip_cols + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: non-finite value {field:?}", col + opts.skip_cols + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_err(1, "no data".into()))?;
    if rows == 0 {
        return Err(parse_err(1, "header only, no data rows".into()));
    }
    let data = Array2::from_shape_vec((rows, width), values).expect("row widths checked");
    Ok(Table {
        names: names.unwrap_or_else(|| default_names(width)),
        data,
    })
}

/// CSV bytes for a matrix with a header row.
pub fn table_bytes(names: &[String], data: ArrayView2<'_, f64>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::runtime(format!("csv encoding: {e}"));
    w.write_record(names).map_err(fail)?;
    for row in data.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::runtime(format!("csv encoding: {e}")))
}

/// Writes to a hidden sibling first and renames into place, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::runtime(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

/// Output directory collecting the written file names for the manifest.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.root.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, names: &[String], data: ArrayView2<'_, f64>) -> CliResult<()> {
        let bytes = table_bytes(names, data)?;
        self.write(name, &bytes)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write_tmp(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("in.csv");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn reads_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "a,b\n1,2\n3.5,-4e-3\n");
        let t = read_table(&p, &CsvOptions::default()).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.data, array![[1.0, 2.0], [3.5, -4e-3]]);
    }

    #[test]
    fn skip_cols_and_decimal_comma() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "date;x;y\n2020-01-01;1,5;2\n2020-01-02;0,25;3\n");
        let opts = CsvOptions {
            delimiter: b';',
            skip_cols: 1,
            decimal_comma: true,
            ..CsvOptions::default()
        };
        let t = read_table(&p, &opts).unwrap();
        assert_eq!(t.names, vec!["x", "y"]);
        assert_eq!(t.data, array![[1.5, 2.0], [0.25, 3.0]]);
    }

    #[test]
    fn no_header_gets_default_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "1,2,3\n");
        let opts = CsvOptions {
            has_header: false,
            ..CsvOptions::default()
        };
        let t = read_table(&p, &opts).unwrap();
        assert_eq!(t.names, vec!["ch0", "ch1", "ch2"]);
    }

    #[test]
    fn bad_number_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "a,b\n1,2\n3,oops\n");
        match read_table(&p, &CsvOptions::default()) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "a,b\n1,2\n3\n");
        assert!(matches!(
            read_table(&p, &CsvOptions::default()),
            Err(CliError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn decimal_comma_with_comma_delimiter_is_usage_error() {
        let opts = CsvOptions {
            decimal_comma: true,
            ..CsvOptions::default()
        };
        assert!(matches!(opts.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = array![[0.1 + 0.2, -1.0 / 3.0], [1e-300, 123456789.123456789]];
        let names = vec!["x".to_string(), "y".to_string()];
        let p = dir.path().join("t.csv");
        write_atomic(&p, &table_bytes(&names, data.view()).unwrap()).unwrap();
        let t = read_table(&p, &CsvOptions::default()).unwrap();
        assert_eq!(t.data, data);
        assert_eq!(t.names, names);
        assert!(!dir.path().join(".t.csv.tmp").exists());
    }
}
