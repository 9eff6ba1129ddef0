use ndarray::{Array2, Axis};

use crate::error::{CliError, CliResult};

/// Removes each column's mean.
pub fn demean(data: &mut Array2<f64>) {
    for mut col in data.axis_iter_mut(Axis(1)) {
        let m = col.mean().unwrap_or(0.0);
        col.mapv_inplace(|v| v - m);
    }
}

/// Zero mean and unit (population) standard deviation per column. Constant
/// columns are only centred; their indices are returned.
pub fn zscore(data: &mut Array2<f64>) -> Vec<usize> {
    demean(data);
    let mut constant = Vec::new();
    for (c, mut col) in data.axis_iter_mut(Axis(1)).enumerate() {
        let sd = col.std(0.0);
        if sd > 0.0 {
            col.mapv_inplace(|v| v / sd);
        } else {
            constant.push(c);
        }
    }
    constant
}

/// Result of client filtering: kept column indices into the original table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientFilter {
    pub row_range: (usize, usize),
    pub kept: Vec<usize>,
}

/// Drops `head` leading and `tail` trailing rows, then every column whose
/// share of exact zeros exceeds `max_zero_frac`.
pub fn filter_clients(data: &Array2<f64>, head: usize, tail: usize, max_zero_frac: f64) -> CliResult<ClientFilter> {
    if !(0.0..=1.0).contains(&max_zero_frac) {
        return Err(CliError::usage(format!("--max-zero-frac {max_zero_frac} outside [0, 1]")));
    }
    let rows = data.nrows();
    if head + tail >= rows {
        return Err(CliError::ExplicitEmptyOutput(format!(
            "dropping {head} head and {tail} tail rows leaves nothing of {rows}"
        )));
    }
    let window = data.slice(ndarray::s![head..rows - tail, ..]);
    let n = window.nrows() as f64;
    let kept: Vec<usize> = window
        .axis_iter(Axis(1))
        .enumerate()
        .filter(|(_, col)| col.iter().filter(|&&v| v == 0.0).count() as f64 / n <= max_zero_frac)
        .map(|(c, _)| c)
        .collect();
    if kept.is_empty() {
        return Err(CliError::ExplicitEmptyOutput(format!(
            "every column has more than {}% zeros",
            100.0 * max_zero_frac
        )));
    }
    Ok(ClientFilter {
        row_range: (head, rows - tail),
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn demean_and_zscore() {
        let mut x = array![[1.0, 5.0], [3.0, 5.0]];
        let constant = zscore(&mut x);
        assert_eq!(x, array![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(constant, vec![1]);
        let mut y = array![[1.0], [2.0], [6.0]];
        demean(&mut y);
        assert_eq!(y, array![[-2.0], [-1.0], [3.0]]);
    }

    #[test]
    fn drops_zero_heavy_columns() {
        let x = array![[1.0, 0.0, 1.0], [2.0, 0.0, 0.0], [3.0, 0.0, 1.0], [4.0, 0.0, 1.0]];
        let f = filter_clients(&x, 0, 0, 0.5).unwrap();
        assert_eq!(f.kept, vec![0, 2]);
        assert_eq!(filter_clients(&x, 0, 0, 1.0).unwrap().kept, vec![0, 1, 2]);
        assert_eq!(filter_clients(&x, 0, 0, 0.0).unwrap().kept, vec![0]);
    }

    #[test]
    fn zero_fraction_measured_inside_window() {
        let x = array![[0.0], [0.0], [1.0], [2.0]];
        assert!(filter_clients(&x, 0, 0, 0.1).is_err());
        let f = filter_clients(&x, 2, 0, 0.0).unwrap();
        assert_eq!((f.row_range, f.kept), ((2, 4), vec![0]));
    }

    #[test]
    fn empty_results_are_errors() {
        let x = array![[0.0], [0.0]];
        assert!(matches!(filter_clients(&x, 0, 0, 0.5), Err(CliError::ExplicitEmptyOutput(_))));
        assert!(matches!(filter_clients(&x, 1, 1, 1.0), Err(CliError::ExplicitEmptyOutput(_))));
        assert!(matches!(filter_clients(&x, 0, 0, 2.0), Err(CliError::Usage(_))));
    }
}
