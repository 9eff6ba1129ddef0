use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use ndarray::{Array2, Axis};
use serde_json::json;
use vlmd::{mvmd_decompose, vlmd_decompose, InitFreqs, MvmdConfig, TimeSeriesMatrix, VlmdConfig};

use super::{input_bytes, CsvArgs};
use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::io::{read_table, OutDir};
use crate::manifest::{sha256_hex, write_manifest};
use crate::preprocess;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Vlmd,
    Mvmd,
}

impl std::str::FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Input CSV, one row per sample and one column per channel.
    pub input: PathBuf,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    /// Number of latent components L (latent solver only).
    #[arg(long)]
    pub latents: Option<usize>,
    /// Number of modes K.
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// `zeros`, `uniform`, or a comma-separated list in cycles per sample.
    #[arg(long)]
    pub init_freqs: Option<String>,
    /// Mirror-extend the signal before transforming.
    #[arg(long)]
    pub mirror: Option<bool>,
    /// Subtract each channel's mean.
    #[arg(long)]
    pub demean: bool,
    /// Standardize each channel (implies --demean).
    #[arg(long)]
    pub zscore: bool,
    /// Samples per time unit; frequencies are reported per that unit.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// `key = value` file with any of the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[arg(long)]
    pub out: PathBuf,
}

const CONFIG_KEYS: &[&str] = &[
    "solver",
    "latents",
    "modes",
    "alpha",
    "rho",
    "lambda",
    "tau",
    "tol",
    "max_iter",
    "init_freqs",
    "mirror",
    "demean",
    "zscore",
    "sample_rate",
];

pub fn parse_init_freqs(s: &str) -> CliResult<InitFreqs> {
    match s.trim().to_ascii_lowercase().as_str() {
        "zeros" | "zero" => Ok(InitFreqs::Zeros),
        "uniform" => Ok(InitFreqs::Uniform),
        other => other
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map(InitFreqs::Explicit)
            .map_err(|_| CliError::usage(format!("--init-freqs {s:?}: expected zeros, uniform or a list of numbers"))),
    }
}

enum Resolved {
    Vlmd(VlmdConfig),
    Mvmd(MvmdConfig),
}

pub fn run(args: DecomposeArgs) -> CliResult<()> {
    let started = Instant::now();
    let cfg = ConfigFile::load(args.config.as_deref(), CONFIG_KEYS)?;
    let solver = cfg.pick(args.solver, "solver")?.unwrap_or(SolverKind::Vlmd);
    let modes = cfg
        .pick(args.modes, "modes")?
        .ok_or_else(|| CliError::usage("--modes is required"))?;
    let zscore = cfg.switch(args.zscore, "zscore")?;
    let demean = zscore || cfg.switch(args.demean, "demean")?;
    let sample_rate = cfg.pick(args.sample_rate, "sample_rate")?.unwrap_or(1.0);
    let init = cfg.pick(args.init_freqs.clone(), "init_freqs")?.map(|s| parse_init_freqs(&s)).transpose()?;
    let csv_opts = args.csv.options()?;

    let bytes = input_bytes(&args.input)?;
    let table = read_table(&args.input, &csv_opts)?;
    let (t, c) = table.data.dim();

    let resolved = match solver {
        SolverKind::Vlmd => {
            let latents = cfg
                .pick(args.latents, "latents")?
                .ok_or_else(|| CliError::usage("--latents is required for the latent solver"))?;
            if latents > c {
                return Err(CliError::usage(format!("--latents {latents} exceeds the {c} input channels")));
            }
            let d = VlmdConfig::new(latents, modes);
            Resolved::Vlmd(VlmdConfig {
                alpha: cfg.pick(args.alpha, "alpha")?.unwrap_or(d.alpha),
                rho: cfg.pick(args.rho, "rho")?.unwrap_or(d.rho),
                lambda: cfg.pick(args.lambda, "lambda")?.unwrap_or(d.lambda),
                tau: cfg.pick(args.tau, "tau")?.unwrap_or(d.tau),
                tol: cfg.pick(args.tol, "tol")?.unwrap_or(d.tol),
                max_iter: cfg.pick(args.max_iter, "max_iter")?.unwrap_or(d.max_iter),
                init_freqs: init.unwrap_or(d.init_freqs.clone()),
                mirror: cfg.pick(args.mirror, "mirror")?.unwrap_or(d.mirror),
                ..d
            })
        }
        SolverKind::Mvmd => {
            if cfg.pick(args.rho, "rho")?.is_some() || cfg.pick(args.lambda, "lambda")?.is_some() {
                log::warn!("rho and lambda only apply to the latent solver; ignored");
            }
            let d = MvmdConfig::new(modes);
            Resolved::Mvmd(MvmdConfig {
                alpha: cfg.pick(args.alpha, "alpha")?.unwrap_or(d.alpha),
                tau: cfg.pick(args.tau, "tau")?.unwrap_or(d.tau),
                tol: cfg.pick(args.tol, "tol")?.unwrap_or(d.tol),
                max_iter: cfg.pick(args.max_iter, "max_iter")?.unwrap_or(d.max_iter),
                init_freqs: init.unwrap_or(d.init_freqs.clone()),
                mirror: cfg.pick(args.mirror, "mirror")?.unwrap_or(d.mirror),
                ..d
            })
        }
    };
    match &resolved {
        Resolved::Vlmd(c) => c.validate()?,
        Resolved::Mvmd(c) => c.validate()?,
    }

    let mut data = table.data;
    if zscore {
        let constant = preprocess::zscore(&mut data);
        if !constant.is_empty() {
            log::warn!("{} constant channel(s) left unscaled", constant.len());
        }
    } else if demean {
        preprocess::demean(&mut data);
    }
    let names = table.names;
    let x = TimeSeriesMatrix::new(data, sample_rate)?.with_channel_names(names.clone())?;

    let mut out = OutDir::create(&args.out)?;
    let (config_json, freqs, freqs_hz, iterations, converged) = match &resolved {
        Resolved::Vlmd(config) => {
            let r = vlmd_decompose(&x, config)?;
            write_modes(&mut out, &names, &r.intrinsic_modes)?;
            let latent_names: Vec<String> = (0..config.n_latents).map(|l| format!("latent{l}")).collect();
            out.write_table("latents.csv", &latent_names, r.latent_components.view())?;
            out.write_table("coefficients.csv", &names, r.coefficients.values())?;
            write_trace(&mut out, &r.freq_trace, &r.drift_trace)?;
            log::info!("relative primal residual {:.3e}", r.relative_primal_residual);
            (
                json!({ "solver": "vlmd", "params": config }),
                r.central_freqs,
                r.central_freqs_hz,
                r.n_iterations,
                r.converged,
            )
        }
        Resolved::Mvmd(config) => {
            let r = mvmd_decompose(&x, config)?;
            write_modes(&mut out, &names, &r.modes)?;
            write_trace(&mut out, &r.freq_trace, &r.drift_trace)?;
            (
                json!({ "solver": "mvmd", "params": config }),
                r.central_freqs,
                r.central_freqs_hz,
                r.n_iterations,
                r.converged,
            )
        }
    };
    write_frequencies(&mut out, &freqs, &freqs_hz)?;
    let config_json = json!({
        "decomposition": config_json,
        "demean": demean,
        "zscore": zscore,
        "sample_rate": sample_rate,
        "csv": csv_opts,
        "input": args.input,
        "shape": [t, c],
        "iterations": iterations,
        "converged": converged,
    });
    write_manifest(&mut out, "decompose", config_json, Some(sha256_hex(&bytes)), None, started)?;
    if !converged {
        log::warn!("stopped at the iteration cap ({iterations}) before reaching the tolerance");
    }
    println!(
        "{} modes over {c} channels, {iterations} iterations{}; outputs in {}",
        freqs.len(),
        if converged { "" } else { " (not converged)" },
        out.path().display()
    );
    Ok(())
}

fn write_modes(out: &mut OutDir, names: &[String], modes: &ndarray::Array3<f64>) -> CliResult<()> {
    for (k, mode) in modes.axis_iter(Axis(0)).enumerate() {
        out.write_table(&format!("modes_k{}.csv", k + 1), names, mode)?;
    }
    Ok(())
}

fn write_trace(out: &mut OutDir, freq_trace: &[Vec<f64>], drift: &[f64]) -> CliResult<()> {
    let k = freq_trace.first().map_or(0, Vec::len);
    let mut names = vec!["iteration".to_string(), "drift".to_string()];
    names.extend((1..=k).map(|i| format!("omega_{i}")));
    let mut table = Array2::zeros((freq_trace.len(), k + 2));
    for (i, (row, d)) in freq_trace.iter().zip(drift).enumerate() {
        table[[i, 0]] = (i + 1) as f64;
        table[[i, 1]] = *d;
        for (j, w) in row.iter().enumerate() {
            table[[i, j + 2]] = *w;
        }
    }
    out.write_table("trace.csv", &names, table.view())
}

/// Period is `1 / f` in the input's time unit; empty for a zero frequency.
fn write_frequencies(out: &mut OutDir, freqs: &[f64], freqs_hz: &[f64]) -> CliResult<()> {
    let mut s = String::from("mode,freq_hz,freq_normalized,period\n");
    for (k, (w, f)) in freqs.iter().zip(freqs_hz).enumerate() {
        let period = if *f > 0.0 { (1.0 / f).to_string() } else { String::new() };
        s.push_str(&format!("{},{f},{w},{period}\n", k + 1));
    }
    out.write("frequencies.csv", s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_freqs_forms() {
        assert_eq!(parse_init_freqs("zeros").unwrap(), InitFreqs::Zeros);
        assert_eq!(parse_init_freqs("Uniform").unwrap(), InitFreqs::Uniform);
        assert_eq!(parse_init_freqs("0.1, 0.2").unwrap(), InitFreqs::Explicit(vec![0.1, 0.2]));
        assert!(matches!(parse_init_freqs("fast"), Err(CliError::Usage(_))));
    }
}
