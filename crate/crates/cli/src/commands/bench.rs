use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde_json::json;
use vlmd::metrics::{benchmark_run, results_csv, summarize, summary_csv, tune, BenchPlan, ParamGrid, SolverSetup};
use vlmd::synth::{Scenario, SynthSpec};
use vlmd::{InitFreqs, MvmdConfig, VlmdConfig};

use super::decompose::SolverKind;
use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::io::OutDir;
use crate::manifest::{sha256_hex, write_manifest};

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "A")]
    pub scenarios: Vec<Scenario>,
    #[arg(long, value_delimiter = ',', default_value = "vlmd,mvmd")]
    pub solvers: Vec<SolverKind>,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub noise_grid: Vec<f64>,
    /// Datasets per scenario (structure seeds 0, 1, …).
    #[arg(long)]
    pub datasets: Option<u64>,
    /// Noise seeds per dataset.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Mode counts to request, `5:8` or `5,6,8`; defaults to the true count.
    #[arg(long)]
    pub k_sweep: Option<String>,
    /// Stopping tolerance for both solvers.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Pick parameters per scenario and noise level on held-out datasets.
    #[arg(long)]
    pub tune: bool,
    /// Held-out datasets used for tuning (structure seeds 1000, 1001, …).
    #[arg(long)]
    pub tune_datasets: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

const CONFIG_KEYS: &[&str] = &["datasets", "seeds", "tol", "max_iter", "tune_datasets"];

/// Default tolerance: one part in 1e-7 of normalized frequency is coarser
/// than the 1 Hz spacing some scenarios probe.
const BENCH_TOL: f64 = 1e-10;
const TUNING_SEED_BASE: u64 = 1000;
const ALPHAS: [f64; 5] = [1e3, 2e3, 5e3, 1e4, 3e4];

pub fn parse_k_sweep(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::usage(format!("--k-sweep {s:?}: expected `lo:hi` or a comma list"));
    let ks: Vec<usize> = if let Some((lo, hi)) = s.split_once(':') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        s.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

fn base_setup(kind: SolverKind, tol: f64, max_iter: usize) -> SolverSetup {
    match kind {
        SolverKind::Vlmd => SolverSetup::Vlmd(VlmdConfig {
            tol,
            max_iter,
            ..VlmdConfig::default()
        }),
        SolverKind::Mvmd => SolverSetup::Mvmd(MvmdConfig {
            tol,
            max_iter,
            ..MvmdConfig::default()
        }),
    }
}

fn grid(kind: SolverKind) -> ParamGrid {
    let inits = vec![InitFreqs::Zeros, InitFreqs::Uniform];
    match kind {
        SolverKind::Vlmd => ParamGrid {
            alphas: ALPHAS.to_vec(),
            rhos: vec![],
            lambdas: vec![],
            taus: vec![],
            inits,
        },
        SolverKind::Mvmd => ParamGrid {
            alphas: ALPHAS.to_vec(),
            rhos: vec![],
            lambdas: vec![],
            taus: vec![0.0, 0.5],
            inits,
        },
    }
}

pub fn run(args: BenchArgs) -> CliResult<()> {
    let started = Instant::now();
    let cfg = ConfigFile::load(args.config.as_deref(), CONFIG_KEYS)?;
    let datasets = cfg.pick(args.datasets, "datasets")?.unwrap_or(10);
    let seeds = cfg.pick(args.seeds, "seeds")?.unwrap_or(5);
    let tol = cfg.pick(args.tol, "tol")?.unwrap_or(BENCH_TOL);
    let max_iter = cfg.pick(args.max_iter, "max_iter")?.unwrap_or(VlmdConfig::default().max_iter);
    let tune_datasets = cfg.pick(args.tune_datasets, "tune_datasets")?.unwrap_or(3);
    if datasets == 0 || seeds == 0 || args.scenarios.is_empty() || args.solvers.is_empty() {
        return Err(CliError::usage("the benchmark grid is empty"));
    }
    if let Some(bad) = args.noise_grid.iter().find(|n| !(n.is_finite() && **n >= 0.0)) {
        return Err(CliError::usage(format!("noise level {bad} must be nonnegative")));
    }
    let k_values = args.k_sweep.as_deref().map(parse_k_sweep).transpose()?;
    let solvers: Vec<SolverSetup> = args.solvers.iter().map(|&k| base_setup(k, tol, max_iter)).collect();
    for s in &solvers {
        match s {
            SolverSetup::Vlmd(c) => VlmdConfig { n_latents: 1, ..c.clone() }.validate()?,
            SolverSetup::Mvmd(c) => c.validate()?,
        }
    }

    let mut rows = Vec::new();
    let mut tuned = Vec::new();
    for &noise in &args.noise_grid {
        let mut plan = BenchPlan::new(args.scenarios.clone(), solvers.clone());
        plan.dataset_ids = (0..datasets).collect();
        plan.seeds = (0..seeds).collect();
        plan.noise_grid = vec![noise];
        plan.k_values = k_values.clone();
        if args.tune {
            for &scenario in &args.scenarios {
                let specs: Vec<SynthSpec> = (0..tune_datasets)
                    .map(|d| SynthSpec::scenario(scenario).with_seeds(TUNING_SEED_BASE + d, 0).with_noise(noise))
                    .collect();
                let mut picked = Vec::new();
                for (kind, base) in args.solvers.iter().zip(&solvers) {
                    let (setup, err) = tune(&specs, base, &grid(*kind))?;
                    log::info!("tuned {} for {scenario} at noise {noise}: corr error {err:.4}", setup.name());
                    tuned.push(json!({ "scenario": scenario, "noise": noise, "setup": setup, "corr_error": err }));
                    picked.push(setup);
                }
                plan.scenario_solvers.push((scenario, picked));
            }
        }
        rows.extend(benchmark_run(&plan));
    }

    let summary = summarize(&rows);
    let mut out = OutDir::create(&args.out)?;
    out.write("results.csv", results_csv(&rows).as_bytes())?;
    let summary_text = summary_csv(&summary);
    out.write("summary.csv", summary_text.as_bytes())?;
    if args.tune {
        let text = serde_json::to_string_pretty(&tuned).map_err(|e| CliError::runtime(e.to_string()))?;
        out.write("tuned.json", text.as_bytes())?;
    }
    let config = json!({
        "scenarios": args.scenarios,
        "solvers": args.solvers,
        "noise_grid": args.noise_grid,
        "datasets": datasets,
        "seeds": seeds,
        "k_values": k_values,
        "tol": tol,
        "max_iter": max_iter,
        "tune": args.tune,
        "tune_datasets": tune_datasets,
    });
    let hash = sha256_hex(config.to_string().as_bytes());
    write_manifest(&mut out, "bench", config, Some(hash), None, started)?;
    let failures = rows.iter().filter(|r| r.failure.is_some()).count();
    print!("{summary_text}");
    if failures > 0 {
        log::warn!("{failures} of {} cells failed; see the failed column", rows.len());
    }
    Ok(())
}
