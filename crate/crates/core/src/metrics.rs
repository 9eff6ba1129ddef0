//! Scoring decompositions against ground truth, and the benchmark harness.
//!
//! Estimated and true intrinsic modes are paired by the Hungarian algorithm
//! on a correlation cost; the correlation error is the mean matched cost and
//! the frequency MAPE reuses the same pairing. Surplus estimates (when `K` is
//! overestimated) stay unmatched and are ignored by both scores.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayView3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvmd::{mvmd_decompose, MvmdConfig};
use crate::synth::{generate, GroundTruth, Scenario, SynthSpec};
use crate::spectral::TimeSeriesMatrix;
use crate::vlmd::{vlmd_decompose, InitFreqs, VlmdConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(estimate, truth)` pairs, sorted by estimate index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_estimates: Vec<usize>,
    pub total_cost: f64,
}

/// Rectangular assignment for `rows ≤ cols` with row and column potentials
/// (shortest augmenting paths). Returns the column of every row.
fn assign_rows(cost: ArrayView2<'_, f64>) -> Vec<usize> {
    let (n, m) = cost.dim();
    debug_assert!(n <= m);
    // 1-based bookkeeping; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = col0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        col1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Minimum-cost matching of `M` estimates (rows) to `N` truths (columns).
/// `min(M, N)` pairs are formed; leftover estimates are reported unmatched.
pub fn hungarian_match(cost: ArrayView2<'_, f64>) -> Result<Assignment> {
    let (m, n) = cost.dim();
    if m == 0 || n == 0 {
        return Err(Error::invalid("cost matrix must be non-empty"));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("non-finite cost"));
    }
    let mut pairs: Vec<(usize, usize)> = if m <= n {
        assign_rows(cost).into_iter().enumerate().collect()
    } else {
        assign_rows(cost.t())
            .into_iter()
            .enumerate()
            .map(|(truth, est)| (est, truth))
            .collect()
    };
    pairs.sort_unstable();
    let unmatched_estimates = (0..m).filter(|e| !pairs.iter().any(|p| p.0 == *e)).collect();
    let total_cost = pairs.iter().map(|&(e, t)| cost[[e, t]]).sum();
    Ok(Assignment {
        pairs,
        unmatched_estimates,
        total_cost,
    })
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationScore {
    /// Mean matched cost, in `[0, 1]`.
    pub error: f64,
    pub assignment: Assignment,
    /// Channel-averaged correlation of every (estimate, truth) pair.
    pub correlations: Array2<f64>,
}

impl CorrelationScore {
    /// Mean absolute channel-averaged correlation over matched pairs.
    pub fn mean_matched_correlation(&self) -> f64 {
        1.0 - self.error
    }
}

/// Correlation error between estimated and true intrinsic modes, both laid
/// out `K × T × C`. Cost `(i, j) = 1 − |mean_c corr(U_est[i][:, c], U_true[j][:, c])|`.
pub fn im_correlation_error(
    estimated: ArrayView3<'_, f64>,
    truth: ArrayView3<'_, f64>,
) -> Result<CorrelationScore> {
    let (ke, te, ce) = estimated.dim();
    let (kt, tt, ct) = truth.dim();
    if te != tt || ce != ct {
        return Err(Error::dim(format!(
            "estimated modes are {te}×{ce}, truth {tt}×{ct}"
        )));
    }
    if te < 3 {
        return Err(Error::invalid(format!("need at least 3 samples, got {te}")));
    }
    if ke == 0 || kt == 0 {
        return Err(Error::invalid("no modes to compare"));
    }
    let mut correlations = Array2::zeros((ke, kt));
    for i in 0..ke {
        let ui = estimated.index_axis(Axis(0), i);
        for j in 0..kt {
            let uj = truth.index_axis(Axis(0), j);
            let mean: f64 = (0..ce)
                .map(|c| pearson(ui.column(c), uj.column(c)))
                .sum::<f64>()
                / ce as f64;
            correlations[[i, j]] = mean;
        }
    }
    let cost = correlations.mapv(|r: f64| 1.0 - r.abs());
    let assignment = hungarian_match(cost.view())?;
    let error = assignment.total_cost / assignment.pairs.len() as f64;
    Ok(CorrelationScore {
        error,
        assignment,
        correlations,
    })
}

/// `100 · mean |f_est − f_true| / f_true` over the matched pairs.
pub fn freq_mape(estimated: &[f64], truth: &[f64], assignment: &Assignment) -> Result<f64> {
    if assignment.pairs.is_empty() {
        return Err(Error::invalid("assignment has no pairs"));
    }
    let mut total = 0.0;
    for &(e, t) in &assignment.pairs {
        let (fe, ft) = match (estimated.get(e), truth.get(t)) {
            (Some(&fe), Some(&ft)) => (fe, ft),
            _ => return Err(Error::dim(format!("pair ({e}, {t}) out of range"))),
        };
        if ft == 0.0 {
            return Err(Error::invalid("true frequency of zero"));
        }
        total += (fe - ft).abs() / ft.abs();
    }
    Ok(100.0 * total / assignment.pairs.len() as f64)
}

/// A solver and its parameters as used in a benchmark. `n_modes` is
/// overridden per cell; for the latent solver `n_latents` is set to the
/// scenario's true latent count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SolverSetup {
    Vlmd(VlmdConfig),
    Mvmd(MvmdConfig),
}

impl SolverSetup {
    pub fn name(&self) -> &'static str {
        match self {
            SolverSetup::Vlmd(_) => "vlmd",
            SolverSetup::Mvmd(_) => "mvmd",
        }
    }

    fn with_shape(&self, n_modes: usize, n_latents: usize) -> Self {
        match self {
            SolverSetup::Vlmd(c) => SolverSetup::Vlmd(VlmdConfig {
                n_modes,
                n_latents,
                ..c.clone()
            }),
            SolverSetup::Mvmd(c) => SolverSetup::Mvmd(MvmdConfig { n_modes, ..c.clone() }),
        }
    }
}

/// Estimated intrinsic modes and frequencies of one solver run.
#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub modes: ndarray::Array3<f64>,
    pub freqs_hz: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn run_solver(x: &TimeSeriesMatrix, setup: &SolverSetup) -> Result<SolverOutput> {
    match setup {
        SolverSetup::Vlmd(cfg) => {
            let r = vlmd_decompose(x, cfg)?;
            Ok(SolverOutput {
                modes: r.intrinsic_modes,
                freqs_hz: r.central_freqs_hz,
                iterations: r.n_iterations,
                converged: r.converged,
            })
        }
        SolverSetup::Mvmd(cfg) => {
            let r = mvmd_decompose(x, cfg)?;
            Ok(SolverOutput {
                modes: r.modes,
                freqs_hz: r.central_freqs_hz,
                iterations: r.n_iterations,
                converged: r.converged,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub corr_error: f64,
    pub freq_mape: f64,
}

pub fn score(output: &SolverOutput, truth: &GroundTruth) -> Result<Score> {
    let corr = im_correlation_error(output.modes.view(), truth.intrinsic_modes.view())?;
    let mape = freq_mape(&output.freqs_hz, &truth.freqs_hz, &corr.assignment)?;
    Ok(Score {
        corr_error: corr.error,
        freq_mape: mape,
    })
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: Scenario,
    pub dataset_id: u64,
    pub seed: u64,
    pub noise: f64,
    pub solver: String,
    pub k: usize,
    pub corr_error: f64,
    pub freq_mape: f64,
    pub wall_ms: f64,
    pub iters: usize,
    pub converged: bool,
    /// Error message when the solver or scoring failed.
    pub failure: Option<String>,
}

pub const RESULTS_HEADER: &str =
    "scenario,dataset_id,seed,noise,solver,K,corr_error,freq_mape,wall_ms,iters,converged,failed";

impl BenchRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3},{},{},{}",
            self.scenario,
            self.dataset_id,
            self.seed,
            self.noise,
            self.solver,
            self.k,
            self.corr_error,
            self.freq_mape,
            self.wall_ms,
            self.iters,
            self.converged,
            self.failure.is_some()
        )
    }
}

/// Results table as CSV text.
pub fn results_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}

/// Grid of benchmark cells: every scenario × dataset × noise × seed × solver
/// × K. Structure is seeded by the dataset id, noise by the seed.
#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub scenarios: Vec<Scenario>,
    pub dataset_ids: Vec<u64>,
    pub noise_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub solvers: Vec<SolverSetup>,
    /// Number of modes to request; `None` uses each scenario's true count.
    pub k_values: Option<Vec<usize>>,
    /// Per-scenario overrides of `solvers` (e.g. tuned parameters).
    pub scenario_solvers: Vec<(Scenario, Vec<SolverSetup>)>,
    /// Base spec per scenario; defaults to [`SynthSpec::scenario`].
    pub base_specs: Vec<(Scenario, SynthSpec)>,
}

impl BenchPlan {
    pub fn new(scenarios: Vec<Scenario>, solvers: Vec<SolverSetup>) -> Self {
        Self {
            scenarios,
            dataset_ids: vec![0],
            noise_grid: vec![0.01],
            seeds: vec![0],
            solvers,
            k_values: None,
            scenario_solvers: Vec::new(),
            base_specs: Vec::new(),
        }
    }

    fn base_spec(&self, scenario: Scenario) -> SynthSpec {
        self.base_specs
            .iter()
            .find(|(s, _)| *s == scenario)
            .map(|(_, spec)| spec.clone())
            .unwrap_or_else(|| SynthSpec::scenario(scenario))
    }

    fn solvers_for(&self, scenario: Scenario) -> &[SolverSetup] {
        self.scenario_solvers
            .iter()
            .find(|(s, _)| *s == scenario)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&self.solvers)
    }
}

#[derive(Debug, Clone)]
struct Cell {
    scenario: Scenario,
    spec: SynthSpec,
    solver: SolverSetup,
    k: usize,
}

fn run_cell(cell: &Cell) -> BenchRow {
    let mut row = BenchRow {
        scenario: cell.scenario,
        dataset_id: cell.spec.seed,
        seed: cell.spec.noise_seed,
        noise: cell.spec.noise_sigma,
        solver: cell.solver.name().to_string(),
        k: cell.k,
        corr_error: f64::NAN,
        freq_mape: f64::NAN,
        wall_ms: 0.0,
        iters: 0,
        converged: false,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let (x, truth) = generate(&cell.spec)?;
        let setup = cell.solver.with_shape(cell.k, cell.spec.n_latents);
        let start = Instant::now();
        let out = run_solver(&x, &setup)?;
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        row.iters = out.iterations;
        row.converged = out.converged;
        let s = score(&out, &truth)?;
        row.corr_error = s.corr_error;
        row.freq_mape = s.freq_mape;
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("benchmark cell {} / {} failed: {e}", cell.scenario, cell.solver.name());
        row.failure = Some(e.to_string());
    }
    row
}

/// Runs every cell of the plan, in parallel, returning rows in plan order.
pub fn benchmark_run(plan: &BenchPlan) -> Vec<BenchRow> {
    let mut cells = Vec::new();
    for &scenario in &plan.scenarios {
        let base = plan.base_spec(scenario);
        let ks = plan.k_values.clone().unwrap_or_else(|| vec![base.n_modes()]);
        for &dataset in &plan.dataset_ids {
            for &noise in &plan.noise_grid {
                for &seed in &plan.seeds {
                    for &k in &ks {
                        for solver in plan.solvers_for(scenario) {
                            cells.push(Cell {
                                scenario,
                                spec: base.clone().with_seeds(dataset, seed).with_noise(noise),
                                solver: solver.clone(),
                                k,
                            });
                        }
                    }
                }
            }
        }
    }
    cells.par_iter().map(run_cell).collect()
}

/// Mean scores per (scenario, noise, solver, K).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub noise: f64,
    pub solver: String,
    pub k: usize,
    pub runs: usize,
    pub failures: usize,
    pub mean_corr_error: f64,
    pub mean_freq_mape: f64,
    pub mean_wall_ms: f64,
    pub mean_iters: f64,
}

pub const SUMMARY_HEADER: &str =
    "scenario,noise,solver,K,runs,failures,mean_corr_error,mean_freq_mape,mean_wall_ms,mean_iters";

pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for r in rows {
        let idx = out.iter().position(|s| {
            s.scenario == r.scenario && s.noise == r.noise && s.solver == r.solver && s.k == r.k
        });
        let idx = match idx {
            Some(i) => i,
            None => {
                out.push(SummaryRow {
                    scenario: r.scenario,
                    noise: r.noise,
                    solver: r.solver.clone(),
                    k: r.k,
                    runs: 0,
                    failures: 0,
                    mean_corr_error: 0.0,
                    mean_freq_mape: 0.0,
                    mean_wall_ms: 0.0,
                    mean_iters: 0.0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        if r.failure.is_some() {
            s.failures += 1;
            continue;
        }
        s.runs += 1;
        s.mean_corr_error += r.corr_error;
        s.mean_freq_mape += r.freq_mape;
        s.mean_wall_ms += r.wall_ms;
        s.mean_iters += r.iters as f64;
    }
    for s in &mut out {
        let n = s.runs.max(1) as f64;
        s.mean_corr_error /= n;
        s.mean_freq_mape /= n;
        s.mean_wall_ms /= n;
        s.mean_iters /= n;
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.3},{}",
            r.scenario,
            r.noise,
            r.solver,
            r.k,
            r.runs,
            r.failures,
            r.mean_corr_error,
            r.mean_freq_mape,
            r.mean_wall_ms,
            r.mean_iters
        );
    }
    s
}

/// Candidate values for the parameter search; an empty list keeps the
/// base setup's value.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub alphas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub taus: Vec<f64>,
    pub inits: Vec<InitFreqs>,
}

impl ParamGrid {
    fn candidates(&self, base: &SolverSetup) -> Vec<SolverSetup> {
        fn or<T: Clone>(v: &[T], d: &T) -> Vec<T> {
            if v.is_empty() {
                vec![d.clone()]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        match base {
            SolverSetup::Vlmd(c) => {
                for init_freqs in or(&self.inits, &c.init_freqs) {
                    for &alpha in &or(&self.alphas, &c.alpha) {
                        for &rho in &or(&self.rhos, &c.rho) {
                            for &lambda in &or(&self.lambdas, &c.lambda) {
                                for &tau in &or(&self.taus, &c.tau) {
                                    out.push(SolverSetup::Vlmd(VlmdConfig {
                                        alpha,
                                        rho,
                                        lambda,
                                        tau,
                                        init_freqs: init_freqs.clone(),
                                        ..c.clone()
                                    }));
                                }
                            }
                        }
                    }
                }
            }
            SolverSetup::Mvmd(c) => {
                for init_freqs in or(&self.inits, &c.init_freqs) {
                    for &alpha in &or(&self.alphas, &c.alpha) {
                        for &tau in &or(&self.taus, &c.tau) {
                            out.push(SolverSetup::Mvmd(MvmdConfig {
                                alpha,
                                tau,
                                init_freqs: init_freqs.clone(),
                                ..c.clone()
                            }));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Picks the grid point with the lowest mean correlation error over the
/// given tuning datasets. Candidates are evaluated in parallel; ties keep the
/// earlier grid point.
pub fn tune(specs: &[SynthSpec], base: &SolverSetup, grid: &ParamGrid) -> Result<(SolverSetup, f64)> {
    if specs.is_empty() {
        return Err(Error::invalid("no tuning datasets"));
    }
    let data: Vec<(TimeSeriesMatrix, GroundTruth)> =
        specs.iter().map(generate).collect::<Result<_>>()?;
    let candidates = grid.candidates(base);
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|cand| {
            let mut total = 0.0;
            for ((x, truth), spec) in data.iter().zip(specs) {
                let setup = cand.with_shape(spec.n_modes(), spec.n_latents);
                match run_solver(x, &setup).and_then(|o| score(&o, truth)) {
                    Ok(s) => total += s.corr_error,
                    Err(_) => return f64::INFINITY,
                }
            }
            total / data.len() as f64
        })
        .collect();
    let (best, &err) = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::invalid("empty parameter grid"))?;
    Ok((candidates[best].clone(), err))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over injections of the smaller side into the larger.
    fn brute_force(cost: &Array2<f64>) -> f64 {
        fn rec(cost: &Array2<f64>, transpose: bool, i: usize, used: &mut Vec<bool>, picked: &mut Vec<(usize, usize)>, best: &mut f64) {
            let (n, m) = if transpose { (cost.ncols(), cost.nrows()) } else { cost.dim() };
            if i == n {
                let mut pairs = picked.clone();
                pairs.sort_unstable();
                let total: f64 = pairs.iter().map(|&(e, t)| cost[[e, t]]).sum();
                if total < *best {
                    *best = total;
                }
                return;
            }
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    picked.push(if transpose { (j, i) } else { (i, j) });
                    rec(cost, transpose, i + 1, used, picked, best);
                    picked.pop();
                    used[j] = false;
                }
            }
        }
        let transpose = cost.nrows() > cost.ncols();
        let m = cost.nrows().max(cost.ncols());
        let mut best = f64::INFINITY;
        rec(cost, transpose, 0, &mut vec![false; m], &mut Vec::new(), &mut best);
        best
    }

    fn random_cost(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((m, n), |_| rng.random_range(0.0..10.0))
    }

    #[test]
    fn identity_favoring_cost() {
        let cost = array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]];
        let a = hungarian_match(cost.view()).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(a.total_cost, 0.0);
        let one = hungarian_match(array![[3.5]].view()).unwrap();
        assert_eq!(one.pairs, vec![(0, 0)]);
        assert_eq!(one.total_cost, 3.5);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for &(m, n) in &[(5, 5), (6, 5), (5, 6), (4, 6), (6, 3), (1, 4), (3, 1)] {
            for _ in 0..20 {
                let cost = random_cost(m, n, &mut rng);
                let a = hungarian_match(cost.view()).unwrap();
                assert_eq!(a.total_cost, brute_force(&cost), "{m}x{n}");
                assert_eq!(a.pairs.len(), m.min(n));
                assert_eq!(a.unmatched_estimates.len(), m.saturating_sub(n));
            }
        }
    }

    fn modes(k: usize, t: usize, c: usize, rng: &mut ChaCha8Rng) -> Array3<f64> {
        Array3::from_shape_fn((k, t, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn correlation_error_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = modes(3, 200, 4, &mut rng);
        let same = im_correlation_error(truth.view(), truth.view()).unwrap();
        assert!(same.error.abs() < 1e-12);
        let flipped = truth.mapv(|v| -v);
        assert!(im_correlation_error(flipped.view(), truth.view()).unwrap().error.abs() < 1e-12);

        // Replace one mode by independent noise; the oracle is the direct
        // per-channel correlation of that one pair.
        let mut est = truth.clone();
        let noise = modes(1, 200, 4, &mut rng);
        est.index_axis_mut(Axis(0), 2).assign(&noise.index_axis(Axis(0), 0));
        let score = im_correlation_error(est.view(), truth.view()).unwrap();
        let r_noise: f64 = (0..4)
            .map(|c| {
                let a = est.index_axis(Axis(0), 2).column(c).to_vec();
                let b = truth.index_axis(Axis(0), 2).column(c).to_vec();
                let ma = a.iter().sum::<f64>() / 200.0;
                let mb = b.iter().sum::<f64>() / 200.0;
                let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
                let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
                let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
                cov / (va * vb).sqrt()
            })
            .sum::<f64>()
            / 4.0;
        let expected = (1.0 - r_noise.abs()) / 3.0;
        assert!((score.error - expected).abs() < 1e-12, "{} vs {expected}", score.error);
    }

    #[test]
    fn correlation_error_guards() {
        let a = Array3::<f64>::zeros((2, 2, 3));
        assert!(matches!(im_correlation_error(a.view(), a.view()), Err(Error::InvalidInput(_))));
        let b = Array3::<f64>::zeros((2, 5, 3));
        let c = Array3::<f64>::zeros((2, 5, 2));
        assert!(matches!(im_correlation_error(b.view(), c.view()), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_variance_channel_counts_as_uncorrelated() {
        let a = array![1.0, 1.0, 1.0];
        let b = array![1.0, 2.0, 3.0];
        assert_eq!(pearson(a.view(), b.view()), 0.0);
    }

    #[test]
    fn mape_examples() {
        let a = Assignment {
            pairs: vec![(0, 0)],
            unmatched_estimates: vec![],
            total_cost: 0.0,
        };
        assert!((freq_mape(&[110.0], &[100.0], &a).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(freq_mape(&[100.0], &[100.0], &a).unwrap(), 0.0);
        let two = Assignment {
            pairs: vec![(0, 1), (1, 0)],
            unmatched_estimates: vec![],
            total_cost: 0.0,
        };
        assert!((freq_mape(&[49.0, 5.1], &[5.0, 50.0], &two).unwrap() - 2.0).abs() < 1e-12);
        assert!(freq_mape(&[1.0], &[0.0], &a).is_err());
    }

    #[test]
    fn single_cell_table() {
        let mut plan = BenchPlan::new(vec![Scenario::A], vec![SolverSetup::Mvmd(MvmdConfig::default())]);
        plan.noise_grid = vec![0.0];
        plan.base_specs = vec![(Scenario::A, SynthSpec { duration_s: 0.512, ..SynthSpec::scenario(Scenario::A) })];
        let rows = benchmark_run(&plan);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].failure.is_none());
        assert!(results_csv(&rows).starts_with(RESULTS_HEADER));
        assert_eq!(summarize(&rows).len(), 1);
    }

    #[test]
    fn failures_become_rows() {
        // Asking for more latents than channels fails inside the cell.
        let spec = SynthSpec {
            n_channels: 2,
            n_latents: 2,
            duration_s: 0.1,
            ..SynthSpec::scenario(Scenario::A)
        };
        let mut plan = BenchPlan::new(vec![Scenario::A], vec![SolverSetup::Vlmd(VlmdConfig::default())]);
        plan.base_specs = vec![(Scenario::A, spec)];
        plan.k_values = Some(vec![80]);
        let rows = benchmark_run(&plan);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].failure.is_some());
        assert!(rows[0].to_csv_line().ends_with("true"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn hungarian_is_optimal(m in 1usize..7, n in 1usize..7, seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let cost = random_cost(m, n, &mut rng);
                let a = hungarian_match(cost.view()).unwrap();
                prop_assert_eq!(a.total_cost, brute_force(&cost));
            }

            #[test]
            fn correlation_error_invariances(seed in any::<u64>(), flip in prop::collection::vec(any::<bool>(), 3)) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let truth = modes(3, 50, 2, &mut rng);
                let est = modes(3, 50, 2, &mut rng);
                let base = im_correlation_error(est.view(), truth.view()).unwrap().error;
                let mut changed = est.clone();
                for (k, &f) in flip.iter().enumerate() {
                    if f {
                        changed.index_axis_mut(Axis(0), k).mapv_inplace(|v| -v);
                    }
                }
                let perm = [2usize, 0, 1];
                let permuted = Array3::from_shape_fn(changed.dim(), |(k, t, c)| changed[[perm[k], t, c]]);
                let e = im_correlation_error(permuted.view(), truth.view()).unwrap().error;
                prop_assert!((e - base).abs() < 1e-12);
            }

            #[test]
            fn mape_scale_invariant(s in 0.01f64..100.0, est in prop::collection::vec(1.0f64..100.0, 3), truth in prop::collection::vec(1.0f64..100.0, 3)) {
                let a = Assignment { pairs: vec![(0, 2), (1, 0), (2, 1)], unmatched_estimates: vec![], total_cost: 0.0 };
                let base = freq_mape(&est, &truth, &a).unwrap();
                let es: Vec<f64> = est.iter().map(|v| v * s).collect();
                let ts: Vec<f64> = truth.iter().map(|v| v * s).collect();
                let scaled = freq_mape(&es, &ts, &a).unwrap();
                prop_assert!((scaled - base).abs() <= 1e-9 * base.max(1.0));
            }
        }
    }
}
