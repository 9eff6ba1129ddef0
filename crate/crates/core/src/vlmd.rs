//! Variational latent mode decomposition.
//!
//! Each outer iteration runs five stages in a fixed order:
//!
//! 1. sparse coding of `X` on the time-domain latents `Z`, then column
//!    rescaling so that `|a_ij| ≤ 1`;
//! 2. a Gauss-Seidel sweep over the latent components `ẑ_l`;
//! 3. a Gauss-Seidel sweep over the latent modes `θ̂_l^(k)` (modes outer,
//!    latents inner), each mode followed by its central-frequency update;
//! 4. (folded into 3) spectral-centroid update of `ω_k`;
//! 5. dual ascent `γ̂_l ← γ̂_l + τ (ẑ_l − Σ_k θ̂_l^(k))`.
//!
//! The run stops at the first iteration where `Σ_k (ω_k − ω_k^prev)² ≤ tol`.
//! Frequencies are in cycles per sample internally and in Hz in the result.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView1, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{lasso_solve, rescale_columns, CoefficientMatrix};
use crate::spectral::{
    crop_mirror, mirror_extend, FrequencyGrid, HalfSpectrum, SpectralTransform, TimeSeriesMatrix,
};

/// Energy below which a mode is treated as empty and its frequency frozen.
pub const DEGENERATE_ENERGY: f64 = 1e-30;

const LASSO_MAX_SWEEPS: usize = 1000;

/// Starting central frequencies, in cycles per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitFreqs {
    /// All modes start at DC.
    Zeros,
    /// `ω_k = (k + 1) / (2 (K + 1))`, evenly inside `(0, 0.5)`.
    Uniform,
    Explicit(Vec<f64>),
}

impl InitFreqs {
    pub fn resolve(&self, n_modes: usize) -> Result<Vec<f64>> {
        match self {
            InitFreqs::Zeros => Ok(vec![0.0; n_modes]),
            InitFreqs::Uniform => Ok((0..n_modes)
                .map(|k| (k + 1) as f64 / (2.0 * (n_modes + 1) as f64))
                .collect()),
            InitFreqs::Explicit(freqs) => {
                if freqs.len() != n_modes {
                    return Err(Error::config(format!(
                        "{} initial frequencies for {n_modes} modes",
                        freqs.len()
                    )));
                }
                if let Some(f) = freqs.iter().find(|f| !(0.0..=0.5).contains(*f)) {
                    return Err(Error::config(format!(
                        "initial frequency {f} outside [0, 0.5] cycles/sample"
                    )));
                }
                Ok(freqs.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmdConfig {
    pub n_latents: usize,
    pub n_modes: usize,
    /// Bandwidth penalty.
    pub alpha: f64,
    /// Augmented-Lagrangian penalty.
    pub rho: f64,
    /// Sparsity weight of the (unscaled) sparse-coding objective.
    pub lambda: f64,
    /// Dual step size in `[0, 1]`.
    pub tau: f64,
    /// Threshold on the squared central-frequency drift.
    pub tol: f64,
    pub max_iter: usize,
    pub init_freqs: InitFreqs,
    /// Pin `A` to its `δ_ij` initial value and skip sparse coding.
    pub freeze_a: bool,
    /// Reflect-pad each channel to twice its length before transforming.
    pub mirror: bool,
}

impl Default for VlmdConfig {
    fn default() -> Self {
        Self {
            n_latents: 1,
            n_modes: 1,
            alpha: 1000.0,
            rho: 0.6,
            lambda: 0.04,
            tau: 0.9,
            tol: 1e-7,
            max_iter: 500,
            init_freqs: InitFreqs::Zeros,
            freeze_a: false,
            mirror: true,
        }
    }
}

impl VlmdConfig {
    pub fn new(n_latents: usize, n_modes: usize) -> Self {
        Self {
            n_latents,
            n_modes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_latents == 0 || self.n_modes == 0 {
            return Err(Error::config("n_latents and n_modes must be positive"));
        }
        for (name, v) in [("alpha", self.alpha), ("rho", self.rho), ("tol", self.tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be positive"));
        }
        self.init_freqs.resolve(self.n_modes)?;
        Ok(())
    }
}

/// Full iterate set of the solver. Spectra live on the grid of the working
/// (possibly mirrored) signal length.
#[derive(Debug, Clone)]
pub struct VlmdState {
    pub grid: Arc<FrequencyGrid>,
    /// Latent components, one per latent.
    pub z_hat: Vec<HalfSpectrum>,
    pub a: CoefficientMatrix,
    /// Latent modes indexed `[k][l]`.
    pub theta_hat: Vec<Vec<HalfSpectrum>>,
    /// Central frequencies, cycles per sample.
    pub omega: Vec<f64>,
    /// Duals, one per latent.
    pub gamma_hat: Vec<HalfSpectrum>,
    pub iteration: usize,
}

/// Converged (or stopped) decomposition.
///
/// Array layouts put time on the middle axis so that each mode slice is a
/// `T × L` or `T × C` matrix: `latent_modes[k]` is `Θ^(k)` and
/// `intrinsic_modes[k] = Θ^(k) A` is `U^(k)`.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    /// `Z`, `T × L`.
    pub latent_components: Array2<f64>,
    pub coefficients: CoefficientMatrix,
    /// `K × T × L`.
    pub latent_modes: Array3<f64>,
    /// `K × T × C`.
    pub intrinsic_modes: Array3<f64>,
    /// Cycles per sample.
    pub central_freqs: Vec<f64>,
    pub central_freqs_hz: Vec<f64>,
    /// Central frequencies after every iteration, cycles per sample.
    pub freq_trace: Vec<Vec<f64>>,
    /// `Σ_k (ω_k − ω_k^prev)²` after every iteration.
    pub drift_trace: Vec<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    /// Modes whose energy vanished in the last iteration.
    pub degenerate_modes: Vec<usize>,
    /// `Σ_l ‖ẑ_l − Σ_k θ̂_l^(k)‖² / Σ_l ‖ẑ_l‖²` at exit.
    pub relative_primal_residual: f64,
    /// Largest imaginary residue met while inverting spectra.
    pub max_imag_residue: f64,
    pub sample_rate_hz: f64,
}

/// `a_lᵀR̂` → `ẑ_l`, bin-wise, given the precomputed numerator pieces.
fn latent_component_kernel(
    projected_residual: &[Complex64],
    theta_sum: &[Complex64],
    gamma: &[Complex64],
    a_norm_sq: f64,
    rho: f64,
    out: &mut [Complex64],
) {
    let w = 2.0 / rho;
    let denom = 1.0 + w * a_norm_sq;
    for (((o, &p), &s), &g) in out.iter_mut().zip(projected_residual).zip(theta_sum).zip(gamma) {
        *o = (p * w + s - g) / denom;
    }
}

fn latent_mode_kernel(
    z: &[Complex64],
    others_sum: &[Complex64],
    gamma: &[Complex64],
    freqs: &[f64],
    omega_k: f64,
    alpha: f64,
    rho: f64,
    out: &mut [Complex64],
) {
    let c = 4.0 * alpha / rho;
    for ((((o, &zv), &s), &g), &f) in out.iter_mut().zip(z).zip(others_sum).zip(gamma).zip(freqs) {
        let d = f - omega_k;
        *o = (zv - s + g) / (1.0 + c * d * d);
    }
}

fn check_same_grid(spectra: &[&HalfSpectrum], grid: &FrequencyGrid) -> Result<()> {
    if spectra.iter().any(|s| s.grid().as_ref() != grid) {
        return Err(Error::dim("spectra are on different frequency grids"));
    }
    Ok(())
}

/// Closed-form latent-component update.
///
/// `residuals[c]` is `r̂_c = x̂_c − Σ_{n≠l} a_nc ẑ_n` (the residual with
/// latent `l` removed), `a_row` the `l`-th row of `A`, `theta_l` the `K`
/// modes of latent `l`:
///
/// `ẑ_l = [(2/ρ) Σ_c a_lc r̂_c + Σ_k θ̂_l^(k) − γ̂_l] / [1 + (2/ρ) Σ_c a_lc²]`.
pub fn update_latent_component(
    residuals: &[HalfSpectrum],
    a_row: ArrayView1<'_, f64>,
    theta_l: &[HalfSpectrum],
    gamma_l: &HalfSpectrum,
    rho: f64,
) -> Result<HalfSpectrum> {
    if residuals.len() != a_row.len() {
        return Err(Error::dim(format!(
            "{} residual channels for a coefficient row of length {}",
            residuals.len(),
            a_row.len()
        )));
    }
    let grid = gamma_l.grid().clone();
    check_same_grid(&residuals.iter().chain(theta_l).collect::<Vec<_>>(), &grid)?;
    let n = grid.n_bins();
    let mut projected = vec![Complex64::new(0.0, 0.0); n];
    for (r, &a) in residuals.iter().zip(a_row.iter()) {
        for (p, &v) in projected.iter_mut().zip(r.coeffs()) {
            *p += v * a;
        }
    }
    let mut theta_sum = vec![Complex64::new(0.0, 0.0); n];
    for m in theta_l {
        for (s, &v) in theta_sum.iter_mut().zip(m.coeffs()) {
            *s += v;
        }
    }
    let a_norm_sq = a_row.dot(&a_row);
    let mut out = HalfSpectrum::zeros(grid);
    latent_component_kernel(&projected, &theta_sum, gamma_l.coeffs(), a_norm_sq, rho, out.coeffs_mut());
    Ok(out)
}

/// Closed-form latent-mode update for mode `k` of one latent:
///
/// `θ̂_l^(k)(ω) = [ẑ_l − Σ_{q≠k} θ̂_l^(q) + γ̂_l] / [1 + (4α/ρ)(ω − ω_k)²]`.
///
/// `theta_l[k]` itself is ignored (treated as zeroed).
pub fn update_latent_mode(
    k: usize,
    z_l: &HalfSpectrum,
    theta_l: &[HalfSpectrum],
    gamma_l: &HalfSpectrum,
    omega_k: f64,
    alpha: f64,
    rho: f64,
) -> Result<HalfSpectrum> {
    if k >= theta_l.len() {
        return Err(Error::dim(format!("mode {k} out of {} modes", theta_l.len())));
    }
    let grid = z_l.grid().clone();
    check_same_grid(&theta_l.iter().chain([gamma_l]).collect::<Vec<_>>(), &grid)?;
    let mut others = vec![Complex64::new(0.0, 0.0); grid.n_bins()];
    for (q, m) in theta_l.iter().enumerate() {
        if q != k {
            for (s, &v) in others.iter_mut().zip(m.coeffs()) {
                *s += v;
            }
        }
    }
    let mut out = HalfSpectrum::zeros(grid.clone());
    latent_mode_kernel(
        z_l.coeffs(),
        &others,
        gamma_l.coeffs(),
        grid.normalized_freqs(),
        omega_k,
        alpha,
        rho,
        out.coeffs_mut(),
    );
    Ok(out)
}

/// Spectral centroid of a set of mode spectra sharing one central frequency:
/// `Σ_l Σ_b ω_b |θ̂_l(ω_b)|² / Σ_l Σ_b |θ̂_l(ω_b)|²`.
///
/// Returns `None` when the total energy is below [`DEGENERATE_ENERGY`]; the
/// caller keeps the previous frequency.
pub fn update_central_frequency(modes: &[HalfSpectrum]) -> Option<f64> {
    let spectra: Vec<&[Complex64]> = modes.iter().map(|m| m.coeffs()).collect();
    let freqs = modes.first()?.grid().normalized_freqs();
    centroid(&spectra, freqs)
}

fn centroid(spectra: &[&[Complex64]], freqs: &[f64]) -> Option<f64> {
    let mut weighted = 0.0;
    let mut total = 0.0;
    for s in spectra {
        for (&v, &f) in s.iter().zip(freqs) {
            let p = v.norm_sqr();
            weighted += f * p;
            total += p;
        }
    }
    (total >= DEGENERATE_ENERGY).then(|| weighted / total)
}

/// Dual ascent `γ̂_l ← γ̂_l + τ (ẑ_l − Σ_k θ̂_l^(k))` for every latent.
/// `theta_hat` is indexed `[k][l]`.
pub fn update_duals(
    gamma_hat: &mut [HalfSpectrum],
    z_hat: &[HalfSpectrum],
    theta_hat: &[Vec<HalfSpectrum>],
    tau: f64,
) -> Result<()> {
    if gamma_hat.len() != z_hat.len() || theta_hat.iter().any(|m| m.len() != z_hat.len()) {
        return Err(Error::dim("duals, latents and modes disagree on L"));
    }
    for (l, gamma) in gamma_hat.iter_mut().enumerate() {
        let z = z_hat[l].coeffs();
        let g = gamma.coeffs_mut();
        if g.len() != z.len() {
            return Err(Error::dim("dual and latent spectra differ in length"));
        }
        for (b, gv) in g.iter_mut().enumerate() {
            let mode_sum: Complex64 = theta_hat.iter().map(|m| m[l].coeffs()[b]).sum();
            *gv += (z[b] - mode_sum) * tau;
        }
    }
    Ok(())
}

/// Working-domain view of the data plus reusable transform.
struct Problem {
    x: Array2<f64>,
    x_hat: Vec<Vec<Complex64>>,
    transform: SpectralTransform,
    n_samples: usize,
    mirror: bool,
}

impl Problem {
    fn new(x: &TimeSeriesMatrix, mirror: bool) -> Result<Self> {
        let t = x.n_samples();
        let work_len = if mirror { 2 * t } else { t };
        let transform = SpectralTransform::new(work_len)?;
        let mut x_hat = Vec::with_capacity(x.n_channels());
        for c in 0..x.n_channels() {
            let col = x.channel(c).to_vec();
            let work = if mirror { mirror_extend(&col) } else { col };
            x_hat.push(transform.analytic(&work)?.into_coeffs());
        }
        Ok(Self {
            x: x.samples().to_owned(),
            x_hat,
            transform,
            n_samples: t,
            mirror,
        })
    }

    /// Time-domain samples of a spectrum, cropped back to the input length.
    fn to_time(&self, coeffs: &[Complex64], residue: &mut f64) -> Result<Vec<f64>> {
        let mut work = vec![0.0; self.transform.signal_len()];
        *residue = residue.max(self.transform.real_into(coeffs, &mut work)?);
        if self.mirror {
            crop_mirror(&work, self.n_samples)
        } else {
            Ok(work)
        }
    }
}

/// Starting point: `A = δ_ij`, `ẑ_l` the spectrum of channel `l`, zero modes
/// and duals, `ω` from `config.init_freqs`.
pub fn initialize_state(x: &TimeSeriesMatrix, config: &VlmdConfig) -> Result<VlmdState> {
    config.validate()?;
    let problem = Problem::new(x, config.mirror)?;
    initial_state(&problem, config, x.n_channels())
}

fn initial_state(problem: &Problem, config: &VlmdConfig, n_channels: usize) -> Result<VlmdState> {
    let grid = problem.transform.grid().clone();
    let l = config.n_latents;
    let k = config.n_modes;
    let z_hat = (0..l)
        .map(|i| HalfSpectrum::new(problem.x_hat[i].clone(), grid.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(VlmdState {
        z_hat,
        a: CoefficientMatrix::identity_like(l, n_channels),
        theta_hat: vec![vec![HalfSpectrum::zeros(grid.clone()); l]; k],
        omega: config.init_freqs.resolve(k)?,
        gamma_hat: vec![HalfSpectrum::zeros(grid.clone()); l],
        iteration: 0,
        grid,
    })
}

/// Outcome of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub drift: f64,
    pub degenerate_modes: Vec<usize>,
}

/// Iteration driver; exposed so callers can single-step the solver.
pub struct VlmdSolver {
    config: VlmdConfig,
    problem: Problem,
    sample_rate_hz: f64,
    n_channels: usize,
    max_imag_residue: f64,
}

impl VlmdSolver {
    pub fn new(x: &TimeSeriesMatrix, config: VlmdConfig) -> Result<Self> {
        config.validate()?;
        let (t, c) = (x.n_samples(), x.n_channels());
        if config.n_latents > c {
            return Err(Error::config(format!(
                "{} latents exceed {c} channels",
                config.n_latents
            )));
        }
        if t < 2 * config.n_modes {
            return Err(Error::config(format!(
                "{t} samples cannot carry {} modes (need T ≥ 2K)",
                config.n_modes
            )));
        }
        Ok(Self {
            problem: Problem::new(x, config.mirror)?,
            config,
            sample_rate_hz: x.sample_rate_hz(),
            n_channels: c,
            max_imag_residue: 0.0,
        })
    }

    pub fn config(&self) -> &VlmdConfig {
        &self.config
    }

    pub fn initial_state(&self) -> Result<VlmdState> {
        initial_state(&self.problem, &self.config, self.n_channels)
    }

    /// Time-domain latents, `T × L`.
    pub fn latents_time(&mut self, state: &VlmdState) -> Result<Array2<f64>> {
        let l = state.z_hat.len();
        let mut z = Array2::zeros((self.problem.n_samples, l));
        for (i, zh) in state.z_hat.iter().enumerate() {
            let col = self.problem.to_time(zh.coeffs(), &mut self.max_imag_residue)?;
            z.column_mut(i).assign(&ArrayView1::from(&col[..]));
        }
        Ok(z)
    }

    fn sparse_coding(&mut self, state: &mut VlmdState) -> Result<()> {
        let z = self.latents_time(state)?;
        if z.iter().all(|&v| v == 0.0) {
            // A zero dictionary leaves A undetermined; keep the current one.
            return Ok(());
        }
        let gram_scale = z
            .axis_iter(Axis(1))
            .map(|col| col.dot(&col))
            .fold(0.0_f64, f64::max);
        let data_scale = self
            .problem
            .x
            .axis_iter(Axis(1))
            .map(|col| col.dot(&col))
            .fold(0.0_f64, f64::max);
        let tol = 1e-9 * (2.0 * (gram_scale * data_scale).sqrt()).max(1.0);
        let fit = lasso_solve(
            self.problem.x.view(),
            z.view(),
            self.config.lambda,
            Some(state.a.values()),
            tol,
            LASSO_MAX_SWEEPS,
        )?;
        state.a = rescale_columns(fit.coefficients.view())?;
        Ok(())
    }

    fn latent_sweep(&self, state: &mut VlmdState) {
        let a = state.a.values();
        let n_bins = state.grid.n_bins();
        let l_count = state.z_hat.len();
        let zero = Complex64::new(0.0, 0.0);
        let coupling = a.dot(&a.t());

        // P̂_l = Σ_c a_lc x̂_c, fixed through the sweep.
        let mut projected = vec![vec![zero; n_bins]; l_count];
        for (l, p) in projected.iter_mut().enumerate() {
            for (c, xh) in self.problem.x_hat.iter().enumerate() {
                let w = a[[l, c]];
                if w != 0.0 {
                    for (pv, &xv) in p.iter_mut().zip(xh) {
                        *pv += xv * w;
                    }
                }
            }
        }

        let mut numer = vec![zero; n_bins];
        let mut theta_sum = vec![zero; n_bins];
        let mut out = vec![zero; n_bins];
        for l in 0..l_count {
            // a_lᵀR̂ with ẑ_l removed: P̂_l − Σ_{n≠l} (AAᵀ)_ln ẑ_n.
            numer.copy_from_slice(&projected[l]);
            for n in 0..l_count {
                let g = coupling[[l, n]];
                if n != l && g != 0.0 {
                    for (v, &zv) in numer.iter_mut().zip(state.z_hat[n].coeffs()) {
                        *v -= zv * g;
                    }
                }
            }
            theta_sum.fill(zero);
            for modes in &state.theta_hat {
                for (s, &v) in theta_sum.iter_mut().zip(modes[l].coeffs()) {
                    *s += v;
                }
            }
            latent_component_kernel(
                &numer,
                &theta_sum,
                state.gamma_hat[l].coeffs(),
                coupling[[l, l]],
                self.config.rho,
                &mut out,
            );
            state.z_hat[l].coeffs_mut().copy_from_slice(&out);
        }
    }

    /// Mode sweep with per-mode frequency updates; returns degenerate modes.
    fn mode_sweep(&self, state: &mut VlmdState) -> Vec<usize> {
        let n_bins = state.grid.n_bins();
        let l_count = state.z_hat.len();
        let zero = Complex64::new(0.0, 0.0);
        let freqs = state.grid.normalized_freqs().to_vec();

        let mut mode_sum = vec![vec![zero; n_bins]; l_count];
        for modes in &state.theta_hat {
            for (sum, m) in mode_sum.iter_mut().zip(modes) {
                for (s, &v) in sum.iter_mut().zip(m.coeffs()) {
                    *s += v;
                }
            }
        }

        let mut degenerate = Vec::new();
        let mut others = vec![zero; n_bins];
        let mut out = vec![zero; n_bins];
        for k in 0..state.theta_hat.len() {
            for l in 0..l_count {
                let old = state.theta_hat[k][l].coeffs();
                for ((o, &s), &v) in others.iter_mut().zip(&mode_sum[l]).zip(old) {
                    *o = s - v;
                }
                latent_mode_kernel(
                    state.z_hat[l].coeffs(),
                    &others,
                    state.gamma_hat[l].coeffs(),
                    &freqs,
                    state.omega[k],
                    self.config.alpha,
                    self.config.rho,
                    &mut out,
                );
                for ((s, &o), &n) in mode_sum[l].iter_mut().zip(&others).zip(&out) {
                    *s = o + n;
                }
                state.theta_hat[k][l].coeffs_mut().copy_from_slice(&out);
            }
            let spectra: Vec<&[Complex64]> = state.theta_hat[k].iter().map(|m| m.coeffs()).collect();
            match centroid(&spectra, &freqs) {
                Some(w) => state.omega[k] = w,
                None => degenerate.push(k),
            }
        }
        degenerate
    }

    /// One outer iteration.
    pub fn step(&mut self, state: &mut VlmdState) -> Result<StepReport> {
        let previous = state.omega.clone();
        if !self.config.freeze_a {
            self.sparse_coding(state)?;
        }
        self.latent_sweep(state);
        let degenerate_modes = self.mode_sweep(state);
        update_duals(&mut state.gamma_hat, &state.z_hat, &state.theta_hat, self.config.tau)?;
        state.iteration += 1;
        let drift = previous
            .iter()
            .zip(&state.omega)
            .map(|(p, w)| (w - p) * (w - p))
            .sum();
        Ok(StepReport {
            drift,
            degenerate_modes,
        })
    }

    /// Iterates from the initial state until the drift criterion or
    /// `max_iter`.
    pub fn run(mut self) -> Result<DecompositionResult> {
        let mut state = self.initial_state()?;
        let mut freq_trace = Vec::new();
        let mut drift_trace = Vec::new();
        let mut converged = false;
        let mut degenerate_modes = Vec::new();
        while state.iteration < self.config.max_iter {
            let report = self.step(&mut state)?;
            freq_trace.push(state.omega.clone());
            drift_trace.push(report.drift);
            degenerate_modes = report.degenerate_modes;
            if report.drift <= self.config.tol {
                converged = true;
                break;
            }
        }
        if !degenerate_modes.is_empty() {
            log::info!("modes {degenerate_modes:?} carry no energy; frequencies frozen");
        }
        self.finish(state, freq_trace, drift_trace, converged, degenerate_modes)
    }

    fn finish(
        mut self,
        state: VlmdState,
        freq_trace: Vec<Vec<f64>>,
        drift_trace: Vec<f64>,
        converged: bool,
        degenerate_modes: Vec<usize>,
    ) -> Result<DecompositionResult> {
        let t = self.problem.n_samples;
        let l_count = state.z_hat.len();
        let k_count = state.theta_hat.len();
        let latent_components = self.latents_time(&state)?;

        let mut latent_modes = Array3::zeros((k_count, t, l_count));
        for (k, modes) in state.theta_hat.iter().enumerate() {
            for (l, m) in modes.iter().enumerate() {
                let col = self.problem.to_time(m.coeffs(), &mut self.max_imag_residue)?;
                latent_modes
                    .index_axis_mut(Axis(0), k)
                    .column_mut(l)
                    .assign(&ArrayView1::from(&col[..]));
            }
        }
        let intrinsic_modes = intrinsic_modes(&latent_modes, &state.a);

        let mut resid = 0.0;
        let mut total = 0.0;
        for l in 0..l_count {
            let z = state.z_hat[l].coeffs();
            for (b, &zv) in z.iter().enumerate() {
                let s: Complex64 = state.theta_hat.iter().map(|m| m[l].coeffs()[b]).sum();
                let w = state.grid.energy_weight(b);
                resid += w * (zv - s).norm_sqr();
                total += w * zv.norm_sqr();
            }
        }
        let relative_primal_residual = if total > 0.0 { resid / total } else { 0.0 };

        let fs = self.sample_rate_hz;
        Ok(DecompositionResult {
            latent_components,
            latent_modes,
            intrinsic_modes,
            central_freqs_hz: state.omega.iter().map(|w| w * fs).collect(),
            central_freqs: state.omega.clone(),
            coefficients: state.a,
            freq_trace,
            drift_trace,
            n_iterations: state.iteration,
            converged,
            degenerate_modes,
            relative_primal_residual,
            max_imag_residue: self.max_imag_residue,
            sample_rate_hz: fs,
        })
    }
}

/// `U^(k) = Θ^(k) A` for every mode; `latent_modes` is `K × T × L`.
pub fn intrinsic_modes(latent_modes: &Array3<f64>, a: &CoefficientMatrix) -> Array3<f64> {
    let (k_count, t, _) = latent_modes.dim();
    let mut out = Array3::zeros((k_count, t, a.n_channels()));
    for (k, theta) in latent_modes.axis_iter(Axis(0)).enumerate() {
        out.index_axis_mut(Axis(0), k).assign(&theta.dot(&a.values()));
    }
    out
}

/// Decomposes `x` into `K` latent modes over `L` latent components.
pub fn vlmd_decompose(x: &TimeSeriesMatrix, config: &VlmdConfig) -> Result<DecompositionResult> {
    VlmdSolver::new(x, config.clone())?.run()
}
