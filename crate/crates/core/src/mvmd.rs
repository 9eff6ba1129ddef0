//! Multivariate variational mode decomposition, the direct-space baseline.
//!
//! Every channel gets its own copy of each mode; modes share one central
//! frequency across channels. Per channel and mode the update is the Wiener
//! filter
//!
//! `û_k,c(ω) = [x̂_c − Σ_{q≠k} û_q,c + γ̂_c/2] / [1 + 2α(ω − ω_k)²]`,
//!
//! followed by the cross-channel spectral centroid for `ω_k` and dual ascent
//! on `Σ_k u_k,c = x_c`. Note the `γ/2` here against the full `γ` of the
//! latent solver; each follows its own derivation.

use ndarray::{Array3, ArrayView1, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{crop_mirror, mirror_extend, SpectralTransform, TimeSeriesMatrix};
use crate::vlmd::{InitFreqs, DEGENERATE_ENERGY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvmdConfig {
    pub n_modes: usize,
    pub alpha: f64,
    /// Dual step; 0 gives the noise-slack variant without exact reconstruction.
    pub tau: f64,
    /// Threshold on relative mode change plus squared frequency drift.
    pub tol: f64,
    pub max_iter: usize,
    pub init_freqs: InitFreqs,
    pub mirror: bool,
}

impl Default for MvmdConfig {
    fn default() -> Self {
        Self {
            n_modes: 1,
            alpha: 2000.0,
            tau: 0.0,
            tol: 1e-7,
            max_iter: 500,
            init_freqs: InitFreqs::Uniform,
            mirror: true,
        }
    }
}

impl MvmdConfig {
    pub fn new(n_modes: usize) -> Self {
        Self {
            n_modes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::config("n_modes must be positive"));
        }
        for (name, v) in [("alpha", self.alpha), ("tol", self.tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::config(format!("tau must be nonnegative, got {}", self.tau)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be positive"));
        }
        self.init_freqs.resolve(self.n_modes)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MvmdResult {
    /// `K × T × C`.
    pub modes: Array3<f64>,
    /// Cycles per sample.
    pub central_freqs: Vec<f64>,
    pub central_freqs_hz: Vec<f64>,
    pub freq_trace: Vec<Vec<f64>>,
    pub drift_trace: Vec<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    pub degenerate_modes: Vec<usize>,
    pub max_imag_residue: f64,
    pub sample_rate_hz: f64,
}

pub fn mvmd_decompose(x: &TimeSeriesMatrix, config: &MvmdConfig) -> Result<MvmdResult> {
    config.validate()?;
    let (t, c_count) = (x.n_samples(), x.n_channels());
    let k_count = config.n_modes;
    if t < 2 * k_count {
        return Err(Error::config(format!(
            "{t} samples cannot carry {k_count} modes (need T ≥ 2K)"
        )));
    }
    let work_len = if config.mirror { 2 * t } else { t };
    let transform = SpectralTransform::new(work_len)?;
    let grid = transform.grid().clone();
    let n_bins = grid.n_bins();
    let freqs = grid.normalized_freqs();
    let zero = Complex64::new(0.0, 0.0);

    let mut x_hat = Vec::with_capacity(c_count);
    for c in 0..c_count {
        let col = x.channel(c).to_vec();
        let work = if config.mirror { mirror_extend(&col) } else { col };
        x_hat.push(transform.analytic(&work)?.into_coeffs());
    }

    // u_hat[k][c], gamma_hat[c]
    let mut u_hat = vec![vec![vec![zero; n_bins]; c_count]; k_count];
    let mut gamma_hat = vec![vec![zero; n_bins]; c_count];
    let mut omega = config.init_freqs.resolve(k_count)?;
    let mut mode_sum = vec![vec![zero; n_bins]; c_count];

    let mut freq_trace = Vec::new();
    let mut drift_trace = Vec::new();
    let mut converged = false;
    let mut degenerate_modes = Vec::new();
    let mut iterations = 0;
    let mut out = vec![zero; n_bins];
    let two_alpha = 2.0 * config.alpha;

    while iterations < config.max_iter {
        let mut change = 0.0;
        let mut energy = 0.0;
        let mut freq_drift = 0.0;
        degenerate_modes.clear();
        for k in 0..k_count {
            let wk = omega[k];
            let mut weighted = 0.0;
            let mut total = 0.0;
            for c in 0..c_count {
                let old = &u_hat[k][c];
                for b in 0..n_bins {
                    let others = mode_sum[c][b] - old[b];
                    let d = freqs[b] - wk;
                    out[b] = (x_hat[c][b] - others + gamma_hat[c][b] * 0.5) / (1.0 + two_alpha * d * d);
                }
                for b in 0..n_bins {
                    let delta = out[b] - old[b];
                    change += delta.norm_sqr();
                    mode_sum[c][b] += delta;
                    let p = out[b].norm_sqr();
                    energy += p;
                    weighted += freqs[b] * p;
                    total += p;
                }
                u_hat[k][c].copy_from_slice(&out);
            }
            if total >= DEGENERATE_ENERGY {
                let next = weighted / total;
                freq_drift += (next - omega[k]) * (next - omega[k]);
                omega[k] = next;
            } else {
                degenerate_modes.push(k);
            }
        }
        for c in 0..c_count {
            for b in 0..n_bins {
                gamma_hat[c][b] += (x_hat[c][b] - mode_sum[c][b]) * config.tau;
            }
        }
        iterations += 1;
        let mode_drift = if energy > 0.0 { change / energy } else { 0.0 };
        let drift = mode_drift + freq_drift;
        freq_trace.push(omega.clone());
        drift_trace.push(drift);
        if drift <= config.tol {
            converged = true;
            break;
        }
    }

    let mut modes = Array3::zeros((k_count, t, c_count));
    let mut work = vec![0.0; work_len];
    let mut max_imag_residue = 0.0_f64;
    for k in 0..k_count {
        for c in 0..c_count {
            max_imag_residue = max_imag_residue.max(transform.real_into(&u_hat[k][c], &mut work)?);
            let col = if config.mirror {
                crop_mirror(&work, t)?
            } else {
                work.clone()
            };
            modes
                .index_axis_mut(Axis(0), k)
                .column_mut(c)
                .assign(&ArrayView1::from(&col[..]));
        }
    }
    let fs = x.sample_rate_hz();
    Ok(MvmdResult {
        modes,
        central_freqs_hz: omega.iter().map(|w| w * fs).collect(),
        central_freqs: omega,
        freq_trace,
        drift_trace,
        n_iterations: iterations,
        converged,
        degenerate_modes,
        max_imag_residue,
        sample_rate_hz: fs,
    })
}
