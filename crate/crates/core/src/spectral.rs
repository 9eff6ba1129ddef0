//! One-sided (analytic) spectra and the frequency grid they live on.
//!
//! Convention: for a real signal of length `N`, the half spectrum holds the
//! unnormalized DFT bins `0..=N/2`, with every interior bin doubled so that
//! it equals the spectrum of the analytic signal. DC and (for even `N`) the
//! Nyquist bin are kept as-is. Bin `b` sits at `b / N` cycles per sample, so
//! an even-length grid spans `[0, 0.5]` exactly.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Real `T × C` sample matrix (time along rows, channels along columns).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    samples: Array2<f64>,
    sample_rate_hz: f64,
    channel_names: Option<Vec<String>>,
}

impl TimeSeriesMatrix {
    pub fn new(samples: Array2<f64>, sample_rate_hz: f64) -> Result<Self> {
        let (t, c) = samples.dim();
        if t < 2 {
            return Err(Error::invalid(format!("need at least 2 samples, got {t}")));
        }
        if c < 1 {
            return Err(Error::invalid("need at least one channel"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(((row, col), v)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite sample {v} at row {row}, channel {col}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            channel_names: None,
        })
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_channels() {
            return Err(Error::dim(format!(
                "{} channel names for {} channels",
                names.len(),
                self.n_channels()
            )));
        }
        self.channel_names = Some(names);
        Ok(self)
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn channel(&self, c: usize) -> ArrayView1<'_, f64> {
        self.samples.column(c)
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Channel labels; `ch0, ch1, …` when none were given.
    pub fn channel_names(&self) -> Vec<String> {
        match &self.channel_names {
            Some(names) => names.clone(),
            None => (0..self.n_channels()).map(|c| format!("ch{c}")).collect(),
        }
    }

    pub fn has_channel_names(&self) -> bool {
        self.channel_names.is_some()
    }
}

/// Nonnegative-frequency bins of a length-`N` real transform.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    signal_len: usize,
    freqs: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(signal_len: usize) -> Result<Self> {
        if signal_len < 2 {
            return Err(Error::invalid(format!(
                "transform length must be at least 2, got {signal_len}"
            )));
        }
        let n_bins = signal_len / 2 + 1;
        let freqs = (0..n_bins)
            .map(|b| b as f64 / signal_len as f64)
            .collect();
        Ok(Self { signal_len, freqs })
    }

    pub fn n_bins(&self) -> usize {
        self.freqs.len()
    }

    /// Length of the time-domain signal this grid belongs to.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Bin centres in cycles per sample.
    pub fn normalized_freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn has_nyquist(&self) -> bool {
        self.signal_len % 2 == 0
    }

    /// Plancherel weight of bin `b`: `Σ_t x² = Σ_b weight(b)·|s_b|²`.
    pub fn energy_weight(&self, b: usize) -> f64 {
        let n = self.signal_len as f64;
        if b == 0 || (self.has_nyquist() && b == self.n_bins() - 1) {
            1.0 / n
        } else {
            0.5 / n
        }
    }

    /// Nearest bin to a normalized frequency.
    pub fn nearest_bin(&self, freq: f64) -> usize {
        let b = (freq * self.signal_len as f64).round();
        (b.max(0.0) as usize).min(self.n_bins() - 1)
    }
}

/// One-sided analytic spectrum on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrum {
    coeffs: Vec<Complex64>,
    grid: Arc<FrequencyGrid>,
}

impl HalfSpectrum {
    pub fn new(coeffs: Vec<Complex64>, grid: Arc<FrequencyGrid>) -> Result<Self> {
        if coeffs.len() != grid.n_bins() {
            return Err(Error::dim(format!(
                "{} coefficients for a grid of {} bins",
                coeffs.len(),
                grid.n_bins()
            )));
        }
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::invalid("non-finite spectral coefficient"));
        }
        Ok(Self { coeffs, grid })
    }

    pub fn zeros(grid: Arc<FrequencyGrid>) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_bins()],
            grid,
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Time-domain energy of the real signal this spectrum represents.
    pub fn energy(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(b, c)| self.grid.energy_weight(b) * c.norm_sqr())
            .sum()
    }
}

/// Forward/inverse transform pair for one signal length, reusable across
/// calls. Cheap to clone; plans are shared.
#[derive(Clone)]
pub struct SpectralTransform {
    grid: Arc<FrequencyGrid>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralTransform")
            .field("signal_len", &self.grid.signal_len())
            .finish()
    }
}

impl SpectralTransform {
    pub fn new(signal_len: usize) -> Result<Self> {
        let grid = Arc::new(FrequencyGrid::new(signal_len)?);
        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(signal_len),
            inverse: planner.plan_fft_inverse(signal_len),
            grid,
        })
    }

    pub fn grid(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn signal_len(&self) -> usize {
        self.grid.signal_len()
    }

    /// Writes the half spectrum of `x` into `out` (length `n_bins`).
    pub fn analytic_into(&self, x: &[f64], out: &mut [Complex64]) -> Result<()> {
        let n = self.signal_len();
        if x.len() != n {
            return Err(Error::dim(format!("signal of length {} for transform of {n}", x.len())));
        }
        if out.len() != self.grid.n_bins() {
            return Err(Error::dim("output buffer does not match grid"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite sample"));
        }
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let nyquist = self.grid.has_nyquist().then(|| n / 2);
        for (b, slot) in out.iter_mut().enumerate() {
            let doubled = b != 0 && Some(b) != nyquist;
            *slot = if doubled { buf[b] * 2.0 } else { buf[b] };
        }
        Ok(())
    }

    pub fn analytic(&self, x: &[f64]) -> Result<HalfSpectrum> {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.grid.n_bins()];
        self.analytic_into(x, &mut coeffs)?;
        Ok(HalfSpectrum {
            coeffs,
            grid: self.grid.clone(),
        })
    }

    /// Inverse of [`Self::analytic_into`]. Returns the largest imaginary
    /// residue of the inverse transform before it is discarded.
    pub fn real_into(&self, coeffs: &[Complex64], out: &mut [f64]) -> Result<f64> {
        let n = self.signal_len();
        let n_bins = self.grid.n_bins();
        if coeffs.len() != n_bins {
            return Err(Error::dim(format!(
                "{} bins for a transform expecting {n_bins}",
                coeffs.len()
            )));
        }
        if out.len() != n {
            return Err(Error::dim("output buffer does not match signal length"));
        }
        let nyquist = self.grid.has_nyquist().then(|| n / 2);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (b, &c) in coeffs.iter().enumerate() {
            if b == 0 || Some(b) == nyquist {
                buf[b] = c;
            } else {
                let half = c * 0.5;
                buf[b] = half;
                buf[n - b] = half.conj();
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        let mut residue = 0.0_f64;
        for (o, v) in out.iter_mut().zip(&buf) {
            *o = v.re * scale;
            residue = residue.max((v.im * scale).abs());
        }
        Ok(residue)
    }

    pub fn real(&self, spectrum: &HalfSpectrum) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.signal_len()];
        self.real_into(spectrum.coeffs(), &mut out)?;
        Ok(out)
    }
}

/// Half spectrum of a real signal. See the module docs for the convention.
pub fn analytic_spectrum(x: &[f64]) -> Result<HalfSpectrum> {
    if x.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {}", x.len())));
    }
    SpectralTransform::new(x.len())?.analytic(x)
}

/// Real signal of length `len` whose half spectrum is `s`.
pub fn real_signal(s: &HalfSpectrum, len: usize) -> Result<Vec<f64>> {
    if s.grid().signal_len() != len || s.len() != len / 2 + 1 {
        return Err(Error::dim(format!(
            "spectrum of {} bins (grid length {}) cannot produce {len} samples",
            s.len(),
            s.grid().signal_len()
        )));
    }
    SpectralTransform::new(len)?.real(s)
}

/// Reflect-pads `x` to length `2T`: the first `T/2` samples reversed in front,
/// the remaining `T - T/2` reversed behind.
pub fn mirror_extend(x: &[f64]) -> Vec<f64> {
    let t = x.len();
    let head = t / 2;
    let mut out = Vec::with_capacity(2 * t);
    out.extend(x[..head].iter().rev());
    out.extend_from_slice(x);
    out.extend(x[head..].iter().rev());
    out
}

/// Undoes [`mirror_extend`] for an original length `t`.
pub fn crop_mirror(extended: &[f64], t: usize) -> Result<Vec<f64>> {
    if extended.len() != 2 * t {
        return Err(Error::dim(format!(
            "extended signal of length {} is not twice {t}",
            extended.len()
        )));
    }
    let head = t / 2;
    Ok(extended[head..head + t].to_vec())
}
