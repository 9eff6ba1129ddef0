//! Synthetic multichannel AM-FM data with known latent structure.
//!
//! Each latent mode is `θ_l^(k)(t) = α_l^(k)(t) cos φ^(k)(t)`; the phase is
//! shared by all latents of mode `k`, the envelope is drawn per latent. The
//! channels are `X = Σ_k Θ^(k) A + ε` with a sparse random `A`.
//!
//! Modulation tuples are read as `(max depth, max rate Hz)` for AM and
//! `(max deviation Hz, max rate Hz)` for FM. Envelopes are
//! `1 + d sin(2π r t + ψ)` with `d ~ U(0, depth_max/2)`, so they stay positive
//! for `depth_max ≤ 2`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CoefficientMatrix;
use crate::spectral::TimeSeriesMatrix;

/// Keeps the noise stream independent of the structural draws.
const NOISE_STREAM: u64 = 0x6e6f_6973_655f_7374;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmParams {
    pub depth_max: f64,
    pub rate_max_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmParams {
    pub deviation_max_hz: f64,
    pub rate_max_hz: f64,
}

/// The three benchmark configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Few channels, well-separated AM tones.
    A,
    /// Few channels, AM-FM with a close 73/79 Hz pair.
    B,
    /// As `B` with 100 channels and 35 latents.
    C,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            other => Err(Error::Spec(format!("unknown scenario {other:?} (expected A, B or C)"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_channels: usize,
    pub n_latents: usize,
    /// Probability that an entry of `A` is exactly zero.
    pub sparsity: f64,
    pub freqs_hz: Vec<f64>,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub am: AmParams,
    pub fm: Option<FmParams>,
    pub noise_sigma: f64,
    /// Seeds mixing matrix, envelopes and phases.
    pub seed: u64,
    /// Seeds the additive noise only.
    pub noise_seed: u64,
}

impl SynthSpec {
    pub fn scenario(scenario: Scenario) -> Self {
        let base = Self {
            n_channels: 5,
            n_latents: 3,
            sparsity: 0.6,
            freqs_hz: vec![5.0, 17.0, 50.0, 73.0, 110.0],
            sample_rate_hz: 1000.0,
            duration_s: 2.048,
            am: AmParams {
                depth_max: 2.0,
                rate_max_hz: 2.0,
            },
            fm: None,
            noise_sigma: 0.01,
            seed: 0,
            noise_seed: 0,
        };
        let fm = Some(FmParams {
            deviation_max_hz: 1.0,
            rate_max_hz: 3.0,
        });
        match scenario {
            Scenario::A => base,
            Scenario::B => Self {
                freqs_hz: vec![7.0, 12.0, 61.0, 73.0, 79.0],
                fm,
                ..base
            },
            Scenario::C => Self {
                n_channels: 100,
                n_latents: 35,
                freqs_hz: vec![7.0, 12.0, 61.0, 73.0, 79.0],
                fm,
                ..base
            },
        }
    }

    pub fn n_modes(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seeds(mut self, seed: u64, noise_seed: u64) -> Self {
        self.seed = seed;
        self.noise_seed = noise_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Spec(m));
        if self.n_channels == 0 || self.n_latents == 0 {
            return err("channels and latents must be positive".into());
        }
        if self.n_latents > self.n_channels {
            return err(format!(
                "{} latents exceed {} channels",
                self.n_latents, self.n_channels
            ));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return err(format!("sparsity {} outside [0, 1]", self.sparsity));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return err(format!("sample rate {} must be positive", self.sample_rate_hz));
        }
        if self.n_samples() < 2 {
            return err(format!("duration {} s gives fewer than 2 samples", self.duration_s));
        }
        if self.freqs_hz.is_empty() {
            return err("at least one mode frequency is required".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return err(format!("noise sigma {} must be nonnegative", self.noise_sigma));
        }
        if !(0.0..=2.0).contains(&self.am.depth_max) || !(self.am.rate_max_hz >= 0.0) {
            return err(format!(
                "AM parameters {:?} need depth in [0, 2] and a nonnegative rate",
                self.am
            ));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        let deviation = match self.fm {
            Some(fm) => {
                if !(fm.deviation_max_hz >= 0.0 && fm.rate_max_hz >= 0.0) {
                    return err(format!("FM parameters {fm:?} must be nonnegative"));
                }
                fm.deviation_max_hz
            }
            None => 0.0,
        };
        for (i, &f) in self.freqs_hz.iter().enumerate() {
            if !(f > 0.0 && f < nyquist) {
                return err(format!("frequency {f} Hz outside (0, {nyquist})"));
            }
            if f - deviation <= 0.0 || f + deviation >= nyquist {
                return err(format!(
                    "FM deviation {deviation} Hz pushes {f} Hz outside (0, {nyquist})"
                ));
            }
            if self.freqs_hz[..i].contains(&f) {
                return err(format!("frequency {f} Hz listed twice"));
            }
        }
        Ok(())
    }

    /// `key = value` lines, readable by [`SynthSpec::from_config_str`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let freqs: Vec<String> = self.freqs_hz.iter().map(|f| f.to_string()).collect();
        let _ = writeln!(s, "channels = {}", self.n_channels);
        let _ = writeln!(s, "latents = {}", self.n_latents);
        let _ = writeln!(s, "sparsity = {}", self.sparsity);
        let _ = writeln!(s, "freqs_hz = {}", freqs.join(", "));
        let _ = writeln!(s, "sample_rate_hz = {}", self.sample_rate_hz);
        let _ = writeln!(s, "duration_s = {}", self.duration_s);
        let _ = writeln!(s, "am = {}, {}", self.am.depth_max, self.am.rate_max_hz);
        match self.fm {
            Some(fm) => {
                let _ = writeln!(s, "fm = {}, {}", fm.deviation_max_hz, fm.rate_max_hz);
            }
            None => {
                let _ = writeln!(s, "fm = none");
            }
        }
        let _ = writeln!(s, "noise_sigma = {}", self.noise_sigma);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "noise_seed = {}", self.noise_seed);
        s
    }

    /// Parses `key = value` lines; `#` starts a comment. Missing keys fall
    /// back to scenario A, or to `scenario = X` when given.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Spec(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            pairs.push((lineno + 1, key.trim().to_ascii_lowercase(), value.trim().to_string()));
        }
        let base = pairs
            .iter()
            .find(|(_, k, _)| k == "scenario")
            .map(|(_, _, v)| v.parse::<Scenario>())
            .transpose()?
            .unwrap_or(Scenario::A);
        let mut spec = SynthSpec::scenario(base);
        for (lineno, key, value) in pairs {
            let bad = |what: &str| Error::Spec(format!("line {lineno}: bad {what} {value:?}"));
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(&key));
            let pair = |v: &str| -> Result<(f64, f64)> {
                let parts: Vec<&str> = v.split(',').collect();
                if parts.len() != 2 {
                    return Err(bad(&key));
                }
                Ok((num(parts[0])?, num(parts[1])?))
            };
            match key.as_str() {
                "scenario" => {}
                "channels" => spec.n_channels = value.parse().map_err(|_| bad(&key))?,
                "latents" => spec.n_latents = value.parse().map_err(|_| bad(&key))?,
                "sparsity" => spec.sparsity = num(&value)?,
                "freqs_hz" => {
                    spec.freqs_hz = value.split(',').map(num).collect::<Result<Vec<_>>>()?
                }
                "sample_rate_hz" => spec.sample_rate_hz = num(&value)?,
                "duration_s" => spec.duration_s = num(&value)?,
                "am" => {
                    let (depth_max, rate_max_hz) = pair(&value)?;
                    spec.am = AmParams { depth_max, rate_max_hz };
                }
                "fm" => {
                    spec.fm = if value.eq_ignore_ascii_case("none") || value.eq_ignore_ascii_case("no") {
                        None
                    } else {
                        let (deviation_max_hz, rate_max_hz) = pair(&value)?;
                        Some(FmParams {
                            deviation_max_hz,
                            rate_max_hz,
                        })
                    }
                }
                "noise_sigma" | "noise" => spec.noise_sigma = num(&value)?,
                "seed" => spec.seed = value.parse().map_err(|_| bad(&key))?,
                "noise_seed" => spec.noise_seed = value.parse().map_err(|_| bad(&key))?,
                _ => return Err(Error::Spec(format!("line {lineno}: unknown key {key:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Drawn modulation of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeModulation {
    pub freq_hz: f64,
    pub phase0: f64,
    pub fm_deviation_hz: f64,
    pub fm_rate_hz: f64,
    /// `(depth, rate Hz, phase)` of the envelope of each latent.
    pub envelopes: Vec<(f64, f64, f64)>,
}

impl ModeModulation {
    /// Range of the instantaneous frequency `φ'(t) / 2π`, in Hz.
    pub fn instantaneous_freq_range(&self) -> (f64, f64) {
        (self.freq_hz - self.fm_deviation_hz, self.freq_hz + self.fm_deviation_hz)
    }

    fn phase(&self, t: f64) -> f64 {
        let fm = if self.fm_deviation_hz == 0.0 {
            0.0
        } else if self.fm_rate_hz > 1e-12 {
            self.fm_deviation_hz / self.fm_rate_hz * (2.0 * PI * self.fm_rate_hz * t).sin()
        } else {
            2.0 * PI * self.fm_deviation_hz * t
        };
        2.0 * PI * self.freq_hz * t + fm + self.phase0
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub a_true: CoefficientMatrix,
    /// `K × T × L`.
    pub latent_modes: Array3<f64>,
    /// `K × T × C`, `U^(k) = Θ^(k) A`.
    pub intrinsic_modes: Array3<f64>,
    pub freqs_hz: Vec<f64>,
    pub clean: TimeSeriesMatrix,
    pub modulations: Vec<ModeModulation>,
}

fn draw_mixing(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (l, c) = (spec.n_latents, spec.n_channels);
    let mut a = Array2::zeros((l, c));
    for mut col in a.axis_iter_mut(Axis(1)) {
        let mut attempts = 0;
        loop {
            for v in col.iter_mut() {
                *v = if rng.random::<f64>() < spec.sparsity {
                    0.0
                } else {
                    rng.random_range(-1.0..1.0)
                };
            }
            attempts += 1;
            if col.iter().any(|&v| v != 0.0) {
                break;
            }
            if attempts >= 10_000 {
                // Only reachable for sparsity ≈ 1.
                let row = rng.random_range(0..l);
                col[row] = rng.random_range(-1.0..1.0);
                break;
            }
        }
    }
    a
}

/// Draws a dataset and its ground truth. Deterministic in `spec.seed` and
/// `spec.noise_seed`.
pub fn generate(spec: &SynthSpec) -> Result<(TimeSeriesMatrix, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (l, c, k_count, t) = (spec.n_latents, spec.n_channels, spec.n_modes(), spec.n_samples());
    let fs = spec.sample_rate_hz;

    let a = draw_mixing(spec, &mut rng);
    let modulations: Vec<ModeModulation> = spec
        .freqs_hz
        .iter()
        .map(|&f| {
            let phase0 = rng.random_range(0.0..2.0 * PI);
            let (fm_deviation_hz, fm_rate_hz) = match spec.fm {
                Some(fm) => (
                    rng.random::<f64>() * fm.deviation_max_hz,
                    rng.random::<f64>() * fm.rate_max_hz,
                ),
                None => (0.0, 0.0),
            };
            let envelopes = (0..l)
                .map(|_| {
                    (
                        rng.random::<f64>() * spec.am.depth_max / 2.0,
                        rng.random::<f64>() * spec.am.rate_max_hz,
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            ModeModulation {
                freq_hz: f,
                phase0,
                fm_deviation_hz,
                fm_rate_hz,
                envelopes,
            }
        })
        .collect();

    let mut latent_modes = Array3::zeros((k_count, t, l));
    for (k, m) in modulations.iter().enumerate() {
        let mut theta = latent_modes.index_axis_mut(Axis(0), k);
        for n in 0..t {
            let time = n as f64 / fs;
            let carrier = m.phase(time).cos();
            for (li, &(depth, rate, psi)) in m.envelopes.iter().enumerate() {
                let env = 1.0 + depth * (2.0 * PI * rate * time + psi).sin();
                theta[[n, li]] = env * carrier;
            }
        }
    }

    let mut intrinsic_modes = Array3::zeros((k_count, t, c));
    let mut clean = Array2::<f64>::zeros((t, c));
    for k in 0..k_count {
        let u = latent_modes.index_axis(Axis(0), k).dot(&a);
        clean += &u;
        intrinsic_modes.index_axis_mut(Axis(0), k).assign(&u);
    }

    let mut noisy = clean.clone();
    if spec.noise_sigma > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed ^ NOISE_STREAM);
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::Spec(format!("noise distribution: {e}")))?;
        noisy.mapv_inplace(|v| v + normal.sample(&mut noise_rng));
    }

    let names: Vec<String> = (0..c).map(|i| format!("ch{i}")).collect();
    let data = TimeSeriesMatrix::new(noisy, fs)?.with_channel_names(names.clone())?;
    let truth = GroundTruth {
        a_true: CoefficientMatrix::new(a)?,
        latent_modes,
        intrinsic_modes,
        freqs_hz: spec.freqs_hz.clone(),
        clean: TimeSeriesMatrix::new(clean, fs)?.with_channel_names(names)?,
        modulations,
    };
    Ok((data, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::analytic_spectrum;

    #[test]
    fn scenario_shapes() {
        let a = SynthSpec::scenario(Scenario::A);
        assert_eq!((a.n_channels, a.n_latents, a.n_modes()), (5, 3, 5));
        assert_eq!(a.freqs_hz, vec![5.0, 17.0, 50.0, 73.0, 110.0]);
        assert!(a.fm.is_none());
        let c = SynthSpec::scenario(Scenario::C);
        assert_eq!((c.n_channels, c.n_latents), (100, 35));
        assert_eq!(c.freqs_hz, vec![7.0, 12.0, 61.0, 73.0, 79.0]);
        assert_eq!(c.n_samples(), 2048);
        let (x, truth) = generate(&c).unwrap();
        assert_eq!(x.n_channels(), 100);
        assert_eq!(truth.a_true.n_latents(), 35);
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SynthSpec::scenario(Scenario::B).with_seeds(7, 3);
        let (x1, t1) = generate(&spec).unwrap();
        let (x2, t2) = generate(&spec).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(t1.a_true, t2.a_true);
        let (x3, t3) = generate(&spec.clone().with_seeds(7, 4)).unwrap();
        assert_ne!(x1, x3);
        assert_eq!(t1.a_true, t3.a_true);
    }

    #[test]
    fn clean_signal_is_exact_mode_sum() {
        let (_, truth) = generate(&SynthSpec::scenario(Scenario::B)).unwrap();
        let mut sum = Array2::<f64>::zeros(truth.clean.samples().dim());
        for u in truth.intrinsic_modes.axis_iter(Axis(0)) {
            sum += &u;
        }
        assert_eq!(sum.view(), truth.clean.samples());
    }

    #[test]
    fn every_channel_has_a_latent() {
        for seed in 0..20 {
            let spec = SynthSpec {
                sparsity: 0.9,
                ..SynthSpec::scenario(Scenario::A).with_seeds(seed, 0)
            };
            let (_, truth) = generate(&spec).unwrap();
            for col in truth.a_true.values().axis_iter(Axis(1)) {
                assert!(col.iter().any(|&v| v != 0.0));
            }
        }
    }

    #[test]
    fn sparsity_fraction_tracks_spec() {
        for seed in 0..5 {
            let spec = SynthSpec::scenario(Scenario::C).with_seeds(seed, 0);
            let (_, truth) = generate(&spec).unwrap();
            assert!((truth.a_true.sparsity() - 0.6).abs() <= 0.1);
        }
    }

    #[test]
    fn instantaneous_frequency_inside_band() {
        let spec = SynthSpec::scenario(Scenario::C);
        let (_, truth) = generate(&spec).unwrap();
        for m in &truth.modulations {
            let (lo, hi) = m.instantaneous_freq_range();
            assert!(lo > 0.0 && hi < spec.sample_rate_hz / 2.0);
            for &(depth, _, _) in &m.envelopes {
                assert!(depth < 1.0);
            }
        }
    }

    #[test]
    fn pure_tones_peak_on_nearest_bins() {
        let spec = SynthSpec {
            am: AmParams {
                depth_max: 0.0,
                rate_max_hz: 2.0,
            },
            noise_sigma: 0.0,
            ..SynthSpec::scenario(Scenario::A)
        };
        let (x, truth) = generate(&spec).unwrap();
        let t = x.n_samples();
        for c in 0..x.n_channels() {
            let s = analytic_spectrum(&x.channel(c).to_vec()).unwrap();
            let grid = s.grid().clone();
            let mags: Vec<f64> = s.coeffs().iter().map(|v| v.norm()).collect();
            let active: Vec<usize> = (0..spec.n_latents)
                .filter(|&l| truth.a_true.values()[[l, c]] != 0.0)
                .collect();
            assert!(!active.is_empty());
            for &f in &spec.freqs_hz {
                let b = grid.nearest_bin(f / spec.sample_rate_hz);
                // Local maximum at the nearest bin (unless the mode cancels in this channel).
                if mags[b] > 1e-6 * t as f64 {
                    assert!(mags[b] >= mags[b - 1] && mags[b] >= mags[b + 1], "channel {c}, {f} Hz");
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut s = SynthSpec::scenario(Scenario::A);
        s.noise_sigma = -1.0;
        assert!(matches!(s.validate(), Err(Error::Spec(_))));
        let mut s = SynthSpec::scenario(Scenario::B);
        s.fm = Some(FmParams {
            deviation_max_hz: 8.0,
            rate_max_hz: 3.0,
        });
        assert!(matches!(generate(&s), Err(Error::Spec(_))));
        let mut s = SynthSpec::scenario(Scenario::A);
        s.freqs_hz = vec![5.0, 600.0];
        assert!(s.validate().is_err());
        let mut s = SynthSpec::scenario(Scenario::A);
        s.n_latents = 6;
        assert!(s.validate().is_err());
    }

    #[test]
    fn config_text_round_trip() {
        let spec = SynthSpec::scenario(Scenario::B).with_seeds(12, 99).with_noise(0.5);
        let parsed = SynthSpec::from_config_str(&spec.to_config_string()).unwrap();
        assert_eq!(parsed, spec);
        let c = SynthSpec::from_config_str("scenario = C\nnoise = 1 # comment\n").unwrap();
        assert_eq!(c.n_channels, 100);
        assert_eq!(c.noise_sigma, 1.0);
        assert!(SynthSpec::from_config_str("bogus = 1").is_err());
    }
}
