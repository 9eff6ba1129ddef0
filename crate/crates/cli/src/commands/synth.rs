use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use ndarray::{Array2, Axis};
use serde_json::json;
use vlmd::synth::{generate, Scenario, SynthSpec};

use crate::error::{CliError, CliResult};
use crate::io::OutDir;
use crate::manifest::{sha256_hex, write_manifest};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in scenario: A, B or C.
    #[arg(long, conflicts_with = "spec")]
    pub scenario: Option<Scenario>,
    /// `key = value` spec file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Additive Gaussian noise standard deviation.
    #[arg(long, allow_negative_numbers = true)]
    pub noise: Option<f64>,
    /// Structure seed (mixing matrix, phases, modulation).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise seed; defaults to the structure seed.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SynthArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut spec = match (&args.scenario, &args.spec) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            SynthSpec::from_config_str(&text)?
        }
        (Some(s), None) => SynthSpec::scenario(*s),
        (None, None) => return Err(CliError::usage("one of --scenario or --spec is required")),
    };
    if let Some(sigma) = args.noise {
        spec.noise_sigma = sigma;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
        spec.noise_seed = seed;
    }
    if let Some(seed) = args.noise_seed {
        spec.noise_seed = seed;
    }
    spec.validate()?;

    let (x, truth) = generate(&spec)?;
    let names = x.channel_names();
    let spec_text = spec.to_config_string();
    let mut out = OutDir::create(&args.out)?;
    out.write_table("data.csv", &names, x.samples())?;
    out.write_table("clean.csv", &names, truth.clean.samples())?;
    out.write_table("truth_coefficients.csv", &names, truth.a_true.values())?;
    for (k, mode) in truth.intrinsic_modes.axis_iter(Axis(0)).enumerate() {
        out.write_table(&format!("truth_modes_k{}.csv", k + 1), &names, mode)?;
    }
    let latent_names: Vec<String> = (0..spec.n_latents).map(|l| format!("latent{l}")).collect();
    for (k, mode) in truth.latent_modes.axis_iter(Axis(0)).enumerate() {
        out.write_table(&format!("truth_latent_modes_k{}.csv", k + 1), &latent_names, mode)?;
    }
    let freqs = Array2::from_shape_fn((truth.freqs_hz.len(), 2), |(k, j)| {
        if j == 0 {
            (k + 1) as f64
        } else {
            truth.freqs_hz[k]
        }
    });
    out.write_table("truth_frequencies.csv", &["mode".into(), "freq_hz".into()], freqs.view())?;
    out.write("spec.cfg", spec_text.as_bytes())?;
    let config = serde_json::to_value(&spec).map_err(|e| CliError::runtime(e.to_string()))?;
    write_manifest(
        &mut out,
        "synth",
        json!({ "spec": config }),
        Some(sha256_hex(spec_text.as_bytes())),
        Some(spec.seed),
        started,
    )?;
    println!(
        "{} samples × {} channels at {} Hz; outputs in {}",
        x.n_samples(),
        x.n_channels(),
        spec.sample_rate_hz,
        out.path().display()
    );
    Ok(())
}
