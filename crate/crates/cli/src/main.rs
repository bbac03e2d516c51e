use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamlab::beampattern::{analyze_example, default_thetas, AnalysisMethod};
use beamlab::metrics::LossWeights;
use beamlab::mixer::{synthetic_mixture, MixtureSpec};
use beamlab::pipeline::{evaluate_dirs, generate_dataset, run_batch, write_report, DatasetConfig, Method, RunConfig};
use beamlab::room::{ArrayGeometry, NoiseType, ReflectionOrder, Scenario};
use beamlab::stft::StftConfig;
use beamlab::weights_io::load_weights;
use beamlab::Error;
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "beamlab", version, about = "Microphone-array beamforming lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Postfilter {
    None,
    Lsa,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset of multichannel mixtures and write its manifest.
    DatasetGen {
        #[arg(long)]
        count: usize,
        #[arg(long, value_enum)]
        reverb: OnOff,
        #[arg(long, default_value = "stationary")]
        noise_type: NoiseType,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory of WAV files used as target speech.
        #[arg(long)]
        speech_dir: Option<PathBuf>,
    },
    /// Enhance every utterance of a manifest and write a report.
    Enhance {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, value_enum)]
        postfilter: Option<Postfilter>,
        /// Per-utterance weight files named `{id}.exbf`, `{id}.bin` or `{id}.json`.
        #[arg(long)]
        weights_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score enhanced WAVs against the clean and noisy references.
    Evaluate {
        #[arg(long)]
        ref_dir: PathBuf,
        #[arg(long)]
        est_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        reference_index: usize,
    },
    /// Beampattern of a designed or loaded beamformer in a simulated room.
    Beampattern {
        #[arg(long)]
        method: AnalysisMethod,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// JSON scenario, or an object with `scenario` and optional `geometry`.
        #[arg(long)]
        scenario: PathBuf,
        /// `0` for the direct path only, `full` for the reverberant room.
        #[arg(long, default_value = "full")]
        order: ReflectionOrder,
        #[arg(long)]
        out: PathBuf,
        /// Probe angles as `start:stop:step` in degrees, inclusive.
        #[arg(long)]
        thetas: Option<String>,
    },
}

fn parse_thetas(s: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad angle grid '{s}': {e}")))?;
    let [start, stop, step] = parts[..] else {
        return Err(Error::Config(format!("angle grid '{s}' must be start:stop:step")));
    };
    if !(step > 0.0) || stop < start {
        return Err(Error::Config(format!("angle grid '{s}' is empty")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

fn read_scene(path: &Path) -> Result<(Scenario, ArrayGeometry), Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Error::Config(format!("scenario {}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let (scene, geometry) = match value.get("scenario") {
        Some(s) => {
            let g = match value.get("geometry") {
                Some(g) => serde_json::from_value(g.clone()).map_err(bad)?,
                None => ArrayGeometry::default(),
            };
            (serde_json::from_value(s.clone()).map_err(bad)?, g)
        }
        None => (serde_json::from_value(value).map_err(bad)?, ArrayGeometry::default()),
    };
    Ok((scene, geometry))
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::DatasetGen {
            count,
            reverb,
            noise_type,
            out,
            seed,
            speech_dir,
        } => {
            let mut cfg = DatasetConfig::new(count, matches!(reverb, OnOff::On), noise_type, &out, seed);
            cfg.speech_dir = speech_dir;
            let entries = generate_dataset(&cfg)?;
            log::info!("wrote {} utterances to {}", entries.len(), out.display());
            Ok(0)
        }
        Command::Enhance {
            manifest,
            method,
            postfilter,
            weights_dir,
            out,
        } => {
            let mut cfg = RunConfig::new(manifest, out, method);
            cfg.weights_dir = weights_dir;
            match postfilter {
                Some(Postfilter::Lsa) => cfg.enhance.postfilter = true,
                Some(Postfilter::None) if method == Method::MvdrPf => {
                    return Err(Error::Config("method mvdr+pf always applies the postfilter".into()))
                }
                _ => {}
            }
            let outcome = run_batch(&cfg)?;
            log::info!(
                "{}: {} computed, {} reused, {} failed",
                outcome.report.method,
                outcome.computed,
                outcome.skipped,
                outcome.report.failures.len()
            );
            Ok(if outcome.report.failures.is_empty() { 0 } else { EXIT_PARTIAL })
        }
        Command::Evaluate {
            ref_dir,
            est_dir,
            out,
            reference_index,
        } => {
            let report = evaluate_dirs(&ref_dir, &est_dir, reference_index, 0.5, 3.5, &LossWeights::default())?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_report(&out, &report)?;
            for f in &report.failures {
                log::error!("{}", f.error);
            }
            Ok(if report.failures.is_empty() { 0 } else { EXIT_PARTIAL })
        }
        Command::Beampattern {
            method,
            weights,
            scenario,
            order,
            out,
            thetas,
        } => {
            let thetas = match thetas {
                Some(s) => parse_thetas(&s)?,
                None => default_thetas(),
            };
            let learned = match &weights {
                Some(p) => Some(
                    load_weights(p)
                        .map_err(|e| Error::Config(format!("weights {}: {e}", p.display())))?
                        .0,
                ),
                None => None,
            };
            let (scene, geometry) = read_scene(&scenario)?;
            let mixture = synthetic_mixture(&scene, &geometry, &MixtureSpec::default())?;
            let (grid, _) = analyze_example(&mixture, method, learned.as_ref(), &thetas, order, &StftConfig::default())?;
            let title = format!("{method:?} beampattern, order {order}");
            grid.write_artifacts(&out, &title)?;
            log::info!("peak at {} deg; artifacts in {}", grid.argmax_theta(), out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_FAILURE })
        }
    }
}
