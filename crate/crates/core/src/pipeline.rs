//! End-to-end orchestration: dataset generation, per-utterance
//! enhancement, batch runs with resumable outputs, and evaluation.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamformer::{apply, mpdr_weights, mvdr_weights, Provenance, StageWeights};
use crate::covariance::{estimate_rtf, CMatrix, CovarianceSet, RtfVector};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_utterance, EvalReport, Failure, LossWeights, UtteranceMetrics};
use crate::mixer::{make_variant, stream_rng, Mixture, MixtureSpec, VariantInputs};
use crate::postfilter::{lsa_enhance, noise_psd_from_head, PostfilterConfig};
use crate::room::{sample_scenario, ArrayGeometry, NoiseType, Scenario, ScenarioRanges};
use crate::signal::{TimeSignal, WavFormat};
use crate::stft::{analyze, synthesize, Spectrogram, StftConfig};
use crate::weights_io::load_weights;

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const REPORT_NAME: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "mvdr")]
    Mvdr,
    #[serde(rename = "mvdr+pf")]
    MvdrPf,
    #[serde(rename = "mpdr")]
    Mpdr,
    #[serde(rename = "learned")]
    Learned,
    #[serde(rename = "passthrough")]
    Passthrough,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mvdr,
        Method::MvdrPf,
        Method::Mpdr,
        Method::Learned,
        Method::Passthrough,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mvdr => "mvdr",
            Method::MvdrPf => "mvdr+pf",
            Method::Mpdr => "mpdr",
            Method::Learned => "learned",
            Method::Passthrough => "passthrough",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// How many leading frames are treated as noise-only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFramePolicy {
    /// Frames whose analysis window lies entirely within the first seconds.
    HeadSeconds(f64),
    Frames(usize),
}

impl Default for NoiseFramePolicy {
    fn default() -> Self {
        NoiseFramePolicy::HeadSeconds(0.5)
    }
}

impl NoiseFramePolicy {
    pub fn frames(&self, stft: &StftConfig) -> Result<usize> {
        match *self {
            NoiseFramePolicy::HeadSeconds(s) => {
                if !(s > 0.0) {
                    return Err(Error::Config(format!("noise head of {s} s")));
                }
                noise_frames_for(stft, (s * stft.sample_rate as f64).round() as usize)
            }
            NoiseFramePolicy::Frames(0) => Err(Error::Config("zero noise frames".into())),
            NoiseFramePolicy::Frames(n) => Ok(n),
        }
    }
}

/// Number of frames lying entirely within the first `head_samples` samples.
pub fn noise_frames_for(stft: &StftConfig, head_samples: usize) -> Result<usize> {
    let n = stft.frames_within(head_samples);
    if n == 0 {
        return Err(Error::Estimation(format!(
            "a head of {head_samples} samples holds no complete {}-sample frame",
            stft.frame_len
        )));
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMethod {
    Mvdr,
    /// Noisy covariance in the solve; the RTF is estimated against a
    /// spatially white noise model.
    Mpdr,
}

/// Stage-1 weights from the noise-only head and the remaining frames.
pub fn design_beamformer(
    spec: &Spectrogram,
    method: DesignMethod,
    noise_frames: usize,
    reference_index: usize,
) -> Result<(StageWeights, RtfVector)> {
    if noise_frames >= spec.num_frames() {
        return Err(Error::Estimation(format!(
            "{noise_frames} noise frames leave no noisy frames out of {}",
            spec.num_frames()
        )));
    }
    let cov = CovarianceSet::estimate(spec, noise_frames)?;
    let sample_rate = Some(spec.config.sample_rate);
    let (w, rtf, provenance) = match method {
        DesignMethod::Mvdr => {
            let rtf = estimate_rtf(&cov.phi_yy, &cov.phi_nn, reference_index)?;
            (mvdr_weights(&cov.phi_nn, &rtf.h)?, rtf, Provenance::Mvdr)
        }
        DesignMethod::Mpdr => {
            let m = spec.num_channels();
            let white = vec![CMatrix::identity(m, m); spec.num_bins()];
            let rtf = estimate_rtf(&cov.phi_yy, &white, reference_index)?;
            (mpdr_weights(&cov.phi_yy, &rtf.h)?, rtf, Provenance::Mpdr)
        }
    };
    Ok((StageWeights::from_bins(&w, sample_rate, provenance)?, rtf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceConfig {
    pub method: Method,
    /// Applies the LSA postfilter after the beamformer; implied by `mvdr+pf`.
    pub postfilter: bool,
    pub postfilter_cfg: PostfilterConfig,
    pub noise_frames: NoiseFramePolicy,
    pub stft: StftConfig,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            method: Method::MvdrPf,
            postfilter: false,
            postfilter_cfg: PostfilterConfig::default(),
            noise_frames: NoiseFramePolicy::default(),
            stft: StftConfig::default(),
        }
    }
}

impl EnhanceConfig {
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            ..Default::default()
        }
    }

    pub fn uses_postfilter(&self) -> bool {
        self.postfilter || self.method == Method::MvdrPf
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    pub estimate: TimeSignal,
    /// Stage-1 (and stage-2) weights that produced the estimate.
    pub weights: Option<StageWeights>,
    pub noise_frames: usize,
    pub degenerate_bins: usize,
}

/// Enhances one multichannel recording. `learned` is required for the
/// learned method and ignored otherwise.
pub fn enhance_utterance(
    y: &TimeSignal,
    reference_index: usize,
    cfg: &EnhanceConfig,
    learned: Option<&StageWeights>,
) -> Result<Enhanced> {
    if reference_index >= y.num_channels() {
        return Err(Error::Config(format!(
            "reference index {reference_index} for {} channels",
            y.num_channels()
        )));
    }
    if y.sample_rate != cfg.stft.sample_rate {
        return Err(Error::Config(format!(
            "signal is at {} Hz, STFT expects {} Hz",
            y.sample_rate, cfg.stft.sample_rate
        )));
    }
    if cfg.method == Method::Passthrough && !cfg.uses_postfilter() {
        return Ok(Enhanced {
            estimate: y.select(reference_index)?,
            weights: None,
            noise_frames: 0,
            degenerate_bins: 0,
        });
    }
    let spec = analyze(y, &cfg.stft)?;
    let noise_frames = cfg.noise_frames.frames(&cfg.stft)?;
    let (stage, weights, degenerate_bins) = match cfg.method {
        Method::Passthrough => {
            let single = analyze(&y.select(reference_index)?, &cfg.stft)?;
            (single, None, 0)
        }
        Method::Learned => {
            let w = learned.ok_or_else(|| Error::Config("learned method needs weights".into()))?;
            if let Some(sr) = w.sample_rate {
                if sr != y.sample_rate {
                    return Err(Error::Config(format!(
                        "weights are for {sr} Hz, signal is at {} Hz",
                        y.sample_rate
                    )));
                }
            }
            (apply(w, &spec)?, Some(w.clone()), 0)
        }
        Method::Mvdr | Method::MvdrPf | Method::Mpdr => {
            let design = if cfg.method == Method::Mpdr {
                DesignMethod::Mpdr
            } else {
                DesignMethod::Mvdr
            };
            let (w, rtf) = design_beamformer(&spec, design, noise_frames, reference_index)?;
            (apply(&w, &spec)?, Some(w), rtf.num_degenerate())
        }
    };
    let out = if cfg.uses_postfilter() {
        let psd = noise_psd_from_head(&stage, noise_frames.min(stage.num_frames()))?;
        lsa_enhance(&stage, &psd, &cfg.postfilter_cfg)?
    } else {
        stage
    };
    Ok(Enhanced {
        estimate: synthesize(&out)?,
        weights,
        noise_frames,
        degenerate_bins,
    })
}

/// One line of the dataset manifest. WAV paths are relative to the
/// manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub geometry: ArrayGeometry,
    pub y: PathBuf,
    pub x: PathBuf,
    pub n: PathBuf,
}

impl ManifestEntry {
    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let file = fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open manifest {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry = serde_json::from_str(&line)
            .map_err(|err| Error::Config(format!("{}:{}: {err}", path.display(), i + 1)))?;
        if !seen.insert(e.id.clone()) {
            return Err(Error::Config(format!("duplicate utterance id '{}'", e.id)));
        }
        entries.push(e);
    }
    Ok(entries)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.push(b'\n');
    }
    write_atomic(path.as_ref(), &out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub count: usize,
    pub reverb: bool,
    pub noise_type: NoiseType,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// WAV files used as target (and babble-voice) material instead of
    /// the synthetic speech-like signal.
    pub speech_dir: Option<PathBuf>,
    pub spec: MixtureSpec,
    pub geometry: ArrayGeometry,
}

impl DatasetConfig {
    pub fn new(count: usize, reverb: bool, noise_type: NoiseType, out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            count,
            reverb,
            noise_type,
            out_dir: out_dir.into(),
            seed,
            speech_dir: None,
            spec: MixtureSpec::default(),
            geometry: ArrayGeometry::default(),
        }
    }
}

fn load_speech_corpus(dir: &Path, sample_rate: u32, min_len: usize) -> Result<Vec<Vec<f64>>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read speech directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let s = TimeSignal::read_wav_at(&f, sample_rate)?;
        let ch = s.channel(0);
        if ch.len() >= min_len {
            out.push(ch[..min_len].to_vec());
        } else {
            log::warn!("skipping {}: {} samples, need {min_len}", f.display(), ch.len());
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!(
            "no WAV in {} has at least {min_len} samples",
            dir.display()
        )));
    }
    Ok(out)
}

/// Per-utterance seeds drawn sequentially from the dataset seed.
pub fn utterance_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

pub fn utterance_id(i: usize) -> String {
    format!("utt{i:05}")
}

/// Scenario and mixture for one utterance seed.
pub fn generate_utterance(
    utt_seed: u64,
    cfg: &DatasetConfig,
    corpus: Option<&[Vec<f64>]>,
) -> Result<Mixture> {
    let ranges = ScenarioRanges::with_reverb(cfg.reverb);
    let mut rng = stream_rng(utt_seed, 0);
    let scenario = sample_scenario(&mut rng, &ranges, &cfg.geometry, cfg.noise_type)?;
    let mut inputs = VariantInputs::default();
    let babble;
    if let Some(corpus) = corpus {
        let pick = |rng: &mut ChaCha8Rng| &corpus[rng.random_range(0..corpus.len())][..];
        inputs.target = Some(pick(&mut rng));
        inputs.alternate_target = Some(pick(&mut rng));
        if cfg.noise_type == NoiseType::BabbleVoice {
            babble = (0..cfg.spec.babble_count)
                .map(|_| pick(&mut rng).to_vec())
                .collect::<Vec<_>>();
            inputs.babble = Some(&babble);
        }
    }
    make_variant(cfg.noise_type, &scenario, &cfg.geometry, &cfg.spec, &inputs)
}

/// Generates `count` utterances, writes `{id}_y.wav`, `{id}_x.wav`,
/// `{id}_n.wav` (32-bit float) and the manifest into `out_dir`.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<ManifestEntry>> {
    if cfg.count == 0 {
        return Err(Error::Config("dataset count must be positive".into()));
    }
    cfg.spec.validate()?;
    cfg.geometry.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let corpus = match &cfg.speech_dir {
        Some(d) => Some(load_speech_corpus(d, cfg.spec.sample_rate, cfg.spec.target_samples())?),
        None => None,
    };
    let seeds = utterance_seeds(cfg.seed, cfg.count);
    let entries = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let id = utterance_id(i);
            let mix = generate_utterance(s, cfg, corpus.as_deref()).map_err(|e| e.for_utterance(&id))?;
            let names = ["y", "x", "n"].map(|c| PathBuf::from(format!("{id}_{c}.wav")));
            for (sig, name) in [&mix.y, &mix.x, &mix.n].into_iter().zip(&names) {
                sig.write_wav(cfg.out_dir.join(name), WavFormat::Float32)?;
            }
            let [y, x, n] = names;
            Ok(ManifestEntry {
                id,
                seed: s,
                scenario: mix.scenario,
                geometry: mix.geometry,
                y,
                x,
                n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(cfg.out_dir.join(MANIFEST_NAME), &entries)?;
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Directory holding `{id}.exbf` or `{id}.json` weight files.
    pub weights_dir: Option<PathBuf>,
    pub enhance: EnhanceConfig,
    pub loss_weights: LossWeights,
    pub nr_head_s: f64,
    pub nr_tail_s: f64,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>, method: Method) -> Self {
        Self {
            manifest: manifest.into(),
            out_dir: out_dir.into(),
            weights_dir: None,
            enhance: EnhanceConfig::for_method(method),
            loss_weights: LossWeights::default(),
            nr_head_s: 0.5,
            nr_tail_s: 3.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_weights.validate()?;
        self.enhance.stft.validate()?;
        self.enhance.postfilter_cfg.validate()?;
        if self.enhance.method == Method::Learned && self.weights_dir.is_none() {
            return Err(Error::Config("learned method needs a weights directory".into()));
        }
        if let Some(d) = &self.weights_dir {
            if !d.is_dir() {
                return Err(Error::Config(format!("weights directory {} does not exist", d.display())));
            }
        }
        Ok(())
    }

    /// Name recorded in reports, e.g. `mpdr+lsa` when the postfilter is
    /// added to a method that does not imply it.
    pub fn method_label(&self) -> String {
        let m = self.enhance.method;
        if self.enhance.postfilter && m != Method::MvdrPf {
            format!("{m}+lsa")
        } else {
            m.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredMetrics {
    method: String,
    metrics: UtteranceMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub report: EvalReport,
    pub computed: usize,
    pub skipped: usize,
}

fn find_weights(dir: &Path, id: &str) -> Result<PathBuf> {
    for ext in ["exbf", "bin", "json"] {
        let p = dir.join(format!("{id}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Input(format!("no weight file for '{id}' in {}", dir.display())))
}

fn process_entry(entry: &ManifestEntry, base: &Path, cfg: &RunConfig, label: &str) -> Result<(UtteranceMetrics, bool)> {
    let wav_path = cfg.out_dir.join("enhanced").join(format!("{}.wav", entry.id));
    let metrics_path = cfg.out_dir.join("metrics").join(format!("{}.json", entry.id));
    if wav_path.is_file() && metrics_path.is_file() {
        if let Ok(stored) = serde_json::from_slice::<StoredMetrics>(&fs::read(&metrics_path)?) {
            if stored.method == label && stored.metrics.id == entry.id {
                return Ok((stored.metrics, true));
            }
        }
    }
    let sr = cfg.enhance.stft.sample_rate;
    let y = TimeSignal::read_wav_at(entry.resolve(base, &entry.y), sr)?;
    let x = TimeSignal::read_wav_at(entry.resolve(base, &entry.x), sr)?;
    let reference = entry.geometry.reference_index;
    let learned = match (&cfg.weights_dir, cfg.enhance.method) {
        (Some(d), Method::Learned) => Some(load_weights(find_weights(d, &entry.id)?)?.0),
        _ => None,
    };
    let out = enhance_utterance(&y, reference, &cfg.enhance, learned.as_ref())?;
    let est = out.estimate.channel(0);
    let stage1 = out.weights.as_ref().map(|w| (w, &x, &cfg.enhance.stft));
    let metrics = evaluate_utterance(
        &entry.id,
        x.channel(reference),
        y.channel(reference),
        est,
        sr,
        cfg.nr_head_s,
        cfg.nr_tail_s,
        stage1,
        &cfg.loss_weights,
    )?;
    out.estimate.write_wav(&wav_path, WavFormat::Float32)?;
    let stored = StoredMetrics {
        method: label.to_string(),
        metrics: metrics.clone(),
    };
    write_atomic(&metrics_path, &serde_json::to_vec_pretty(&stored)?)?;
    Ok((metrics, false))
}

/// Enhances and scores every manifest entry. Utterances whose outputs
/// already exist for the same method are loaded instead of recomputed;
/// failing utterances are recorded and the batch continues.
pub fn run_batch(cfg: &RunConfig) -> Result<BatchOutcome> {
    cfg.validate()?;
    let entries = read_manifest(&cfg.manifest)?;
    if entries.is_empty() {
        return Err(Error::Config(format!("manifest {} is empty", cfg.manifest.display())));
    }
    let base = cfg.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    fs::create_dir_all(cfg.out_dir.join("enhanced"))?;
    fs::create_dir_all(cfg.out_dir.join("metrics"))?;
    let label = cfg.method_label();
    let results: Vec<std::result::Result<(UtteranceMetrics, bool), Failure>> = entries
        .par_iter()
        .map(|e| {
            process_entry(e, &base, cfg, &label).map_err(|err| {
                let err = err.for_utterance(&e.id);
                log::error!("{err}");
                Failure {
                    id: e.id.clone(),
                    error: err.to_string(),
                }
            })
        })
        .collect();
    let (mut utts, mut failures, mut skipped) = (Vec::new(), Vec::new(), 0);
    for r in results {
        match r {
            Ok((m, was_skipped)) => {
                skipped += was_skipped as usize;
                utts.push(m);
            }
            Err(f) => failures.push(f),
        }
    }
    let computed = utts.len() - skipped;
    let report = EvalReport::new(label, cfg.loss_weights, utts, failures);
    write_report(cfg.out_dir.join(REPORT_NAME), &report)?;
    Ok(BatchOutcome {
        report,
        computed,
        skipped,
    })
}

pub fn write_report(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    write_atomic(path.as_ref(), &bytes)
}

/// Scores every `{id}.wav` in `est_dir` against `{id}_x.wav` (clean) and
/// `{id}_y.wav` (noisy) in `ref_dir`, as laid out by [`generate_dataset`].
pub fn evaluate_dirs(
    ref_dir: &Path,
    est_dir: &Path,
    reference_index: usize,
    nr_head_s: f64,
    nr_tail_s: f64,
    loss_weights: &LossWeights,
) -> Result<EvalReport> {
    loss_weights.validate()?;
    let mut ids: Vec<String> = fs::read_dir(est_dir)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", est_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Config(format!("no WAV files in {}", est_dir.display())));
    }
    let results: Vec<std::result::Result<UtteranceMetrics, Failure>> = ids
        .par_iter()
        .map(|id| {
            let run = || -> Result<UtteranceMetrics> {
                let est = TimeSignal::read_wav(est_dir.join(format!("{id}.wav")))?;
                let sr = est.sample_rate;
                let x = TimeSignal::read_wav_at(ref_dir.join(format!("{id}_x.wav")), sr)?;
                let y = TimeSignal::read_wav_at(ref_dir.join(format!("{id}_y.wav")), sr)?;
                if reference_index >= x.num_channels() || reference_index >= y.num_channels() {
                    return Err(Error::Config(format!("reference index {reference_index} out of range")));
                }
                evaluate_utterance(
                    id,
                    x.channel(reference_index),
                    y.channel(reference_index),
                    est.channel(0),
                    sr,
                    nr_head_s,
                    nr_tail_s,
                    None,
                    loss_weights,
                )
            };
            run().map_err(|e| Failure {
                id: id.clone(),
                error: e.for_utterance(id).to_string(),
            })
        })
        .collect();
    let (mut utts, mut failures) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(m) => utts.push(m),
            Err(f) => failures.push(f),
        }
    }
    Ok(EvalReport::new("external", *loss_weights, utts, failures))
}
