//! Noisy multichannel mixtures: a target convolved with its room response,
//! directional AR(1) noise at a fixed SNR, and white sensor noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room::{
    simulate_rir, ArrayGeometry, NoiseType, Point3, ReflectionOrder, RirSettings, Scenario,
    ScenarioRanges,
};
use crate::signal::{variance, TimeSignal};

// Independent random streams derived from a scenario seed.
const STREAM_TARGET: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SENSOR: u64 = 3;
const STREAM_VARIANT: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub sample_rate: u32,
    pub directional_snr_db: f64,
    pub sensor_snr_db: f64,
    pub duration_s: f64,
    pub noise_head_s: f64,
    pub switch_time_s: f64,
    pub babble_count: usize,
    pub ar_coeff: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            directional_snr_db: 3.0,
            sensor_snr_db: 30.0,
            duration_s: 4.0,
            noise_head_s: 0.5,
            switch_time_s: 2.0,
            babble_count: 10,
            ar_coeff: -0.7,
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > self.noise_head_s && self.noise_head_s >= 0.0) {
            return Err(Error::Config(format!(
                "duration {} s must exceed the noise-only head {} s",
                self.duration_s, self.noise_head_s
            )));
        }
        if !(self.switch_time_s > self.noise_head_s && self.switch_time_s < self.duration_s) {
            return Err(Error::Config(format!(
                "switch time {} s must lie inside ({}, {}) s",
                self.switch_time_s, self.noise_head_s, self.duration_s
            )));
        }
        if self.ar_coeff.abs() >= 1.0 {
            return Err(Error::Config(format!("unstable AR coefficient {}", self.ar_coeff)));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn head_samples(&self) -> usize {
        (self.noise_head_s * self.sample_rate as f64).round() as usize
    }

    pub fn switch_sample(&self) -> usize {
        (self.switch_time_s * self.sample_rate as f64).round() as usize
    }

    /// Samples of target material needed to fill the speech-active segment.
    pub fn target_samples(&self) -> usize {
        self.total_samples() - self.head_samples()
    }
}

/// A generated utterance with its clean and noise components at the mics.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub y: TimeSignal,
    /// Reverberant target at each microphone.
    pub x: TimeSignal,
    /// Directional plus sensor noise at each microphone.
    pub n: TimeSignal,
    pub scenario: Scenario,
    pub geometry: ArrayGeometry,
    pub spec: MixtureSpec,
    /// Positions of additional sources (switch targets, babble talkers).
    pub extra_sources: Vec<Point3>,
}

impl Mixture {
    pub fn reference_target(&self) -> &[f64] {
        self.x.channel(self.geometry.reference_index)
    }

    pub fn reference_noisy(&self) -> &[f64] {
        self.y.channel(self.geometry.reference_index)
    }
}

/// AR(1) noise n[t] = coeff * n[t-1] + e[t] with unit-variance Gaussian
/// innovations, started from the stationary distribution.
pub fn ar1_noise<R: Rng + ?Sized>(len: usize, coeff: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(coeff.abs() < 1.0) {
        return Err(Error::Config(format!(
            "AR(1) coefficient {coeff} is not stable (|coeff| must be < 1)"
        )));
    }
    let mut out = Vec::with_capacity(len);
    let mut prev: f64 = 0.0;
    for t in 0..len {
        let e: f64 = StandardNormal.sample(rng);
        let v = if t == 0 {
            e / (1.0 - coeff * coeff).sqrt()
        } else {
            coeff * prev + e
        };
        out.push(v);
        prev = v;
    }
    Ok(out)
}

/// Pink noise (1/f power spectrum above 50 Hz) shaped by a syllable-rate
/// on/off envelope. Stand-in for speech when no corpus is supplied.
pub fn speech_like<R: Rng + ?Sized>(len: usize, sample_rate: u32, rng: &mut R) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let fs = sample_rate as f64;
    let n = len.next_power_of_two();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for k in 0..n {
        let f = k.min(n - k) as f64 * fs / n as f64;
        buf[k] *= 1.0 / f.max(50.0).sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let pink: Vec<f64> = buf[..len].iter().map(|v| v.re).collect();

    let mut env = vec![0.0; len];
    let mut t = 0;
    while t < len {
        let burst = (rng.random_range(0.08..0.35) * fs) as usize;
        let amp = rng.random_range(0.3..1.0);
        for i in 0..burst.min(len - t) {
            env[t + i] = amp * (PI * i as f64 / burst as f64).sin().powi(2);
        }
        t += burst + (rng.random_range(0.02..0.15) * fs) as usize;
    }
    let mut out: Vec<f64> = pink.iter().zip(&env).map(|(p, e)| p * e).collect();
    let peak = out.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

/// Linear convolution via FFT, full length a.len() + h.len() - 1.
pub fn fft_convolve(a: &[f64], h: &[f64]) -> Vec<f64> {
    if a.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + h.len() - 1;
    if a.len().min(h.len()) <= 64 {
        let mut out = vec![0.0; out_len];
        for (i, &av) in a.iter().enumerate() {
            for (j, &hv) in h.iter().enumerate() {
                out[i + j] += av * hv;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let to_buf = |x: &[f64]| {
        let mut b: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        b.resize(n, Complex64::new(0.0, 0.0));
        b
    };
    let mut fa = to_buf(a);
    let mut fh = to_buf(h);
    fwd.process(&mut fa);
    fwd.process(&mut fh);
    for (x, y) in fa.iter_mut().zip(&fh) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa[..out_len].iter().map(|v| v.re / n as f64).collect()
}

fn rir_settings(spec: &MixtureSpec) -> RirSettings {
    RirSettings {
        sample_rate: spec.sample_rate,
        ..Default::default()
    }
}

/// Target image at the mics: the waveform convolved with each RIR and
/// delayed to start at the end of the noise-only head.
fn target_image(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    spec: &MixtureSpec,
    wave: &[f64],
    position: &Point3,
) -> Result<Vec<Vec<f64>>> {
    let need = spec.target_samples();
    if wave.len() < need {
        return Err(Error::Input(format!(
            "target has {} samples, the speech segment needs {need}",
            wave.len()
        )));
    }
    let rir = simulate_rir(scenario, geometry, position, ReflectionOrder::Full, &rir_settings(spec))?;
    let total = spec.total_samples();
    let head = spec.head_samples();
    Ok(rir
        .filters
        .iter()
        .map(|h| {
            let conv = fft_convolve(&wave[..need], h);
            let mut out = vec![0.0; total];
            for (o, c) in out[head..].iter_mut().zip(&conv) {
                *o = *c;
            }
            out
        })
        .collect())
}

/// Noise image at the mics over the whole utterance. When the waveform is
/// longer than the utterance the leading surplus serves as run-in so the
/// reverberant field is already established at t = 0.
fn noise_image(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    spec: &MixtureSpec,
    wave: &[f64],
    position: &Point3,
) -> Result<Vec<Vec<f64>>> {
    let total = spec.total_samples();
    if wave.len() < total {
        return Err(Error::Input(format!(
            "noise has {} samples, the utterance needs {total}",
            wave.len()
        )));
    }
    let rir = simulate_rir(scenario, geometry, position, ReflectionOrder::Full, &rir_settings(spec))?;
    let offset = wave.len() - total;
    Ok(rir
        .filters
        .iter()
        .map(|h| fft_convolve(wave, h)[offset..offset + total].to_vec())
        .collect())
}

/// Noise material length including the run-in used by [`noise_image`].
fn noise_material_len(spec: &MixtureSpec) -> usize {
    spec.total_samples() + spec.sample_rate as usize
}

fn hard_switch(before: Vec<Vec<f64>>, after: Vec<Vec<f64>>, at: usize) -> Vec<Vec<f64>> {
    before
        .into_iter()
        .zip(after)
        .map(|(mut b, a)| {
            b[at..].copy_from_slice(&a[at..]);
            b
        })
        .collect()
}

fn sum_images(images: Vec<Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    let mut iter = images.into_iter();
    let mut acc = iter.next().unwrap_or_default();
    for img in iter {
        for (a, b) in acc.iter_mut().zip(img) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    acc
}

/// Scales the directional noise to the requested SNR on the reference
/// channel over the speech-active segment, adds sensor noise and sums.
fn assemble(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    spec: &MixtureSpec,
    x: Vec<Vec<f64>>,
    mut directional: Vec<Vec<f64>>,
    extra_sources: Vec<Point3>,
) -> Result<Mixture> {
    let head = spec.head_samples();
    let r = geometry.reference_index;
    let target_var = variance(&x[r][head..]);
    if !(target_var > 0.0) {
        return Err(Error::Undefined("target is silent in the speech segment; SNR undefined".into()));
    }
    let noise_var = variance(&directional[r][head..]);
    if !(noise_var > 0.0) {
        return Err(Error::Undefined("directional noise is silent; SNR undefined".into()));
    }
    let gain = (target_var / (noise_var * 10f64.powf(spec.directional_snr_db / 10.0))).sqrt();
    let sensor_std = (target_var / 10f64.powf(spec.sensor_snr_db / 10.0)).sqrt();
    let mut rng = stream_rng(scenario.seed, STREAM_SENSOR);
    for ch in directional.iter_mut() {
        for v in ch.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v = *v * gain + sensor_std * e;
        }
    }
    let y: Vec<Vec<f64>> = x
        .iter()
        .zip(&directional)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
        .collect();
    Ok(Mixture {
        y: TimeSignal::new(spec.sample_rate, y)?,
        x: TimeSignal::new(spec.sample_rate, x)?,
        n: TimeSignal::new(spec.sample_rate, directional)?,
        scenario: scenario.clone(),
        geometry: geometry.clone(),
        spec: spec.clone(),
        extra_sources,
    })
}

/// Stationary mixture: one target and one directional noise source.
pub fn mix(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    spec: &MixtureSpec,
    target_wave: &[f64],
    noise_wave: &[f64],
) -> Result<Mixture> {
    spec.validate()?;
    scenario.check_geometry(geometry)?;
    let x = target_image(scenario, geometry, spec, target_wave, &scenario.source_position())?;
    let n = noise_image(scenario, geometry, spec, noise_wave, &scenario.noise_position())?;
    assemble(scenario, geometry, spec, x, n, Vec::new())
}

/// Extra material for the non-stationary noise types. Anything left as
/// `None` is drawn from the scenario's seed.
#[derive(Debug, Clone, Default)]
pub struct VariantInputs<'a> {
    pub target: Option<&'a [f64]>,
    pub noise: Option<&'a [f64]>,
    /// Second talker for `speaker_switch`.
    pub alternate_target: Option<&'a [f64]>,
    /// Angle of the second noise position or second talker.
    pub alternate_theta: Option<f64>,
    /// Babble waveforms (noise or speech depending on type).
    pub babble: Option<&'a [Vec<f64>]>,
    pub babble_positions: Option<Vec<Point3>>,
}

fn sample_angle_away_from<R: Rng + ?Sized>(
    rng: &mut R,
    scenario: &Scenario,
    radius: f64,
    avoid: &[f64],
    min_sep: f64,
) -> Result<f64> {
    let ranges = ScenarioRanges::default();
    for _ in 0..10_000 {
        let t = rng.random_range(ranges.theta.0..=ranges.theta.1);
        if avoid.iter().all(|a| (t - a).abs() >= min_sep) && scenario.contains(&scenario.point_at(t, radius)) {
            return Ok(t);
        }
    }
    Err(Error::Geometry("no valid alternate source angle".into()))
}

fn sample_babble_positions<R: Rng + ?Sized>(
    rng: &mut R,
    scenario: &Scenario,
    count: usize,
) -> Result<Vec<Point3>> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Geometry("cannot place babble sources inside the room".into()));
        }
        let theta = rng.random_range(0.0..360.0);
        let radius = rng.random_range(1.0..3.5);
        let p = scenario.point_at(theta, radius);
        if scenario.contains(&p) && (theta - scenario.source_theta).abs() >= 20.0 {
            out.push(p);
        }
    }
    Ok(out)
}

/// Builds a mixture of the requested noise type. `stationary` is
/// identical to [`mix`]; switches happen hard at the switch sample.
pub fn make_variant(
    kind: NoiseType,
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    spec: &MixtureSpec,
    inputs: &VariantInputs<'_>,
) -> Result<Mixture> {
    spec.validate()?;
    scenario.check_geometry(geometry)?;
    let owned_target;
    let target = match inputs.target {
        Some(t) => t,
        None => {
            owned_target = speech_like(
                spec.target_samples(),
                spec.sample_rate,
                &mut stream_rng(scenario.seed, STREAM_TARGET),
            );
            &owned_target
        }
    };
    let owned_noise;
    let noise = match inputs.noise {
        Some(n) => n,
        None => {
            owned_noise = ar1_noise(
                noise_material_len(spec),
                spec.ar_coeff,
                &mut stream_rng(scenario.seed, STREAM_NOISE),
            )?;
            &owned_noise
        }
    };
    let mut rng = stream_rng(scenario.seed, STREAM_VARIANT);
    let switch = spec.switch_sample();
    match kind {
        NoiseType::Stationary => mix(scenario, geometry, spec, target, noise),
        NoiseType::TimeVaryingNoise => {
            let theta2 = match inputs.alternate_theta {
                Some(t) => t,
                None => sample_angle_away_from(
                    &mut rng,
                    scenario,
                    scenario.noise_r,
                    &[scenario.source_theta, scenario.noise_theta],
                    20.0,
                )?,
            };
            let p2 = scenario.point_at(theta2, scenario.noise_r);
            if !scenario.contains(&p2) {
                return Err(Error::Geometry(format!("second noise position {p2:?} outside room")));
            }
            let x = target_image(scenario, geometry, spec, target, &scenario.source_position())?;
            let n1 = noise_image(scenario, geometry, spec, noise, &scenario.noise_position())?;
            let n2 = noise_image(scenario, geometry, spec, noise, &p2)?;
            assemble(scenario, geometry, spec, x, hard_switch(n1, n2, switch), vec![p2])
        }
        NoiseType::SpeakerSwitch => {
            let theta2 = match inputs.alternate_theta {
                Some(t) => t,
                None => sample_angle_away_from(
                    &mut rng,
                    scenario,
                    scenario.source_r,
                    &[scenario.noise_theta, scenario.source_theta],
                    20.0,
                )?,
            };
            let owned_alt;
            let alt = match inputs.alternate_target {
                Some(a) => a,
                None => {
                    owned_alt = speech_like(spec.target_samples(), spec.sample_rate, &mut rng);
                    &owned_alt
                }
            };
            let p2 = scenario.point_at(theta2, scenario.source_r);
            if !scenario.contains(&p2) {
                return Err(Error::Geometry(format!("second talker position {p2:?} outside room")));
            }
            let x1 = target_image(scenario, geometry, spec, target, &scenario.source_position())?;
            let x2 = target_image(scenario, geometry, spec, alt, &p2)?;
            let n = noise_image(scenario, geometry, spec, noise, &scenario.noise_position())?;
            assemble(scenario, geometry, spec, hard_switch(x1, x2, switch), n, vec![p2])
        }
        NoiseType::BabbleNoise | NoiseType::BabbleVoice => {
            let count = spec.babble_count;
            let generated: Vec<Vec<f64>>;
            let sources: &[Vec<f64>] = match inputs.babble {
                Some(b) => {
                    if b.len() < count {
                        return Err(Error::Input(format!(
                            "babble needs {count} source waveforms, got {}",
                            b.len()
                        )));
                    }
                    &b[..count]
                }
                None => {
                    generated = (0..count)
                        .map(|_| {
                            if kind == NoiseType::BabbleNoise {
                                ar1_noise(noise_material_len(spec), spec.ar_coeff, &mut rng)
                            } else {
                                Ok(speech_like(noise_material_len(spec), spec.sample_rate, &mut rng))
                            }
                        })
                        .collect::<Result<_>>()?;
                    &generated
                }
            };
            let positions = match &inputs.babble_positions {
                Some(p) if p.len() >= count => p[..count].to_vec(),
                Some(p) => {
                    return Err(Error::Input(format!(
                        "babble needs {count} positions, got {}",
                        p.len()
                    )))
                }
                None => sample_babble_positions(&mut rng, scenario, count)?,
            };
            let x = target_image(scenario, geometry, spec, target, &scenario.source_position())?;
            let images = sources
                .iter()
                .zip(&positions)
                .map(|(w, p)| noise_image(scenario, geometry, spec, w, p))
                .collect::<Result<Vec<_>>>()?;
            assemble(scenario, geometry, spec, x, sum_images(images), positions)
        }
    }
}

/// Mixture built entirely from synthetic material drawn from the
/// scenario's seed, using the scenario's own noise type.
pub fn synthetic_mixture(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    spec: &MixtureSpec,
) -> Result<Mixture> {
    make_variant(scenario.noise_type, scenario, geometry, spec, &VariantInputs::default())
}
