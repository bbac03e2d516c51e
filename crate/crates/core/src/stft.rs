//! Short-time Fourier analysis/synthesis and the real/imaginary packing
//! used at component boundaries.
//!
//! Only frames lying entirely inside the waveform are produced; the
//! waveform is never padded. Synthesis normalizes by the accumulated
//! analysis*synthesis window so reconstruction is exact wherever the
//! window sum is non-zero, which covers every sample except those where
//! the square-root Hann window itself vanishes.

use std::f64::consts::PI;

use ndarray::{Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSignal;

/// Absolute tolerance on the imaginary part of the DC and Nyquist bins.
pub const REALNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Square-root periodic Hann for both analysis and synthesis.
    SqrtHann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::SqrtHann => (0..len)
                .map(|n| (0.5 * (1.0 - (2.0 * PI * n as f64 / len as f64).cos())).sqrt())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 512,
            hop: 128,
            window: Window::SqrtHann,
            sample_rate: 16000,
        }
    }
}

impl StftConfig {
    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of full frames in a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    /// Number of frames whose analysis window lies entirely within the
    /// first `samples` samples.
    pub fn frames_within(&self, samples: usize) -> usize {
        self.num_frames(samples)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return Err(Error::Config(format!(
                "frame length {} must be even and at least 2",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len || self.frame_len % self.hop != 0 {
            return Err(Error::Config(format!(
                "hop {} must divide frame length {}",
                self.hop, self.frame_len
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        let dev = self.cola_deviation();
        if dev > 1e-12 {
            return Err(Error::Config(format!(
                "window pair is not constant-overlap-add at hop {} (deviation {dev:e})",
                self.hop
            )));
        }
        Ok(())
    }

    /// Overlap-added analysis*synthesis window over one hop period.
    pub fn cola_sum(&self) -> Vec<f64> {
        let w = self.window.coefficients(self.frame_len);
        (0..self.hop)
            .map(|n| {
                (n..self.frame_len)
                    .step_by(self.hop)
                    .map(|i| w[i] * w[i])
                    .sum()
            })
            .collect()
    }

    /// Maximum relative deviation of the overlap-added window from its mean.
    pub fn cola_deviation(&self) -> f64 {
        let s = self.cola_sum();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter()
            .map(|v| (v - mean).abs() / mean)
            .fold(0.0, f64::max)
    }
}

/// Complex STFT coefficients, shape channels x bins x frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array3<Complex64>,
    pub config: StftConfig,
    /// Length of the waveform this spectrogram was computed from.
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn new(data: Array3<Complex64>, config: StftConfig, signal_len: usize) -> Result<Self> {
        let (_, k, l) = data.dim();
        if k != config.num_bins() {
            return Err(Error::Shape(format!(
                "{k} bins, expected {} for frame length {}",
                config.num_bins(),
                config.frame_len
            )));
        }
        if l > 0 && (l - 1) * config.hop + config.frame_len > signal_len {
            return Err(Error::Shape(format!(
                "{l} frames do not fit in a signal of {signal_len} samples"
            )));
        }
        Ok(Self {
            data,
            config,
            signal_len,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn num_bins(&self) -> usize {
        self.data.dim().1
    }

    pub fn num_frames(&self) -> usize {
        self.data.dim().2
    }

    /// Bins x frames view of one channel.
    pub fn channel(&self, m: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), m)
    }

    /// Spectral energy compensated for the one-sided spectrum, the DFT
    /// scale and the overlap of the analysis windows. Equals the energy
    /// of the waveform samples covered by a full set of overlapping frames.
    pub fn energy(&self) -> f64 {
        let n = self.config.frame_len as f64;
        let kk = self.num_bins();
        let cola = self.config.cola_sum().iter().sum::<f64>() / self.config.hop as f64;
        let mut total = 0.0;
        for ((_, k, _), v) in self.data.indexed_iter() {
            let w = if k == 0 || k == kk - 1 { 1.0 } else { 2.0 };
            total += w * v.norm_sqr();
        }
        total / (n * cola)
    }
}

/// Forward STFT of every channel.
pub fn analyze(signal: &TimeSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if signal.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "signal sample rate {} Hz does not match STFT configuration {} Hz",
            signal.sample_rate, cfg.sample_rate
        )));
    }
    let len = signal.len();
    if len < cfg.frame_len {
        return Err(Error::SignalTooShort {
            len,
            required: cfg.frame_len,
        });
    }
    if !signal.is_finite() {
        return Err(Error::Input("signal contains non-finite samples".into()));
    }
    let n = cfg.frame_len;
    let kk = cfg.num_bins();
    let frames = cfg.num_frames(len);
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut data = Array3::<Complex64>::zeros((signal.num_channels(), kk, frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (m, x) in signal.channels().iter().enumerate() {
        for l in 0..frames {
            let start = l * cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(x[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            for k in 0..kk {
                data[[m, k, l]] = buf[k];
            }
            data[[m, 0, l]].im = 0.0;
            data[[m, kk - 1, l]].im = 0.0;
        }
    }
    Spectrogram::new(data, *cfg, len)
}

/// Checks the DC/Nyquist realness rule and returns the largest offending
/// imaginary part, if any exceeds the tolerance.
pub fn check_edge_realness(data: &Array3<Complex64>) -> Result<()> {
    let kk = data.dim().1;
    for &bin in &[0, kk - 1] {
        let worst = data
            .index_axis(Axis(1), bin)
            .iter()
            .map(|v| v.im.abs())
            .fold(0.0, f64::max);
        if worst > REALNESS_TOL {
            return Err(Error::Realness { bin, imag: worst });
        }
    }
    Ok(())
}

/// Inverse STFT by weighted overlap-add.
pub fn synthesize(spec: &Spectrogram) -> Result<TimeSignal> {
    let cfg = spec.config;
    cfg.validate()?;
    check_edge_realness(&spec.data)?;
    let n = cfg.frame_len;
    let kk = spec.num_bins();
    let frames = spec.num_frames();
    let window = cfg.window.coefficients(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let out_len = spec.signal_len;

    let mut wsum = vec![0.0; out_len];
    for l in 0..frames {
        for i in 0..n {
            wsum[l * cfg.hop + i] += window[i] * window[i];
        }
    }
    let peak = cfg.cola_sum().into_iter().fold(0.0, f64::max);
    let floor = 1e-10 * peak;

    let mut channels = Vec::with_capacity(spec.num_channels());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..spec.num_channels() {
        let mut y = vec![0.0; out_len];
        for l in 0..frames {
            for k in 0..kk {
                buf[k] = spec.data[[m, k, l]];
            }
            buf[0].im = 0.0;
            buf[kk - 1].im = 0.0;
            for k in 1..kk - 1 {
                buf[n - k] = spec.data[[m, k, l]].conj();
            }
            ifft.process(&mut buf);
            let start = l * cfg.hop;
            for i in 0..n {
                y[start + i] += buf[i].re / n as f64 * window[i];
            }
        }
        for (v, &s) in y.iter_mut().zip(&wsum) {
            *v = if s > floor { *v / s } else { 0.0 };
        }
        channels.push(y);
    }
    TimeSignal::new(cfg.sample_rate, channels)
}

/// Stacks real parts over imaginary parts along the bin axis:
/// channels x 2K x frames.
pub fn pack_real_imag(spec: &Spectrogram) -> Array3<f64> {
    let (m, kk, l) = spec.data.dim();
    let mut out = Array3::<f64>::zeros((m, 2 * kk, l));
    for ((c, k, t), v) in spec.data.indexed_iter() {
        out[[c, k, t]] = v.re;
        out[[c, kk + k, t]] = v.im;
    }
    out
}

/// Inverse of [`pack_real_imag`].
pub fn unpack_real_imag(
    packed: &Array3<f64>,
    config: StftConfig,
    signal_len: usize,
) -> Result<Spectrogram> {
    let (m, rows, l) = packed.dim();
    if rows % 2 != 0 {
        return Err(Error::Shape(format!(
            "packed bin dimension {rows} is odd"
        )));
    }
    let kk = rows / 2;
    let mut data = Array3::<Complex64>::zeros((m, kk, l));
    for ((c, k, t), v) in data.indexed_iter_mut() {
        *v = Complex64::new(packed[[c, k, t]], packed[[c, kk + k, t]]);
    }
    Spectrogram::new(data, config, signal_len)
}
