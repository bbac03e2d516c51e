//! Sampled real-valued waveforms and WAV input/output.

use std::path::Path;

use hound::{SampleFormat, WavSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued, possibly multichannel waveform. Channels are stored
/// separately and always have equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    pub sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl TimeSignal {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Input("signal has no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels have unequal lengths".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        Ok(Self {
            sample_rate,
            channels,
        })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn zeros(sample_rate: u32, num_channels: usize, len: usize) -> Self {
        Self {
            sample_rate,
            channels: vec![vec![0.0; len]; num_channels.max(1)],
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channel_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Copy of a single channel as a mono signal.
    pub fn select(&self, m: usize) -> Result<TimeSignal> {
        let ch = self
            .channels
            .get(m)
            .ok_or_else(|| Error::Input(format!("channel {m} out of range")))?;
        TimeSignal::mono(self.sample_rate, ch.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().flatten().all(|v| v.is_finite())
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = hound::WavReader::open(path.as_ref())?;
        let spec = reader.spec();
        let nch = spec.channels as usize;
        let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()?,
            (SampleFormat::Int, 16) => reader
                .samples::<i16>()
                .map(|s| s.map(|v| v as f64 / 32768.0))
                .collect::<std::result::Result<_, _>>()?,
            (fmt, bits) => {
                return Err(Error::Format(format!(
                    "unsupported WAV sample format {fmt:?} with {bits} bits"
                )))
            }
        };
        let frames = interleaved.len() / nch;
        let mut channels = vec![Vec::with_capacity(frames); nch];
        for frame in interleaved.chunks_exact(nch) {
            for (c, &v) in channels.iter_mut().zip(frame) {
                c.push(v);
            }
        }
        Self::new(spec.sample_rate, channels)
    }

    /// Reads a WAV file and checks its rate against the expected one.
    pub fn read_wav_at(path: impl AsRef<Path>, sample_rate: u32) -> Result<Self> {
        let sig = Self::read_wav(path.as_ref())?;
        if sig.sample_rate != sample_rate {
            return Err(Error::Input(format!(
                "{}: sample rate {} Hz, expected {} Hz",
                path.as_ref().display(),
                sig.sample_rate,
                sample_rate
            )));
        }
        Ok(sig)
    }

    pub fn write_wav(&self, path: impl AsRef<Path>, format: WavFormat) -> Result<()> {
        let spec = WavSpec {
            channels: self.num_channels() as u16,
            sample_rate: self.sample_rate,
            bits_per_sample: match format {
                WavFormat::Pcm16 => 16,
                WavFormat::Float32 => 32,
            },
            sample_format: match format {
                WavFormat::Pcm16 => SampleFormat::Int,
                WavFormat::Float32 => SampleFormat::Float,
            },
        };
        let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
        for t in 0..self.len() {
            for ch in &self.channels {
                match format {
                    WavFormat::Float32 => writer.write_sample(ch[t] as f32)?,
                    WavFormat::Pcm16 => {
                        let v = (ch[t] * 32768.0).round().clamp(-32768.0, 32767.0);
                        writer.write_sample(v as i16)?
                    }
                }
            }
        }
        writer.finalize()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
