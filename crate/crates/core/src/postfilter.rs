//! Single-channel log-spectral amplitude (LSA) postfilter with a
//! decision-directed a-priori SNR estimate.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::Spectrogram;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral E1(x) for x > 0. Power series up to x = 1,
/// Lentz continued fraction above.
pub fn expint_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x > 700.0 {
        return 0.0;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 1..100 {
            term *= -x / n as f64;
            let add = term / n as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return -EULER_GAMMA - x.ln() - sum;
    }
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// LSA gain for a-priori SNR `xi` and a-posteriori SNR `gamma`, unclamped.
pub fn lsa_gain(xi: f64, gamma: f64) -> f64 {
    if xi <= 0.0 {
        return 0.0;
    }
    let v = xi * gamma / (1.0 + xi);
    if v <= 0.0 {
        return 0.0;
    }
    xi / (1.0 + xi) * (0.5 * expint_e1(v)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePsdSource {
    /// Mean periodogram of the noise-only head frames.
    OracleHead,
    /// Supplied by the caller.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostfilterConfig {
    pub alpha_dd: f64,
    pub gain_floor_db: f64,
    pub noise_psd_source: NoisePsdSource,
}

impl Default for PostfilterConfig {
    fn default() -> Self {
        Self {
            alpha_dd: 0.98,
            gain_floor_db: -18.0,
            noise_psd_source: NoisePsdSource::OracleHead,
        }
    }
}

impl PostfilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha_dd) {
            return Err(Error::Config(format!("alpha_dd {} must lie in [0, 1)", self.alpha_dd)));
        }
        if !(self.gain_floor_db < 0.0) {
            return Err(Error::Config(format!(
                "gain floor {} dB must be negative",
                self.gain_floor_db
            )));
        }
        Ok(())
    }

    pub fn gain_floor(&self) -> f64 {
        10f64.powf(self.gain_floor_db / 20.0)
    }
}

fn single_channel(x: &Spectrogram) -> Result<()> {
    if x.num_channels() != 1 {
        return Err(Error::Shape(format!(
            "postfilter input has {} channels, expected 1",
            x.num_channels()
        )));
    }
    Ok(())
}

/// Per-bin noise power as the mean |X|^2 over the first `frames` frames.
pub fn noise_psd_from_head(x: &Spectrogram, frames: usize) -> Result<Vec<f64>> {
    single_channel(x)?;
    if frames == 0 || frames > x.num_frames() {
        return Err(Error::Estimation(format!(
            "noise PSD needs 1..={} head frames, got {frames}",
            x.num_frames()
        )));
    }
    Ok((0..x.num_bins())
        .map(|k| (0..frames).map(|l| x.data[[0, k, l]].norm_sqr()).sum::<f64>() / frames as f64)
        .collect())
}

/// Clamped LSA gains (bins x frames). The decision-directed recursion
/// starts fresh on every call.
pub fn lsa_gains(x: &Spectrogram, noise_psd: &[f64], cfg: &PostfilterConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    single_channel(x)?;
    let (_, kk, frames) = x.data.dim();
    if noise_psd.len() != kk {
        return Err(Error::Shape(format!("noise PSD has {} bins, input has {kk}", noise_psd.len())));
    }
    if let Some(v) = noise_psd.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Input(format!("noise PSD must be finite and non-negative, got {v}")));
    }
    let floor = cfg.gain_floor();
    let alpha = cfg.alpha_dd;
    let mut gains = Array2::<f64>::ones((kk, frames));
    for k in 0..kk {
        let lambda = noise_psd[k];
        if lambda == 0.0 {
            continue;
        }
        let mut prev_clean = 0.0;
        for l in 0..frames {
            let gamma = x.data[[0, k, l]].norm_sqr() / lambda;
            let ml = (gamma - 1.0).max(0.0);
            let xi = if l == 0 {
                ml
            } else {
                alpha * prev_clean / lambda + (1.0 - alpha) * ml
            };
            let g = lsa_gain(xi, gamma).clamp(floor, 1.0);
            gains[[k, l]] = g;
            prev_clean = g * g * x.data[[0, k, l]].norm_sqr();
        }
    }
    Ok(gains)
}

/// Applies the LSA gain to a single-channel spectrogram.
pub fn lsa_enhance(x: &Spectrogram, noise_psd: &[f64], cfg: &PostfilterConfig) -> Result<Spectrogram> {
    let gains = lsa_gains(x, noise_psd, cfg)?;
    let mut out = x.data.clone();
    for ((_, k, l), v) in out.indexed_iter_mut() {
        *v *= gains[[k, l]];
    }
    Spectrogram::new(out, x.config, x.signal_len)
}

/// Gains as a complex stage-2 mask.
pub fn gains_as_mask(gains: &Array2<f64>) -> Array2<Complex64> {
    gains.mapv(|g| Complex64::new(g, 0.0))
}
