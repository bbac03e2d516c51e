//! Evaluation measures: SI-SDR, noise reduction (NR), and the offline
//! time-domain losses of the two-stage model.

use serde::{Deserialize, Serialize};

use crate::beamformer::{apply_stage1, StageWeights};
use crate::error::{Error, Result};
use crate::signal::{variance, TimeSignal};
use crate::stft::{analyze, synthesize, StftConfig};

/// Reported dB values are clamped to +-60 dB.
pub const DB_CLAMP: f64 = 60.0;

fn clamp_db(v: f64) -> f64 {
    if v.is_nan() {
        return -DB_CLAMP;
    }
    v.clamp(-DB_CLAMP, DB_CLAMP)
}

/// Scale-invariant SDR in dB: est is projected onto ref, the residual is
/// everything else.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if !(ref_energy > 0.0) {
        return Err(Error::Undefined("SI-SDR with an all-zero reference".into()));
    }
    let dot: f64 = reference.iter().zip(estimate).map(|(r, e)| r * e).sum();
    let alpha = dot / ref_energy;
    let (mut target, mut residual) = (0.0, 0.0);
    for (r, e) in reference.iter().zip(estimate) {
        let t = alpha * r;
        target += t * t;
        residual += (e - t) * (e - t);
    }
    if residual == 0.0 {
        return Ok(DB_CLAMP);
    }
    if target == 0.0 {
        return Ok(-DB_CLAMP);
    }
    Ok(clamp_db(10.0 * (target / residual).log10()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrValue {
    pub db: f64,
    /// Set when the noise segment had zero variance.
    pub clamped: bool,
}

/// 10 log10(var(speech segment) / var(noise-only head)).
pub fn nr(estimate: &[f64], sample_rate: u32, head_s: f64, tail_s: f64) -> Result<NrValue> {
    let head = (head_s * sample_rate as f64).round() as usize;
    let tail = (tail_s * sample_rate as f64).round() as usize;
    if head == 0 || tail == 0 {
        return Err(Error::Config("NR segments must be non-empty".into()));
    }
    if estimate.len() < head + tail {
        return Err(Error::SignalTooShort {
            len: estimate.len(),
            required: head + tail,
        });
    }
    let noise = variance(&estimate[..head]);
    let speech = variance(&estimate[head..head + tail]);
    if noise == 0.0 {
        return Ok(NrValue {
            db: DB_CLAMP,
            clamped: true,
        });
    }
    if speech == 0.0 {
        return Ok(NrValue {
            db: -DB_CLAMP,
            clamped: true,
        });
    }
    let db = 10.0 * (speech / noise).log10();
    Ok(NrValue {
        db: clamp_db(db),
        clamped: db.abs() > DB_CLAMP,
    })
}

/// Weights of the combined loss; they must sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mae: f64,
    pub reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mae: 0.9, reg: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.mae < 0.0 || self.reg < 0.0 || (self.mae + self.reg - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "loss weights {} + {} must be non-negative and sum to 1",
                self.mae, self.reg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub mae: f64,
    pub reg: Option<f64>,
    pub combined: f64,
}

pub fn mean_abs_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Input("empty signals".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// The distortionless-path signal x_d = istft(w1^H stft(x)) for a clean
/// multichannel target x.
pub fn distortionless_path(w1: &StageWeights, clean: &TimeSignal, cfg: &StftConfig) -> Result<Vec<f64>> {
    let spec = analyze(clean, cfg)?;
    let out = synthesize(&apply_stage1(&w1.without_mask(), &spec)?)?;
    Ok(out.into_channels().swap_remove(0))
}

/// mae = mean|x_ref - x^|; reg = mean|x_ref - x_d| when the stage-1
/// weights and the clean multichannel target are given. Without them the
/// combined value is the plain MAE.
pub fn losses(
    x_ref: &[f64],
    estimate: &[f64],
    stage1: Option<(&StageWeights, &TimeSignal, &StftConfig)>,
    weights: &LossWeights,
) -> Result<Losses> {
    weights.validate()?;
    let mae = mean_abs_error(x_ref, estimate)?;
    let reg = match stage1 {
        Some((w1, clean, cfg)) => Some(mean_abs_error(x_ref, &distortionless_path(w1, clean, cfg)?)?),
        None => None,
    };
    let combined = match reg {
        Some(r) => weights.mae * mae + weights.reg * r,
        None => mae,
    };
    Ok(Losses { mae, reg, combined })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub si_sdr_in_db: f64,
    pub si_sdr_db: f64,
    pub delta_si_sdr_db: f64,
    pub nr_in_db: f64,
    pub nr_db: f64,
    pub delta_nr_db: f64,
    pub nr_clamped: bool,
    pub mae: f64,
    #[serde(default)]
    pub reg: Option<f64>,
    pub combined_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Self {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub si_sdr_db: Summary,
    pub delta_si_sdr_db: Summary,
    pub nr_db: Summary,
    pub delta_nr_db: Summary,
    pub mae: Summary,
    pub combined_loss: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub loss_weights: LossWeights,
    pub utterances: Vec<UtteranceMetrics>,
    pub failures: Vec<Failure>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}

impl EvalReport {
    pub fn new(
        method: impl Into<String>,
        loss_weights: LossWeights,
        mut utterances: Vec<UtteranceMetrics>,
        mut failures: Vec<Failure>,
    ) -> Self {
        utterances.sort_by(|a, b| a.id.cmp(&b.id));
        failures.sort_by(|a, b| a.id.cmp(&b.id));
        let col = |f: fn(&UtteranceMetrics) -> f64| Summary::of(&utterances.iter().map(f).collect::<Vec<_>>());
        let aggregate = Aggregate {
            count: utterances.len(),
            si_sdr_db: col(|u| u.si_sdr_db),
            delta_si_sdr_db: col(|u| u.delta_si_sdr_db),
            nr_db: col(|u| u.nr_db),
            delta_nr_db: col(|u| u.delta_nr_db),
            mae: col(|u| u.mae),
            combined_loss: col(|u| u.combined_loss),
        };
        Self {
            method: method.into(),
            loss_weights,
            utterances,
            failures,
            aggregate,
        }
    }
}

/// Metrics of an estimate against the clean reference and the noisy input.
pub fn evaluate_utterance(
    id: &str,
    x_ref: &[f64],
    noisy_ref: &[f64],
    estimate: &[f64],
    sample_rate: u32,
    head_s: f64,
    tail_s: f64,
    stage1: Option<(&StageWeights, &TimeSignal, &StftConfig)>,
    loss_weights: &LossWeights,
) -> Result<UtteranceMetrics> {
    let si_in = si_sdr(x_ref, noisy_ref)?;
    let si_out = si_sdr(x_ref, estimate)?;
    let nr_in = nr(noisy_ref, sample_rate, head_s, tail_s)?;
    let nr_out = nr(estimate, sample_rate, head_s, tail_s)?;
    let l = losses(x_ref, estimate, stage1, loss_weights)?;
    Ok(UtteranceMetrics {
        id: id.to_string(),
        si_sdr_in_db: si_in,
        si_sdr_db: si_out,
        delta_si_sdr_db: si_out - si_in,
        nr_in_db: nr_in.db,
        nr_db: nr_out.db,
        delta_nr_db: nr_out.db - nr_in.db,
        nr_clamped: nr_out.clamped || nr_in.clamped,
        mae: l.mae,
        reg: l.reg,
        combined_loss: l.combined,
    })
}
