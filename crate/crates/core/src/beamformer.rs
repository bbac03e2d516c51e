//! Distortionless beamformer design and the two-stage application
//! operators: a time-invariant multichannel filter followed by an
//! optional time-varying single-channel mask.

use nalgebra::linalg::Cholesky;
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{eigh, hermitian_part, CMatrix, CVector, RtfVector, EIGEN_FLOOR};
use crate::error::{Error, Result};
use crate::stft::Spectrogram;

/// Imaginary parts up to this size at the DC and Nyquist bins of loaded or
/// designed weights are zeroed; larger ones are rejected.
pub const WEIGHT_REALNESS_TOL: f64 = 1e-6;
/// Bound on learned mask magnitudes.
pub const MASK_MAGNITUDE_BOUND: f64 = 1.0 + 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Mvdr,
    Mpdr,
    Learned,
}

/// Stage-1 beamformer (bins x mics) and optional stage-2 mask (bins x frames).
#[derive(Debug, Clone, PartialEq)]
pub struct StageWeights {
    w1: Array2<Complex64>,
    w2: Option<Array2<Complex64>>,
    pub sample_rate: Option<u32>,
    pub provenance: Provenance,
}

fn project_edge_bins(a: &mut Array2<Complex64>, what: &str) -> Result<()> {
    let kk = a.nrows();
    for &bin in &[0, kk - 1] {
        for v in a.index_axis_mut(Axis(0), bin).iter_mut() {
            if v.im.abs() > WEIGHT_REALNESS_TOL {
                log::debug!("{what}: imaginary part {} at bin {bin}", v.im);
                return Err(Error::Realness {
                    bin,
                    imag: v.im.abs(),
                });
            }
            v.im = 0.0;
        }
    }
    Ok(())
}

impl StageWeights {
    /// Validates and normalizes the weights: imaginary parts at bins 0 and
    /// K-1 are zeroed when within tolerance, learned masks must be bounded.
    pub fn new(
        mut w1: Array2<Complex64>,
        mut w2: Option<Array2<Complex64>>,
        sample_rate: Option<u32>,
        provenance: Provenance,
    ) -> Result<Self> {
        let (kk, m) = w1.dim();
        if kk < 2 || m == 0 {
            return Err(Error::Shape(format!("stage-1 weights are {kk}x{m}")));
        }
        if w1.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Input("stage-1 weights are not finite".into()));
        }
        project_edge_bins(&mut w1, "stage-1 weights")?;
        if let Some(mask) = w2.as_mut() {
            if mask.nrows() != kk {
                return Err(Error::Shape(format!(
                    "mask has {} bins, beamformer has {kk}",
                    mask.nrows()
                )));
            }
            if mask.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Input("mask is not finite".into()));
            }
            project_edge_bins(mask, "mask")?;
            if provenance == Provenance::Learned {
                if let Some(v) = mask.iter().find(|v| v.norm() > MASK_MAGNITUDE_BOUND) {
                    return Err(Error::Input(format!("learned mask magnitude {} exceeds 1", v.norm())));
                }
            }
        }
        Ok(Self {
            w1,
            w2,
            sample_rate,
            provenance,
        })
    }

    /// Stage-1 weights from one vector per bin.
    pub fn from_bins(
        bins: &[CVector],
        sample_rate: Option<u32>,
        provenance: Provenance,
    ) -> Result<Self> {
        let m = bins.first().map(|v| v.len()).unwrap_or(0);
        if bins.iter().any(|v| v.len() != m) {
            return Err(Error::Shape("weight vectors have unequal lengths".into()));
        }
        let w1 = Array2::from_shape_fn((bins.len(), m), |(k, i)| bins[k][i]);
        Self::new(w1, None, sample_rate, provenance)
    }

    pub fn with_mask(self, w2: Array2<Complex64>) -> Result<Self> {
        Self::new(self.w1, Some(w2), self.sample_rate, self.provenance)
    }

    pub fn without_mask(&self) -> Self {
        Self {
            w2: None,
            ..self.clone()
        }
    }

    pub fn w1(&self) -> &Array2<Complex64> {
        &self.w1
    }

    pub fn w2(&self) -> Option<&Array2<Complex64>> {
        self.w2.as_ref()
    }

    pub fn num_bins(&self) -> usize {
        self.w1.nrows()
    }

    pub fn num_mics(&self) -> usize {
        self.w1.ncols()
    }

    /// Mask frame count, zero without a mask.
    pub fn num_frames(&self) -> usize {
        self.w2.as_ref().map_or(0, |w| w.ncols())
    }

    pub fn bin(&self, k: usize) -> CVector {
        CVector::from_iterator(self.num_mics(), self.w1.row(k).iter().copied())
    }
}

/// w = Phi^{-1} h / (h^H Phi^{-1} h) using a Cholesky solve. If the
/// factorization fails the eigenvalues are floored and it is retried once.
pub fn distortionless_bin(phi: &CMatrix, steering: &CVector) -> Result<CVector> {
    if phi.nrows() != steering.len() || !phi.is_square() {
        return Err(Error::Shape(format!(
            "covariance {}x{} vs steering vector of length {}",
            phi.nrows(),
            phi.ncols(),
            steering.len()
        )));
    }
    let herm = hermitian_part(phi);
    let chol = match Cholesky::new(herm.clone()) {
        Some(c) => c,
        None => {
            let (values, _) = eigh(&herm)?;
            let max = values.first().copied().unwrap_or(0.0);
            if !(max > 0.0) {
                return Err(Error::Solver("covariance has no positive eigenvalue".into()));
            }
            let shift = (EIGEN_FLOOR * max - values.last().copied().unwrap_or(0.0)).max(EIGEN_FLOOR * max);
            let loaded = herm + CMatrix::identity(phi.nrows(), phi.nrows()) * Complex64::new(shift, 0.0);
            Cholesky::new(loaded)
                .ok_or_else(|| Error::Solver("covariance is singular after flooring".into()))?
        }
    };
    let x = chol.solve(steering);
    let denom = steering.dotc(&x);
    if !(denom.norm() > 0.0) || !denom.re.is_finite() {
        return Err(Error::Solver("steering vector has zero response".into()));
    }
    Ok(x / denom)
}

/// MVDR weights per bin from the noise covariance and a steering vector
/// (normally the RTF).
pub fn mvdr_weights(phi_nn: &[CMatrix], steering: &[CVector]) -> Result<Vec<CVector>> {
    if phi_nn.len() != steering.len() {
        return Err(Error::Shape(format!(
            "{} covariance bins vs {} steering bins",
            phi_nn.len(),
            steering.len()
        )));
    }
    phi_nn
        .par_iter()
        .zip(steering.par_iter())
        .map(|(p, h)| distortionless_bin(p, h))
        .collect()
}

/// MPDR weights: the same solve on the noisy covariance.
pub fn mpdr_weights(phi_yy: &[CMatrix], steering: &[CVector]) -> Result<Vec<CVector>> {
    mvdr_weights(phi_yy, steering)
}

pub fn mvdr_from_rtf(phi_nn: &[CMatrix], rtf: &RtfVector) -> Result<Vec<CVector>> {
    mvdr_weights(phi_nn, &rtf.h)
}

/// x~(l, k) = w1(k)^H y(l, k). Output has a single channel.
pub fn apply_stage1(weights: &StageWeights, spec: &Spectrogram) -> Result<Spectrogram> {
    let (m, kk, l) = spec.data.dim();
    if weights.num_mics() != m || weights.num_bins() != kk {
        return Err(Error::Shape(format!(
            "weights are {} bins x {} mics, spectrogram is {m} channels x {kk} bins",
            weights.num_bins(),
            weights.num_mics()
        )));
    }
    let w1 = weights.w1();
    let mut out = Array3::<Complex64>::zeros((1, kk, l));
    for k in 0..kk {
        for t in 0..l {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..m {
                acc += w1[[k, c]].conj() * spec.data[[c, k, t]];
            }
            out[[0, k, t]] = acc;
        }
    }
    Spectrogram::new(out, spec.config, spec.signal_len)
}

/// x^(l, k) = w2(l, k)^* x~(l, k).
pub fn apply_stage2(mask: &Array2<Complex64>, stage1: &Spectrogram) -> Result<Spectrogram> {
    let (m, kk, l) = stage1.data.dim();
    if m != 1 {
        return Err(Error::Shape(format!("stage-2 input has {m} channels, expected 1")));
    }
    if mask.dim() != (kk, l) {
        return Err(Error::Shape(format!(
            "mask is {:?}, stage-1 output is {kk} bins x {l} frames",
            mask.dim()
        )));
    }
    let mut out = stage1.data.clone();
    for ((_, k, t), v) in out.indexed_iter_mut() {
        *v *= mask[[k, t]].conj();
    }
    Spectrogram::new(out, stage1.config, stage1.signal_len)
}

/// Stage 1 followed by the mask when one is present.
pub fn apply(weights: &StageWeights, spec: &Spectrogram) -> Result<Spectrogram> {
    let s1 = apply_stage1(weights, spec)?;
    match weights.w2() {
        Some(mask) => apply_stage2(mask, &s1),
        None => Ok(s1),
    }
}
