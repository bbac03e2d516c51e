//! Spatial covariance estimation, noise whitening and RTF estimation.
//!
//! The RTF of a bin is the principal eigenvector of the noise-whitened
//! noisy covariance, mapped back through the noise covariance's square
//! root and normalized so the reference entry is exactly one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::Spectrogram;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative eigenvalue floor applied before taking (inverse) square roots.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Relative tolerance on ||A - A^H||_F / ||A||_F.
pub const HERMITIAN_TOL: f64 = 1e-9;
/// Relative magnitude below which the reference entry of the de-whitened
/// eigenvector is treated as zero.
pub const DEGENERATE_REF: f64 = 1e-12;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Noise and noisy covariances for every frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub phi_nn: Vec<CMatrix>,
    pub phi_yy: Vec<CMatrix>,
    pub noise_frames: usize,
    pub total_frames: usize,
}

impl CovarianceSet {
    /// Noise statistics from frames [0, noise_frames), noisy statistics
    /// from [noise_frames, L).
    pub fn estimate(spec: &Spectrogram, noise_frames: usize) -> Result<Self> {
        Ok(Self {
            phi_nn: noise_covariance(spec, noise_frames)?,
            phi_yy: noisy_covariance(spec, noise_frames)?,
            noise_frames,
            total_frames: spec.num_frames(),
        })
    }
}

/// Observation vector y(l, k) across channels.
pub fn frame_vector(spec: &Spectrogram, k: usize, l: usize) -> CVector {
    CVector::from_iterator(spec.num_channels(), (0..spec.num_channels()).map(|m| spec.data[[m, k, l]]))
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Average of y y^H over frames `start..end` for every bin.
pub fn covariance_over(spec: &Spectrogram, start: usize, end: usize) -> Result<Vec<CMatrix>> {
    if start >= end || end > spec.num_frames() {
        return Err(Error::Estimation(format!(
            "empty or out-of-range frame range [{start}, {end}) for {} frames",
            spec.num_frames()
        )));
    }
    let m = spec.num_channels();
    let scale = Complex64::new(1.0 / (end - start) as f64, 0.0);
    Ok((0..spec.num_bins())
        .into_par_iter()
        .map(|k| {
            let mut acc = CMatrix::zeros(m, m);
            for l in start..end {
                let y = frame_vector(spec, k, l);
                acc += &y * y.adjoint();
            }
            hermitian_part(&(acc * scale))
        })
        .collect())
}

/// Noise covariance from the first `noise_frames` frames.
pub fn noise_covariance(spec: &Spectrogram, noise_frames: usize) -> Result<Vec<CMatrix>> {
    if noise_frames == 0 {
        return Err(Error::Estimation("noise covariance needs at least one noise-only frame".into()));
    }
    if noise_frames > spec.num_frames() {
        return Err(Error::Estimation(format!(
            "{noise_frames} noise frames requested but the utterance has {}",
            spec.num_frames()
        )));
    }
    covariance_over(spec, 0, noise_frames)
}

/// Noisy covariance from frames `noise_frames..L`.
pub fn noisy_covariance(spec: &Spectrogram, noise_frames: usize) -> Result<Vec<CMatrix>> {
    covariance_over(spec, noise_frames, spec.num_frames())
}

pub fn check_hermitian(a: &CMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Input(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    let norm = a.norm();
    let skew = (a - a.adjoint()).norm();
    if skew > HERMITIAN_TOL * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Input(format!(
            "matrix is not Hermitian (relative skew {:e})",
            skew / norm
        )));
    }
    if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues in descending
/// order with matching eigenvector columns.
pub fn eigh(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    check_hermitian(a)?;
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok((values, vectors))
}

/// V f(D) V^H with eigenvalues clamped to EIGEN_FLOOR * max eigenvalue.
fn spectral_function(phi: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    let (values, v) = eigh(phi)?;
    let max = values.first().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return Err(Error::Input("matrix has no positive eigenvalue".into()));
    }
    let floor = EIGEN_FLOOR * max;
    let d = DVector::from_iterator(
        values.len(),
        values.iter().map(|&e| Complex64::new(f(e.max(floor)), 0.0)),
    );
    let vd = CMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * d[j]);
    Ok(vd * v.adjoint())
}

/// Phi^{-1/2} = V D^{-1/2} V^H.
pub fn inverse_sqrt(phi: &CMatrix) -> Result<CMatrix> {
    spectral_function(phi, |e| 1.0 / e.sqrt())
}

/// Phi^{1/2} = V D^{1/2} V^H.
pub fn sqrt_psd(phi: &CMatrix) -> Result<CMatrix> {
    spectral_function(phi, f64::sqrt)
}

/// Phi_nn^{-1/2} Phi_yy Phi_nn^{-H/2}.
pub fn whitened_covariance(phi_yy: &CMatrix, phi_nn: &CMatrix) -> Result<CMatrix> {
    check_hermitian(phi_yy)?;
    let w = inverse_sqrt(phi_nn)?;
    Ok(hermitian_part(&(&w * phi_yy * w.adjoint())))
}

/// Relative transfer functions for all bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RtfVector {
    pub h: Vec<CVector>,
    pub reference_index: usize,
    /// Bins whose reference entry vanished; those carry e_ref.
    pub degenerate: Vec<bool>,
}

impl RtfVector {
    pub fn num_bins(&self) -> usize {
        self.h.len()
    }

    pub fn num_degenerate(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

/// RTF of a single bin. Returns the vector and whether the bin was degenerate.
pub fn estimate_rtf_bin(
    phi_yy: &CMatrix,
    phi_nn: &CMatrix,
    reference_index: usize,
) -> Result<(CVector, bool)> {
    let m = phi_nn.nrows();
    if m < 2 {
        return Err(Error::Input("RTF estimation needs at least two channels".into()));
    }
    if reference_index >= m || phi_yy.nrows() != m {
        return Err(Error::Shape(format!(
            "covariances {}x{} / {}x{} with reference {reference_index}",
            phi_yy.nrows(),
            phi_yy.ncols(),
            m,
            m
        )));
    }
    let white = whitened_covariance(phi_yy, phi_nn)?;
    let (_, vectors) = eigh(&white)?;
    let f = vectors.column(0).into_owned();
    let f_tilde = sqrt_psd(phi_nn)? * f;
    let r = f_tilde[reference_index];
    if r.norm() < DEGENERATE_REF * f_tilde.norm() || r.norm() == 0.0 {
        let mut e = CVector::zeros(m);
        e[reference_index] = ONE;
        return Ok((e, true));
    }
    let mut h = f_tilde / r;
    h[reference_index] = ONE;
    Ok((h, false))
}

/// Per-bin RTF estimate from noisy and noise covariances.
pub fn estimate_rtf(
    phi_yy: &[CMatrix],
    phi_nn: &[CMatrix],
    reference_index: usize,
) -> Result<RtfVector> {
    if phi_yy.len() != phi_nn.len() {
        return Err(Error::Shape(format!(
            "{} noisy vs {} noise covariance bins",
            phi_yy.len(),
            phi_nn.len()
        )));
    }
    let results: Vec<(CVector, bool)> = phi_yy
        .par_iter()
        .zip(phi_nn.par_iter())
        .map(|(yy, nn)| estimate_rtf_bin(yy, nn, reference_index))
        .collect::<Result<_>>()?;
    let degenerate: Vec<bool> = results.iter().map(|r| r.1).collect();
    let n_bad = degenerate.iter().filter(|&&d| d).count();
    if n_bad > 0 {
        log::warn!("{n_bad} bins had a vanishing reference entry; using e_ref there");
    }
    Ok(RtfVector {
        h: results.into_iter().map(|r| r.0).collect(),
        reference_index,
        degenerate,
    })
}

/// Complex value as [re, im].
pub type JsonComplex = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceJson {
    pub noise_frames: usize,
    pub total_frames: usize,
    /// bins x rows x cols
    pub phi_nn: Vec<Vec<Vec<JsonComplex>>>,
    pub phi_yy: Vec<Vec<Vec<JsonComplex>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfJson {
    pub reference_index: usize,
    /// bins x channels
    pub h: Vec<Vec<JsonComplex>>,
    pub degenerate: Vec<bool>,
}

fn matrix_json(a: &CMatrix) -> Vec<Vec<JsonComplex>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect())
        .collect()
}

impl From<&CovarianceSet> for CovarianceJson {
    fn from(c: &CovarianceSet) -> Self {
        Self {
            noise_frames: c.noise_frames,
            total_frames: c.total_frames,
            phi_nn: c.phi_nn.iter().map(matrix_json).collect(),
            phi_yy: c.phi_yy.iter().map(matrix_json).collect(),
        }
    }
}

impl From<&RtfVector> for RtfJson {
    fn from(r: &RtfVector) -> Self {
        Self {
            reference_index: r.reference_index,
            h: r.h.iter().map(|v| v.iter().map(|c| [c.re, c.im]).collect()).collect(),
            degenerate: r.degenerate.clone(),
        }
    }
}
