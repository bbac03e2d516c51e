//! Spatial response of fixed stage-1 weights: narrow-band beampattern
//! B(k, theta) = w1(k)^H h(k, theta) over a circular probe contour and the
//! wide-band beampower P(theta) = sum_k |B(k, theta)|^2.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamformer::StageWeights;
use crate::error::{Error, Result};
use crate::mixer::Mixture;
use crate::pipeline::{design_beamformer, noise_frames_for, DesignMethod};
use crate::room::{atf_grid, ReflectionOrder, RirSettings};
use crate::stft::{analyze, StftConfig};

/// Floor of the normalized dB series; also used for cells with zero power.
pub const DB_FLOOR: f64 = -80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderTag {
    ZeroOrder,
    FullOrder,
    /// A limited order above zero.
    Limited(u32),
}

impl From<ReflectionOrder> for OrderTag {
    fn from(o: ReflectionOrder) -> Self {
        match o {
            ReflectionOrder::Limited(0) => OrderTag::ZeroOrder,
            ReflectionOrder::Limited(n) => OrderTag::Limited(n),
            ReflectionOrder::Full => OrderTag::FullOrder,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeampatternGrid {
    /// Bins x probe angles.
    pub b: Array2<Complex64>,
    pub p: Vec<f64>,
    pub thetas: Vec<f64>,
    /// Normalized wide-band power in dB, maximum exactly 0.
    pub p_db: Vec<f64>,
    pub order: OrderTag,
}

impl BeampatternGrid {
    pub fn from_pattern(b: Array2<Complex64>, thetas: Vec<f64>, order: OrderTag) -> Result<Self> {
        if b.ncols() != thetas.len() {
            return Err(Error::Shape(format!(
                "{} beampattern columns for {} angles",
                b.ncols(),
                thetas.len()
            )));
        }
        let p = wideband(&b)?;
        let p_db = to_polar_db(&p)?;
        Ok(Self {
            b,
            p,
            thetas,
            p_db,
            order,
        })
    }

    /// Normalized dB value at the grid angle closest to `theta`.
    pub fn db_at(&self, theta: f64) -> Option<f64> {
        let dist = |t: f64| {
            let d = (t - theta).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        self.thetas
            .iter()
            .enumerate()
            .min_by(|a, b| dist(*a.1).total_cmp(&dist(*b.1)))
            .map(|(i, _)| self.p_db[i])
    }

    pub fn argmax_theta(&self) -> f64 {
        let i = self
            .p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        self.thetas[i]
    }

    /// Rows of (theta, P_dB).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["theta_deg", "p_db"]).map_err(csv_err)?;
        for (t, p) in self.thetas.iter().zip(&self.p_db) {
            w.write_record([t.to_string(), p.to_string()]).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// |B(k, theta)| with one row per bin and one column per angle.
    pub fn magnitude_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["bin".to_string()];
        header.extend(self.thetas.iter().map(|t| t.to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for (k, row) in self.b.axis_iter(Axis(0)).enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(row.iter().map(|v| v.norm().to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// Polar plot of the normalized dB series. The radius maps
    /// [DB_FLOOR, 0] dB to [0, 1] of the plot radius.
    pub fn to_svg(&self, title: &str) -> String {
        let size = 480.0;
        let c = size / 2.0;
        let r0 = size * 0.4;
        let radius = |db: f64| r0 * (db.max(DB_FLOOR) - DB_FLOOR) / -DB_FLOOR;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{c}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
            xml_escape(title)
        );
        for db in [-80.0, -60.0, -40.0, -20.0, 0.0] {
            let _ = writeln!(
                s,
                r##"<circle cx="{c}" cy="{c}" r="{:.2}" fill="none" stroke="#ccc"/>"##,
                radius(db)
            );
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{c}" font-family="sans-serif" font-size="9" fill="#888">{db}</text>"##,
                c + radius(db) + 2.0
            );
        }
        for deg in (0..360).step_by(30) {
            let a = (deg as f64).to_radians();
            let (x, y) = (c + r0 * a.cos(), c - r0 * a.sin());
            let _ = writeln!(
                s,
                r##"<line x1="{c}" y1="{c}" x2="{x:.2}" y2="{y:.2}" stroke="#eee"/>"##
            );
            let (lx, ly) = (c + (r0 + 14.0) * a.cos(), c - (r0 + 14.0) * a.sin() + 4.0);
            let _ = writeln!(
                s,
                r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{deg}</text>"#
            );
        }
        let points: Vec<String> = self
            .thetas
            .iter()
            .zip(&self.p_db)
            .map(|(t, db)| {
                let a = t.to_radians();
                let r = radius(*db);
                format!("{:.2},{:.2}", c + r * a.cos(), c - r * a.sin())
            })
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f5fbf" stroke-width="1.5"/>"##,
            points.join(" ")
        );
        s.push_str("</svg>\n");
        s
    }

    /// Writes `beampattern.csv`, `beampattern_bins.csv` and `beampattern.svg`.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>, title: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("beampattern.csv"), self.to_csv()?)?;
        fs::write(dir.join("beampattern_bins.csv"), self.magnitude_csv()?)?;
        fs::write(dir.join("beampattern.svg"), self.to_svg(title))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// B(k, theta) = w1(k)^H h(k, theta) for weights (bins x mics) and ATFs
/// (mics x bins x angles).
pub fn narrowband(w1: &Array2<Complex64>, atfs: &Array3<Complex64>) -> Result<Array2<Complex64>> {
    let (kk, m) = w1.dim();
    let (am, ak, nt) = atfs.dim();
    if am != m || ak != kk {
        return Err(Error::Shape(format!(
            "weights are {kk} bins x {m} mics, ATFs are {am} mics x {ak} bins"
        )));
    }
    let cols: Vec<Vec<Complex64>> = (0..nt)
        .into_par_iter()
        .map(|t| {
            (0..kk)
                .map(|k| (0..m).map(|c| w1[[k, c]].conj() * atfs[[c, k, t]]).sum())
                .collect()
        })
        .collect();
    Ok(Array2::from_shape_fn((kk, nt), |(k, t)| cols[t][k]))
}

/// P(theta) = sum_k |B(k, theta)|^2.
pub fn wideband(b: &Array2<Complex64>) -> Result<Vec<f64>> {
    if b.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Input("beampattern has non-finite entries".into()));
    }
    Ok(b.axis_iter(Axis(1))
        .map(|col| col.iter().map(|v| v.norm_sqr()).sum())
        .collect())
}

/// 10 log10(P / max P), floored at DB_FLOOR. The maximum maps to exactly 0.
pub fn to_polar_db(p: &[f64]) -> Result<Vec<f64>> {
    let max = p.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::Undefined("beampower is zero everywhere; cannot normalize".into()));
    }
    Ok(p
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                DB_FLOOR
            } else {
                (10.0 * (v / max).log10()).max(DB_FLOOR)
            }
        })
        .collect())
}

/// Default probe contour: 0..=180 degrees in 1 degree steps.
pub fn default_thetas() -> Vec<f64> {
    (0..=180).map(f64::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisMethod {
    Mvdr,
    Mpdr,
    Learned,
}

impl std::str::FromStr for AnalysisMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mvdr" => Ok(Self::Mvdr),
            "mpdr" => Ok(Self::Mpdr),
            "learned" | "learned-w1" => Ok(Self::Learned),
            _ => Err(Error::Config(format!("unknown beampattern method '{s}'"))),
        }
    }
}

/// Stage-1 weights for `method` on `mixture`, then the beampattern on the
/// probe contour at the scenario's source radius. Only w1 of learned
/// weights is analyzed.
pub fn analyze_example(
    mixture: &Mixture,
    method: AnalysisMethod,
    learned: Option<&StageWeights>,
    thetas: &[f64],
    order: ReflectionOrder,
    stft: &StftConfig,
) -> Result<(BeampatternGrid, StageWeights)> {
    let weights = match method {
        AnalysisMethod::Learned => learned
            .ok_or_else(|| Error::Config("learned beampattern needs a weight file".into()))?
            .without_mask(),
        AnalysisMethod::Mvdr | AnalysisMethod::Mpdr => {
            let spec = analyze(&mixture.y, stft)?;
            let design = if method == AnalysisMethod::Mvdr {
                DesignMethod::Mvdr
            } else {
                DesignMethod::Mpdr
            };
            let frames = noise_frames_for(stft, mixture.spec.head_samples())?;
            design_beamformer(&spec, design, frames, mixture.geometry.reference_index)?.0
        }
    };
    let settings = RirSettings {
        sample_rate: stft.sample_rate,
        ..Default::default()
    };
    let grid = beampattern_for(&weights, mixture, thetas, order, &settings, stft.frame_len)?;
    Ok((grid, weights))
}

/// Beampattern of fixed weights in the mixture's room.
pub fn beampattern_for(
    weights: &StageWeights,
    mixture: &Mixture,
    thetas: &[f64],
    order: ReflectionOrder,
    settings: &RirSettings,
    frame_len: usize,
) -> Result<BeampatternGrid> {
    if thetas.is_empty() {
        return Err(Error::Config("empty probe angle grid".into()));
    }
    let atfs = atf_grid(&mixture.scenario, &mixture.geometry, thetas, order, settings, frame_len)?;
    let b = narrowband(weights.w1(), &atfs)?;
    BeampatternGrid::from_pattern(b, thetas.to_vec(), order.into())
}
