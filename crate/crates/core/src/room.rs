//! Shoebox room acoustics: scenario sampling, image-source room impulse
//! responses and acoustic transfer functions for probing beampatterns.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array3;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

pub const SPEED_OF_SOUND: f64 = 343.0;

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseType {
    Stationary,
    TimeVaryingNoise,
    SpeakerSwitch,
    BabbleNoise,
    BabbleVoice,
}

impl NoiseType {
    pub const ALL: [NoiseType; 5] = [
        NoiseType::Stationary,
        NoiseType::TimeVaryingNoise,
        NoiseType::SpeakerSwitch,
        NoiseType::BabbleNoise,
        NoiseType::BabbleVoice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseType::Stationary => "stationary",
            NoiseType::TimeVaryingNoise => "time_varying_noise",
            NoiseType::SpeakerSwitch => "speaker_switch",
            NoiseType::BabbleNoise => "babble_noise",
            NoiseType::BabbleVoice => "babble_voice",
        }
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown noise type '{s}'")))
    }
}

/// One simulated acoustic scene. Angles are in degrees and measured from
/// the array axis; the axis itself is rotated by `tilt_phi` from the
/// room's x axis. Distances are in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    #[serde(rename = "Lz")]
    pub lz: f64,
    #[serde(rename = "T60")]
    pub t60: f64,
    pub mic_center: Point3,
    pub tilt_phi: f64,
    pub source_theta: f64,
    pub noise_theta: f64,
    #[serde(rename = "source_R")]
    pub source_r: f64,
    #[serde(rename = "noise_R")]
    pub noise_r: f64,
    pub seed: u64,
    pub noise_type: NoiseType,
}

impl Scenario {
    pub fn room(&self) -> Point3 {
        [self.lx, self.ly, self.lz]
    }

    /// Point in the horizontal plane of the array at `theta_deg` from the
    /// array axis and `radius` from the array center.
    pub fn point_at(&self, theta_deg: f64, radius: f64) -> Point3 {
        let a = (self.tilt_phi + theta_deg).to_radians();
        [
            self.mic_center[0] + radius * a.cos(),
            self.mic_center[1] + radius * a.sin(),
            self.mic_center[2],
        ]
    }

    pub fn source_position(&self) -> Point3 {
        self.point_at(self.source_theta, self.source_r)
    }

    pub fn noise_position(&self) -> Point3 {
        self.point_at(self.noise_theta, self.noise_r)
    }

    pub fn mic_positions(&self, geometry: &ArrayGeometry) -> Vec<Point3> {
        let (s, c) = self.tilt_phi.to_radians().sin_cos();
        geometry
            .mic_positions
            .iter()
            .map(|p| {
                [
                    self.mic_center[0] + c * p[0] - s * p[1],
                    self.mic_center[1] + s * p[0] + c * p[1],
                    self.mic_center[2] + p[2],
                ]
            })
            .collect()
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.iter().zip(self.room()).all(|(&v, l)| v > 0.0 && v < l)
    }

    /// Checks that the room is physical and that all microphones and both
    /// sources lie strictly inside it.
    pub fn check_geometry(&self, geometry: &ArrayGeometry) -> Result<()> {
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lz > 0.0) {
            return Err(Error::Geometry("room dimensions must be positive".into()));
        }
        if !(self.t60 >= 0.0) {
            return Err(Error::Geometry(format!("negative T60 {}", self.t60)));
        }
        for (i, p) in self.mic_positions(geometry).iter().enumerate() {
            if !self.contains(p) {
                return Err(Error::Geometry(format!("microphone {i} at {p:?} is outside the room")));
            }
        }
        for (name, p) in [
            ("source", self.source_position()),
            ("noise", self.noise_position()),
        ] {
            if !self.contains(&p) {
                return Err(Error::Geometry(format!("{name} at {p:?} is outside the room")));
            }
        }
        Ok(())
    }

    /// Checks every sampling-range invariant of `ranges`, in addition to
    /// [`Scenario::check_geometry`].
    pub fn validate(&self, ranges: &ScenarioRanges, geometry: &ArrayGeometry) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        let fail = |what: &str| Err(Error::Config(format!("scenario violates range: {what}")));
        if !within(self.lx, ranges.lx) || !within(self.ly, ranges.ly) {
            return fail("room dimensions");
        }
        if self.lz != ranges.lz {
            return fail("room height");
        }
        if !within(self.t60, ranges.t60) {
            return fail("T60");
        }
        let [x, y, _] = self.mic_center;
        if !within(x, (ranges.mic_x_margin, self.lx - ranges.mic_x_margin))
            || !within(y, (ranges.mic_y_low, self.ly - ranges.mic_y_top_margin))
            || self.mic_center[2] != ranges.mic_z
        {
            return fail("microphone center");
        }
        if !within(self.tilt_phi, ranges.tilt) {
            return fail("tilt");
        }
        if !within(self.source_theta, ranges.theta) || !within(self.noise_theta, ranges.theta) {
            return fail("source angle");
        }
        if (self.source_theta - self.noise_theta).abs() < ranges.min_separation {
            return fail("angular separation");
        }
        let r_hi = ranges.radius_upper(self);
        for r in [self.source_r, self.noise_r] {
            if r < ranges.radius.0 || r > r_hi {
                return fail("radius");
            }
        }
        self.check_geometry(geometry)
    }
}

/// Sampling ranges for [`sample_scenario`]. Defaults follow the
/// reverberant data specification; [`ScenarioRanges::anechoic`] pins T60 to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRanges {
    pub lx: (f64, f64),
    pub ly: (f64, f64),
    pub lz: f64,
    pub t60: (f64, f64),
    /// Array center x is drawn from [margin, Lx - margin].
    pub mic_x_margin: f64,
    /// Array center y is drawn from [low, Ly - top_margin].
    pub mic_y_low: f64,
    pub mic_y_top_margin: f64,
    pub mic_z: f64,
    pub tilt: (f64, f64),
    pub theta: (f64, f64),
    pub min_separation: f64,
    /// Lower radius bound and the absolute cap on the upper bound.
    pub radius: (f64, f64),
    /// Clearance kept between sources and the walls in the radius bound.
    pub wall_margin: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioRanges {
    fn default() -> Self {
        Self {
            lx: (6.0, 9.0),
            ly: (6.0, 9.0),
            lz: 3.0,
            t60: (0.3, 0.5),
            mic_x_margin: 2.5,
            mic_y_low: 0.5,
            mic_y_top_margin: 2.5,
            mic_z: 1.0,
            tilt: (-45.0, 45.0),
            theta: (0.0, 180.0),
            min_separation: 20.0,
            radius: (1.8, 2.2),
            wall_margin: 0.5,
            max_attempts: 100_000,
        }
    }
}

impl ScenarioRanges {
    pub fn anechoic() -> Self {
        Self {
            t60: (0.0, 0.0),
            ..Default::default()
        }
    }

    pub fn with_reverb(reverb: bool) -> Self {
        if reverb {
            Self::default()
        } else {
            Self::anechoic()
        }
    }

    /// Upper radius bound min(x - m, Lx - x - m, Ly - y - m, r_max).
    pub fn radius_upper(&self, s: &Scenario) -> f64 {
        let [x, y, _] = s.mic_center;
        let m = self.wall_margin;
        (x - m).min(s.lx - x - m).min(s.ly - y - m).min(self.radius.1)
    }

    fn check_feasible(&self) -> Result<()> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(Error::Config(format!("empty range for {name}: [{lo}, {hi}]")))
            }
        };
        ordered("Lx", self.lx)?;
        ordered("Ly", self.ly)?;
        ordered("T60", self.t60)?;
        ordered("tilt", self.tilt)?;
        ordered("theta", self.theta)?;
        ordered("radius", self.radius)?;
        if self.t60.0 < 0.0 {
            return Err(Error::Config("T60 must be non-negative".into()));
        }
        if self.theta.1 - self.theta.0 < self.min_separation {
            return Err(Error::Config(format!(
                "angle range [{}, {}] cannot hold a separation of {} degrees",
                self.theta.0, self.theta.1, self.min_separation
            )));
        }
        if self.lx.1 < 2.0 * self.mic_x_margin || self.ly.1 < self.mic_y_low + self.mic_y_top_margin
        {
            return Err(Error::Config("array center range is empty".into()));
        }
        // Most generous radius bound: widest room, centered x, lowest y.
        let best = (self.lx.1 / 2.0 - self.wall_margin)
            .min(self.ly.1 - self.mic_y_low - self.wall_margin)
            .min(self.radius.1);
        if best < self.radius.0 {
            return Err(Error::Config(format!(
                "radius interval is empty: lower bound {} exceeds best-case upper bound {best}",
                self.radius.0
            )));
        }
        Ok(())
    }
}

/// Draws a scenario satisfying every range constraint. Whole scenarios
/// are rejected and redrawn until the sources are separated, the radius
/// interval is non-empty and every position lies inside the room.
pub fn sample_scenario<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &ScenarioRanges,
    geometry: &ArrayGeometry,
    noise_type: NoiseType,
) -> Result<Scenario> {
    ranges.check_feasible()?;
    geometry.validate()?;
    let uniform = |rng: &mut R, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    for _ in 0..ranges.max_attempts {
        let lx = uniform(rng, ranges.lx);
        let ly = uniform(rng, ranges.ly);
        let t60 = uniform(rng, ranges.t60);
        let x = uniform(rng, (ranges.mic_x_margin, lx - ranges.mic_x_margin));
        let y = uniform(rng, (ranges.mic_y_low, ly - ranges.mic_y_top_margin));
        let tilt_phi = uniform(rng, ranges.tilt);
        let source_theta = uniform(rng, ranges.theta);
        let noise_theta = uniform(rng, ranges.theta);
        let mut s = Scenario {
            lx,
            ly,
            lz: ranges.lz,
            t60,
            mic_center: [x, y, ranges.mic_z],
            tilt_phi,
            source_theta,
            noise_theta,
            source_r: 0.0,
            noise_r: 0.0,
            seed: 0,
            noise_type,
        };
        let r_hi = ranges.radius_upper(&s);
        let r = uniform(rng, (ranges.radius.0, r_hi.max(ranges.radius.0)));
        let seed = rng.random::<u64>();
        if (source_theta - noise_theta).abs() < ranges.min_separation || r_hi < ranges.radius.0 {
            continue;
        }
        s.source_r = r;
        s.noise_r = r;
        s.seed = seed;
        if s.check_geometry(geometry).is_ok() {
            return Ok(s);
        }
    }
    Err(Error::Config(format!(
        "no feasible scenario after {} attempts",
        ranges.max_attempts
    )))
}

/// Microphone layout in array-local coordinates (x along the array axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<Point3>,
    pub reference_index: usize,
}

impl Default for ArrayGeometry {
    /// Four-microphone non-uniform linear array with 3, 5 and 7 cm spacings,
    /// centered on its midpoint, reference microphone 0.
    fn default() -> Self {
        Self::linear(&[0.03, 0.05, 0.07], 0)
    }
}

impl ArrayGeometry {
    /// Linear array along the local x axis with the given inter-mic spacings.
    pub fn linear(spacings: &[f64], reference_index: usize) -> Self {
        let mut xs = vec![0.0];
        for s in spacings {
            xs.push(xs.last().unwrap() + s);
        }
        let mid = (xs[0] + xs[xs.len() - 1]) / 2.0;
        Self {
            mic_positions: xs.into_iter().map(|x| [x - mid, 0.0, 0.0]).collect(),
            reference_index,
        }
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.len() < 2 {
            return Err(Error::Geometry("array needs at least two microphones".into()));
        }
        if self.reference_index >= self.mic_positions.len() {
            return Err(Error::Geometry(format!(
                "reference index {} out of range",
                self.reference_index
            )));
        }
        for i in 0..self.mic_positions.len() {
            for j in 0..i {
                if distance(&self.mic_positions[i], &self.mic_positions[j]) < 1e-9 {
                    return Err(Error::Geometry(format!("microphones {j} and {i} coincide")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectionOrder {
    Limited(u32),
    /// Images down to the attenuation floor of [`RirSettings`].
    Full,
}

impl ReflectionOrder {
    pub const DIRECT: ReflectionOrder = ReflectionOrder::Limited(0);
}

impl fmt::Display for ReflectionOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReflectionOrder::Limited(n) => write!(f, "{n}"),
            ReflectionOrder::Full => f.write_str("full"),
        }
    }
}

impl FromStr for ReflectionOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(ReflectionOrder::Full);
        }
        s.parse::<u32>()
            .map(ReflectionOrder::Limited)
            .map_err(|_| Error::Config(format!("reflection order must be an integer or 'full', got '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirSettings {
    pub sample_rate: u32,
    pub speed_of_sound: f64,
    /// Half-width in samples of the windowed-sinc fractional delay kernel.
    pub kernel_half_width: usize,
    /// Images attenuated more than this (relative to the direct path,
    /// including spreading loss) are dropped in full-order mode.
    pub full_order_floor_db: f64,
}

impl Default for RirSettings {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            speed_of_sound: SPEED_OF_SOUND,
            kernel_half_width: 32,
            full_order_floor_db: 60.0,
        }
    }
}

/// One impulse response per microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct RirSet {
    pub filters: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub order: ReflectionOrder,
}

impl RirSet {
    pub fn energy(&self) -> f64 {
        self.filters.iter().flatten().map(|v| v * v).sum()
    }

    pub fn len(&self) -> usize {
        self.filters.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Wall reflection coefficient from Sabine's formula with uniform absorption.
pub fn reflection_coefficient(room: &Point3, t60: f64, c: f64) -> Result<f64> {
    if t60 < 0.0 || !t60.is_finite() {
        return Err(Error::Model(format!("invalid T60 {t60}")));
    }
    if t60 == 0.0 {
        return Ok(0.0);
    }
    let [lx, ly, lz] = *room;
    let volume = lx * ly * lz;
    let surface = 2.0 * (lx * ly + lx * lz + ly * lz);
    let alpha = 24.0 * 10f64.ln() * volume / (c * surface * t60);
    if alpha > 1.0 {
        return Err(Error::Model(format!(
            "T60 {t60} s is too short for this room (Sabine absorption {alpha:.3} > 1)"
        )));
    }
    Ok((1.0 - alpha).sqrt())
}

fn fractional_delay_tap(t: f64, half_width: f64) -> f64 {
    if t.abs() >= half_width {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * t / half_width).cos());
    let sinc = if t.abs() < 1e-12 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    };
    window * sinc
}

struct Image {
    delay: f64,
    gain: f64,
}

fn images_for_mic(
    room: &Point3,
    src: &Point3,
    mic: &Point3,
    beta: f64,
    order: ReflectionOrder,
    settings: &RirSettings,
) -> Vec<Image> {
    let fs = settings.sample_rate as f64;
    let c = settings.speed_of_sound;
    let direct = distance(src, mic);
    let floor = 10f64.powf(-settings.full_order_floor_db / 20.0);
    let max_refl: i64 = match order {
        ReflectionOrder::Limited(n) => n as i64,
        ReflectionOrder::Full if beta == 0.0 => 0,
        ReflectionOrder::Full => (floor.ln() / beta.ln()).ceil() as i64,
    };
    let bound = max_refl / 2 + 1;
    let mut out = Vec::new();
    for mx in -bound..=bound {
        for my in -bound..=bound {
            for mz in -bound..=bound {
                for q in 0..2i64 {
                    for j in 0..2i64 {
                        for k in 0..2i64 {
                            let refl = (2 * mx - q).abs() + (2 * my - j).abs() + (2 * mz - k).abs();
                            if refl > max_refl {
                                continue;
                            }
                            let coeff = beta.powi(refl as i32);
                            if coeff == 0.0 {
                                continue;
                            }
                            let rel = [
                                (1 - 2 * q) as f64 * src[0] + 2.0 * mx as f64 * room[0] - mic[0],
                                (1 - 2 * j) as f64 * src[1] + 2.0 * my as f64 * room[1] - mic[1],
                                (1 - 2 * k) as f64 * src[2] + 2.0 * mz as f64 * room[2] - mic[2],
                            ];
                            let d = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
                            if order == ReflectionOrder::Full && coeff * direct / d < floor {
                                continue;
                            }
                            out.push(Image {
                                delay: d / c * fs,
                                gain: coeff / (4.0 * PI * d),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Image-source room impulse responses from `src` to every microphone.
/// Each image contributes a windowed-sinc fractional delay scaled by the
/// product of wall reflection coefficients and the spherical spreading
/// loss 1/(4*pi*d). Kernel taps that would fall before t = 0 are dropped.
pub fn simulate_rir(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    src: &Point3,
    order: ReflectionOrder,
    settings: &RirSettings,
) -> Result<RirSet> {
    geometry.validate()?;
    if !scenario.contains(src) {
        return Err(Error::Geometry(format!("source {src:?} is outside the room")));
    }
    let mics = scenario.mic_positions(geometry);
    for (i, p) in mics.iter().enumerate() {
        if !scenario.contains(p) {
            return Err(Error::Geometry(format!("microphone {i} at {p:?} is outside the room")));
        }
    }
    let room = scenario.room();
    let beta = reflection_coefficient(&room, scenario.t60, settings.speed_of_sound)?;
    let hw = settings.kernel_half_width;
    let filters: Vec<Vec<f64>> = mics
        .par_iter()
        .map(|mic| {
            let images = images_for_mic(&room, src, mic, beta, order, settings);
            let max_delay = images.iter().map(|im| im.delay).fold(0.0, f64::max);
            let len = max_delay.floor() as usize + hw + 1;
            let mut h = vec![0.0; len];
            for im in &images {
                let base = im.delay.floor() as i64;
                for i in -(hw as i64) + 1..=hw as i64 {
                    let idx = base + i;
                    if idx < 0 {
                        continue;
                    }
                    let t = idx as f64 - im.delay;
                    h[idx as usize] += im.gain * fractional_delay_tap(t, hw as f64);
                }
            }
            h
        })
        .collect();
    Ok(RirSet {
        filters,
        sample_rate: settings.sample_rate,
        order,
    })
}

/// Frequency response of `h` at the `frame_len/2 + 1` STFT bin frequencies,
/// computed exactly by zero-padding to a multiple of `frame_len`.
pub fn frequency_response(h: &[f64], frame_len: usize) -> Vec<Complex64> {
    let blocks = h.len().div_ceil(frame_len).max(1);
    let n = blocks * frame_len;
    let mut buf: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    (0..=frame_len / 2).map(|k| buf[k * blocks]).collect()
}

/// Acoustic transfer functions from probe points on a circle around the
/// array (at the scenario's source radius) to every microphone.
/// Returns mics x bins x probe angles.
pub fn atf_grid(
    scenario: &Scenario,
    geometry: &ArrayGeometry,
    thetas: &[f64],
    order: ReflectionOrder,
    settings: &RirSettings,
    frame_len: usize,
) -> Result<Array3<Complex64>> {
    let m = geometry.num_mics();
    let kk = frame_len / 2 + 1;
    let probes: Vec<Point3> = thetas
        .iter()
        .map(|&t| scenario.point_at(t, scenario.source_r))
        .collect();
    for (t, p) in thetas.iter().zip(&probes) {
        if !scenario.contains(p) {
            return Err(Error::Geometry(format!(
                "probe at {t} degrees ({p:?}) is outside the room"
            )));
        }
    }
    let responses: Vec<Vec<Vec<Complex64>>> = probes
        .par_iter()
        .map(|p| {
            let rir = simulate_rir(scenario, geometry, p, order, settings)?;
            Ok(rir
                .filters
                .iter()
                .map(|h| frequency_response(h, frame_len))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Array3::<Complex64>::zeros((m, kk, thetas.len()));
    for (t, per_mic) in responses.iter().enumerate() {
        for (mi, resp) in per_mic.iter().enumerate() {
            for (k, v) in resp.iter().enumerate() {
                out[[mi, k, t]] = *v;
            }
        }
    }
    Ok(out)
}
