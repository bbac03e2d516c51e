//! Interchange format for per-utterance stage weights.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "EXBF" | version: u32 = 1 | M: u32 | K: u32 | L: u32 | flags: u32
//! w1: M*K complex64 (f32 re, f32 im), bin-major (k outer, m inner)
//! w2: K*L complex64, frame-major (l outer, k inner), present iff flags bit 0
//! ```
//!
//! A JSON mirror with the same field names is accepted for debugging.
//! Values are stored as f32, so saving quantizes; loading a file and saving
//! it again reproduces the bytes exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamformer::{Provenance, StageWeights};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EXBF";
pub const VERSION: u32 = 1;
pub const FLAG_MASK: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsJson {
    pub magic: String,
    pub version: u32,
    #[serde(rename = "M")]
    pub m: u32,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "L")]
    pub l: u32,
    pub flags: u32,
    /// M*K [re, im] pairs, bin-major.
    pub w1: Vec<[f32; 2]>,
    /// K*L [re, im] pairs, frame-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<Vec<[f32; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn quantize(v: Complex64) -> [f32; 2] {
    [v.re as f32, v.im as f32]
}

fn dequantize(p: [f32; 2]) -> Complex64 {
    Complex64::new(p[0] as f64, p[1] as f64)
}

/// Frame count written to the header: the mask's frame count, or an
/// explicit utterance length when there is no mask.
fn header_frames(w: &StageWeights, frames_hint: usize) -> usize {
    if w.w2().is_some() {
        w.num_frames()
    } else {
        frames_hint
    }
}

fn w1_pairs(w: &StageWeights) -> Vec<[f32; 2]> {
    // row-major over (k, m) is bin-major
    w.w1().iter().copied().map(quantize).collect()
}

fn w2_pairs(mask: &Array2<Complex64>) -> Vec<[f32; 2]> {
    // (k, l) in memory; written frame-major
    mask.t().iter().copied().map(quantize).collect()
}

fn dims_u32(w: &StageWeights, frames: usize) -> Result<(u32, u32, u32)> {
    let conv = |v: usize| u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} overflows u32")));
    Ok((conv(w.num_mics())?, conv(w.num_bins())?, conv(frames)?))
}

pub fn encode_binary(w: &StageWeights, frames_hint: usize) -> Result<Vec<u8>> {
    let frames = header_frames(w, frames_hint);
    let (m, k, l) = dims_u32(w, frames)?;
    let flags = if w.w2().is_some() { FLAG_MASK } else { 0 };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (w.num_mics() * w.num_bins() + w.num_bins() * w.num_frames()));
    out.extend_from_slice(MAGIC);
    for v in [VERSION, m, k, l, flags] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut push = |pairs: Vec<[f32; 2]>| {
        for [re, im] in pairs {
            out.extend_from_slice(&re.to_le_bytes());
            out.extend_from_slice(&im.to_le_bytes());
        }
    };
    push(w1_pairs(w));
    if let Some(mask) = w.w2() {
        push(w2_pairs(mask));
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_pairs(bytes: &[u8], count: usize) -> Vec<[f32; 2]> {
    bytes
        .chunks_exact(8)
        .take(count)
        .map(|c| {
            [
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            ]
        })
        .collect()
}

fn build(
    m: usize,
    k: usize,
    l: usize,
    w1: &[[f32; 2]],
    w2: Option<&[[f32; 2]]>,
    sample_rate: Option<u32>,
    provenance: Provenance,
) -> Result<StageWeights> {
    if w1.len() != m * k {
        return Err(Error::Format(format!("w1 has {} values, header says {}x{}", w1.len(), m, k)));
    }
    let w1 = Array2::from_shape_fn((k, m), |(kk, mm)| dequantize(w1[kk * m + mm]));
    let w2 = match w2 {
        Some(p) => {
            if p.len() != k * l {
                return Err(Error::Format(format!("w2 has {} values, header says {}x{}", p.len(), k, l)));
            }
            Some(Array2::from_shape_fn((k, l), |(kk, ll)| dequantize(p[ll * k + kk])))
        }
        None => None,
    };
    StageWeights::new(w1, w2, sample_rate, provenance)
}

/// Parses and validates a binary weight file. Binary files carry no
/// provenance and are treated as learned weights.
pub fn decode_binary(bytes: &[u8]) -> Result<(StageWeights, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (m, k, l, flags) = (
        read_u32(bytes, 8) as usize,
        read_u32(bytes, 12) as usize,
        read_u32(bytes, 16) as usize,
        read_u32(bytes, 20),
    );
    if flags & !FLAG_MASK != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#x}")));
    }
    let has_mask = flags & FLAG_MASK != 0;
    let expected = HEADER_LEN + 8 * (m * k + if has_mask { k * l } else { 0 });
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header (M={m}, K={k}, L={l}, flags={flags}) implies {expected}",
            bytes.len()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    let w1 = read_pairs(body, m * k);
    let w2 = has_mask.then(|| read_pairs(&body[8 * m * k..], k * l));
    Ok((build(m, k, l, &w1, w2.as_deref(), None, Provenance::Learned)?, l))
}

pub fn to_json(w: &StageWeights, frames_hint: usize) -> Result<WeightsJson> {
    let frames = header_frames(w, frames_hint);
    let (m, k, l) = dims_u32(w, frames)?;
    Ok(WeightsJson {
        magic: "EXBF".into(),
        version: VERSION,
        m,
        k,
        l,
        flags: if w.w2().is_some() { FLAG_MASK } else { 0 },
        w1: w1_pairs(w),
        w2: w.w2().map(w2_pairs),
        sample_rate: w.sample_rate,
        provenance: Some(w.provenance),
    })
}

pub fn from_json(j: &WeightsJson) -> Result<(StageWeights, usize)> {
    if j.magic != "EXBF" {
        return Err(Error::Format(format!("bad magic '{}'", j.magic)));
    }
    if j.version != VERSION {
        return Err(Error::Format(format!("unsupported version {}", j.version)));
    }
    if j.flags & !FLAG_MASK != 0 {
        return Err(Error::Format(format!("unknown flag bits {:#x}", j.flags)));
    }
    let has_mask = j.flags & FLAG_MASK != 0;
    if has_mask != j.w2.is_some() {
        return Err(Error::Format("flags and presence of w2 disagree".into()));
    }
    let w = build(
        j.m as usize,
        j.k as usize,
        j.l as usize,
        &j.w1,
        j.w2.as_deref(),
        j.sample_rate,
        j.provenance.unwrap_or(Provenance::Learned),
    )?;
    Ok((w, j.l as usize))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Writes binary, or the JSON mirror when the path ends in `.json`.
/// `frames_hint` is recorded as L when there is no mask.
pub fn save_weights(w: &StageWeights, path: impl AsRef<Path>, frames_hint: usize) -> Result<()> {
    let path = path.as_ref();
    if is_json(path) {
        fs::write(path, serde_json::to_vec_pretty(&to_json(w, frames_hint)?)?)?;
    } else {
        fs::write(path, encode_binary(w, frames_hint)?)?;
    }
    Ok(())
}

/// Loads and validates weights; returns them with the header frame count.
pub fn load_weights(path: impl AsRef<Path>) -> Result<(StageWeights, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let res = if is_json(path) {
        from_json(&serde_json::from_slice(&bytes)?)
    } else {
        decode_binary(&bytes)
    };
    res.map_err(|e| {
        log::error!("rejected weight file {}: {e}", path.display());
        e
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(mask: bool) -> StageWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w1 = Array2::from_shape_fn((9, 4), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        w1.row_mut(0).iter_mut().for_each(|v| v.im = 0.0);
        w1.row_mut(8).iter_mut().for_each(|v| v.im = 0.0);
        let w = StageWeights::new(w1, None, None, Provenance::Learned).unwrap();
        if !mask {
            return w;
        }
        let mut m = Array2::from_shape_fn((9, 5), |_| {
            Complex64::new(rng.random_range(0.0..0.7), rng.random_range(-0.7..0.7))
        });
        m.row_mut(0).iter_mut().for_each(|v| v.im = 0.0);
        m.row_mut(8).iter_mut().for_each(|v| v.im = 0.0);
        w.with_mask(m).unwrap()
    }

    #[test]
    fn binary_bytes_roundtrip() {
        for mask in [false, true] {
            let w = sample(mask);
            let bytes = encode_binary(&w, 5).unwrap();
            let (back, frames) = decode_binary(&bytes).unwrap();
            assert_eq!(frames, 5);
            assert_eq!(encode_binary(&back, frames).unwrap(), bytes);
            // decoded values equal the f32-quantized originals
            for (a, b) in w.w1().iter().zip(back.w1().iter()) {
                assert_eq!(a.re as f32 as f64, b.re);
                assert_eq!(a.im as f32 as f64, b.im);
            }
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_binary(&sample(true), 0).unwrap();
        assert_eq!(&bytes[..4], b"EXBF");
        assert_eq!(read_u32(&bytes, 4), 1);
        assert_eq!(read_u32(&bytes, 8), 4);
        assert_eq!(read_u32(&bytes, 12), 9);
        assert_eq!(read_u32(&bytes, 16), 5);
        assert_eq!(read_u32(&bytes, 20), 1);
        assert_eq!(bytes.len(), 24 + 8 * (36 + 45));
        let no_mask = encode_binary(&sample(false), 7).unwrap();
        assert_eq!(read_u32(&no_mask, 20), 0);
        assert_eq!(no_mask.len(), 24 + 8 * 36);
    }

    #[test]
    fn w2_is_frame_major() {
        let w = sample(true);
        let bytes = encode_binary(&w, 0).unwrap();
        let mask = w.w2().unwrap();
        // second stored w2 pair is (l = 0, k = 1)
        let off = 24 + 8 * 36 + 8;
        let re = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        assert_eq!(re, mask[[1, 0]].re as f32);
    }

    #[test]
    fn rejects_corrupt_files() {
        let good = encode_binary(&sample(true), 0).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_binary(&bad), Err(Error::Format(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_binary(&bad), Err(Error::Format(_))));
        assert!(matches!(decode_binary(&good[..good.len() - 8]), Err(Error::Format(_))));
        let mut bad = good.clone();
        bad[20] = 3;
        assert!(matches!(decode_binary(&bad), Err(Error::Format(_))));
        // imaginary part at bin 0 of w1: entry (k=0, m=1), imag at +4
        let mut bad = good;
        let off = 24 + 8 + 4;
        bad[off..off + 4].copy_from_slice(&0.25f32.to_le_bytes());
        assert!(matches!(decode_binary(&bad), Err(Error::Realness { bin: 0, .. })));
    }

    #[test]
    fn file_and_json_mirror() {
        let dir = tempfile::tempdir().unwrap();
        let w = sample(true);
        let bin = dir.path().join("u.exbf");
        let json = dir.path().join("u.json");
        save_weights(&w, &bin, 0).unwrap();
        save_weights(&w, &json, 0).unwrap();
        let (a, _) = load_weights(&bin).unwrap();
        let (b, _) = load_weights(&json).unwrap();
        assert_eq!(a.w1(), b.w1());
        assert_eq!(a.w2(), b.w2());
        let text = fs::read_to_string(&json).unwrap();
        for key in ["\"magic\"", "\"version\"", "\"M\"", "\"K\"", "\"L\"", "\"flags\"", "\"w1\"", "\"w2\""] {
            assert!(text.contains(key), "{key}");
        }
    }
}
