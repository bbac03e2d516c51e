//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use beamlab::beamformer::{distortionless_bin, Provenance, StageWeights};
use beamlab::beampattern::{analyze_example, narrowband, wideband, AnalysisMethod};
use beamlab::covariance::{estimate_rtf_bin, inverse_sqrt, CMatrix, CVector, CovarianceSet};
use beamlab::metrics::{losses, nr, si_sdr, LossWeights};
use beamlab::mixer::{synthetic_mixture, MixtureSpec};
use beamlab::pipeline::{
    design_beamformer, enhance_utterance, generate_dataset, noise_frames_for, run_batch, DatasetConfig,
    DesignMethod, EnhanceConfig, Method, RunConfig, MANIFEST_NAME,
};
use beamlab::postfilter::{gains_as_mask, lsa_gains, noise_psd_from_head};
use beamlab::room::{
    frequency_response, sample_scenario, simulate_rir, ArrayGeometry, NoiseType, ReflectionOrder,
    RirSettings, Scenario, ScenarioRanges,
};
use beamlab::stft::{analyze, StftConfig};
use beamlab::weights_io::{load_weights, save_weights};
use beamlab::TimeSignal;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cnormal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let a = CMatrix::from_fn(m, m, |_, _| cnormal(rng));
    &a * a.adjoint() + CMatrix::identity(m, m) * Complex64::new(0.1, 0.0)
}

fn random_rtf(m: usize, rng: &mut ChaCha8Rng) -> CVector {
    let mut h = CVector::from_fn(m, |_, _| cnormal(rng));
    h[0] = Complex64::new(1.0, 0.0);
    h
}

fn distortionless() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let m = [2, 4, 8][i % 3];
        let phi = random_spd(m, &mut rng);
        let h = random_rtf(m, &mut rng);
        let w = match distortionless_bin(&phi, &h) {
            Ok(w) => w,
            Err(e) => return outcome(false, format!("case {i}: {e}")),
        };
        worst = worst.max((w.dotc(&h) - Complex64::new(1.0, 0.0)).norm());
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-10 && t < Duration::from_secs(10),
        format!("max |w^H h - 1| = {worst:.2e}, {:.2} s", t.as_secs_f64()),
    )
}

fn whitening() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let m = [2, 3, 4, 6, 8][i % 5];
        let phi = random_spd(m, &mut rng);
        let w = match inverse_sqrt(&phi) {
            Ok(w) => w,
            Err(e) => return outcome(false, format!("case {i}: {e}")),
        };
        let e = (&w * &phi * w.adjoint() - CMatrix::identity(m, m)).norm();
        worst = worst.max(e);
    }
    outcome(worst <= 1e-8, format!("max Frobenius deviation {worst:.2e}"))
}

fn rtf_analytic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for i in 0..300 {
        let m = [2, 4, 8][i % 3];
        let h = random_rtf(m, &mut rng);
        let sigma2 = rng.random_range(0.01..1.0);
        // White noise for the first half of the cases, colored for the rest.
        let phi_nn = if i < 150 {
            CMatrix::identity(m, m) * Complex64::new(sigma2, 0.0)
        } else {
            random_spd(m, &mut rng)
        };
        let phi_s = rng.random_range(0.5..5.0);
        let phi_yy = &h * h.adjoint() * Complex64::new(phi_s, 0.0) + &phi_nn;
        let (est, degenerate) = match estimate_rtf_bin(&phi_yy, &phi_nn, 0) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("case {i}: {e}")),
        };
        if degenerate {
            return outcome(false, format!("case {i} flagged degenerate"));
        }
        worst = worst.max((&est - &h).norm() / h.norm());
    }
    outcome(worst < 1e-6, format!("max relative error {worst:.2e}"))
}

fn rtf_simulated() -> Outcome {
    let geometry = ArrayGeometry::default();
    let ranges = ScenarioRanges::anechoic();
    let stft = StftConfig::default();
    let spec = MixtureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut errors = Vec::new();
    for _ in 0..5 {
        let scenario = match sample_scenario(&mut rng, &ranges, &geometry, NoiseType::Stationary) {
            Ok(s) => s,
            Err(e) => return outcome(false, e.to_string()),
        };
        let run = || -> beamlab::Result<Vec<f64>> {
            let mix = synthetic_mixture(&scenario, &geometry, &spec)?;
            let y = analyze(&mix.y, &stft)?;
            let cov = CovarianceSet::estimate(&y, noise_frames_for(&stft, spec.head_samples())?)?;
            let rir = simulate_rir(
                &scenario,
                &geometry,
                &scenario.source_position(),
                ReflectionOrder::DIRECT,
                &RirSettings::default(),
            )?;
            let atf: Vec<Vec<Complex64>> =
                rir.filters.iter().map(|h| frequency_response(h, stft.frame_len)).collect();
            let mut out = Vec::new();
            for k in 1..stft.num_bins() - 1 {
                let truth = CVector::from_fn(atf.len(), |m, _| atf[m][k] / atf[0][k]);
                let (est, _) = estimate_rtf_bin(&cov.phi_yy[k], &cov.phi_nn[k], 0)?;
                out.push((&est - &truth).norm() / truth.norm());
            }
            Ok(out)
        };
        match run() {
            Ok(e) => errors.extend(e),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    outcome(
        median < 0.1,
        format!("median relative RTF error {median:.4} over {} bins", errors.len()),
    )
}

fn stft_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let cfg = StftConfig::default();
    let overlap = cfg.frame_len - cfg.hop;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let m = rng.random_range(1..=8);
        let len = rng.random_range(2048..20000);
        let chans: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..len).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let sig = TimeSignal::new(16000, chans).unwrap();
        let back = match analyze(&sig, &cfg).and_then(|s| beamlab::stft::synthesize(&s)) {
            Ok(b) => b,
            Err(e) => return outcome(false, format!("case {i}: {e}")),
        };
        let covered = (cfg.num_frames(len) - 1) * cfg.hop + cfg.frame_len;
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..m {
            for t in overlap..covered - overlap {
                num += (sig.channel(c)[t] - back.channel(c)[t]).powi(2);
                den += sig.channel(c)[t].powi(2);
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    outcome(worst < 1e-10, format!("max relative L2 error {worst:.2e} on interior samples"))
}

fn near_pair_scenario() -> Scenario {
    Scenario {
        lx: 8.0,
        ly: 8.0,
        lz: 3.0,
        t60: 0.0,
        mic_center: [4.0, 4.0, 1.0],
        tilt_phi: 0.0,
        source_theta: 350.0,
        noise_theta: 330.0,
        source_r: 2.0,
        noise_r: 2.0,
        seed: 5,
        noise_type: NoiseType::Stationary,
    }
}

fn beampattern_near_pair() -> Outcome {
    let stft = StftConfig::default();
    let run = || -> beamlab::Result<Outcome> {
        let mix = synthetic_mixture(&near_pair_scenario(), &ArrayGeometry::default(), &MixtureSpec::default())?;
        let thetas: Vec<f64> = (0..360).map(f64::from).collect();
        let (grid, _) = analyze_example(&mix, AnalysisMethod::Mvdr, None, &thetas, ReflectionOrder::DIRECT, &stft)?;
        let p350 = grid.db_at(350.0).unwrap();
        let p330 = grid.db_at(330.0).unwrap();
        Ok(outcome(
            p330 <= p350 - 10.0 && p350 >= -3.0,
            format!(
                "P(350) = {p350:.2} dB, P(330) = {p330:.2} dB (normalized), argmax {} deg",
                grid.argmax_theta()
            ),
        ))
    };
    run().unwrap_or_else(|e| outcome(false, e.to_string()))
}

fn naive_pattern(w1: &Array2<Complex64>, atfs: &Array3<Complex64>) -> (Array2<Complex64>, Vec<f64>) {
    let (m, kk, nt) = atfs.dim();
    let mut b = Array2::<Complex64>::zeros((kk, nt));
    let mut p = vec![0.0; nt];
    for t in 0..nt {
        for k in 0..kk {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..m {
                acc += w1[[k, c]].conj() * atfs[[c, k, t]];
            }
            b[[k, t]] = acc;
            p[t] += acc.norm_sqr();
        }
    }
    (b, p)
}

fn beampattern_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst_b = 0.0f64;
    let mut worst_p = 0.0f64;
    let mut check = |w1: &Array2<Complex64>, atfs: &Array3<Complex64>| -> beamlab::Result<()> {
        let b = narrowband(w1, atfs)?;
        let p = wideband(&b)?;
        let (nb, np) = naive_pattern(w1, atfs);
        worst_b = b.iter().zip(&nb).map(|(a, c)| (a - c).norm()).fold(worst_b, f64::max);
        worst_p = p.iter().zip(&np).map(|(a, c)| (a - c).abs()).fold(worst_p, f64::max);
        Ok(())
    };
    for &(m, kk, nt) in &[(2, 5, 7), (4, 257, 37), (8, 33, 181), (3, 1, 1)] {
        let w1 = Array2::from_shape_fn((kk, m), |_| cnormal(&mut rng));
        let atfs = Array3::from_shape_fn((m, kk, nt), |_| cnormal(&mut rng));
        if let Err(e) = check(&w1, &atfs) {
            return outcome(false, e.to_string());
        }
    }
    // Weights and ATFs of the 350/330 degree scene.
    let run = || -> beamlab::Result<(Array2<Complex64>, Array3<Complex64>)> {
        let stft = StftConfig::default();
        let scenario = near_pair_scenario();
        let geometry = ArrayGeometry::default();
        let mix = synthetic_mixture(&scenario, &geometry, &MixtureSpec::default())?;
        let y = analyze(&mix.y, &stft)?;
        let (w, _) = design_beamformer(&y, DesignMethod::Mvdr, 59, 0)?;
        let thetas: Vec<f64> = (0..360).step_by(5).map(f64::from).collect();
        let atfs = beamlab::room::atf_grid(
            &scenario,
            &geometry,
            &thetas,
            ReflectionOrder::DIRECT,
            &RirSettings::default(),
            stft.frame_len,
        )?;
        Ok((w.w1().clone(), atfs))
    };
    match run().and_then(|(w1, atfs)| check(&w1, &atfs)) {
        Ok(()) => {}
        Err(e) => return outcome(false, e.to_string()),
    }
    outcome(
        worst_b <= 1e-12 && worst_p <= 1e-12,
        format!("max |B - B_naive| = {worst_b:.2e}, max |P - P_naive| = {worst_p:.2e}"),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = || -> beamlab::Result<Outcome> {
        generate_dataset(&DatasetConfig::new(20, false, NoiseType::Stationary, &data, 2024))?;
        let cfg = RunConfig::new(data.join(MANIFEST_NAME), dir.path().join("out"), Method::MvdrPf);
        let out = run_batch(&cfg)?;
        let agg = &out.report.aggregate;
        let t = start.elapsed();
        Ok(outcome(
            out.report.failures.is_empty()
                && agg.count == 20
                && agg.delta_si_sdr_db.median >= 5.0
                && agg.delta_nr_db.median >= 15.0
                && t < Duration::from_secs(300),
            format!(
                "median dSI-SDR {:.2} dB, median dNR {:.2} dB, {} ok / {} failed, {:.1} s",
                agg.delta_si_sdr_db.median,
                agg.delta_nr_db.median,
                agg.count,
                out.report.failures.len(),
                t.as_secs_f64()
            ),
        ))
    };
    run().unwrap_or_else(|e| outcome(false, e.to_string()))
}

/// Direct O(N^2) STFT / ISTFT used as an independent path for the
/// regularization loss.
fn naive_beamformed(w1: &Array2<Complex64>, x: &TimeSignal, cfg: &StftConfig) -> Vec<f64> {
    let n = cfg.frame_len;
    let kk = n / 2 + 1;
    let win: Vec<f64> = (0..n).map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt()).collect();
    let frames = (x.len() - n) / cfg.hop + 1;
    let mut out = vec![0.0; x.len()];
    let mut wsum = vec![0.0; x.len()];
    for l in 0..frames {
        let s = l * cfg.hop;
        let mut spec = vec![Complex64::new(0.0, 0.0); kk];
        for (k, v) in spec.iter_mut().enumerate() {
            for c in 0..x.num_channels() {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    acc += Complex64::from_polar(x.channel(c)[s + i] * win[i], -2.0 * PI * (k * i) as f64 / n as f64);
                }
                *v += w1[[k, c]].conj() * acc;
            }
        }
        spec[0].im = 0.0;
        spec[kk - 1].im = 0.0;
        for i in 0..n {
            let mut acc = spec[0].re + spec[kk - 1].re * if i % 2 == 0 { 1.0 } else { -1.0 };
            for (k, v) in spec.iter().enumerate().take(kk - 1).skip(1) {
                acc += 2.0 * (v * Complex64::from_polar(1.0, 2.0 * PI * (k * i) as f64 / n as f64)).re;
            }
            out[s + i] += acc / n as f64 * win[i];
            wsum[s + i] += win[i] * win[i];
        }
    }
    out.iter()
        .zip(&wsum)
        .map(|(v, &w)| if w > 1e-10 { v / w } else { 0.0 })
        .collect()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut notes = Vec::new();
    let mut pass = true;

    let r: Vec<f64> = (0..4000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let e: Vec<f64> = r
        .iter()
        .map(|v| v + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let base = si_sdr(&r, &e).unwrap();
    let mut worst = 0.0f64;
    for c in [-3.0, -0.01, 0.2, 1.0, 7.5, 1e3] {
        let s: Vec<f64> = e.iter().map(|v| c * v).collect();
        worst = worst.max((si_sdr(&r, &s).unwrap() - base).abs());
    }
    pass &= worst <= 1e-12;
    notes.push(format!("SI-SDR scale deviation {worst:.1e}"));

    // Two segments of alternating +-a and +-b have variances a^2 and b^2.
    let mut nr_exact = true;
    for (a, b) in [(1.0f64, 10.0f64), (0.5, 4.0), (2.0, 0.25), (1.0, 1.0)] {
        let mut sig: Vec<f64> = (0..8000).map(|i| if i % 2 == 0 { a } else { -a }).collect();
        sig.extend((0..56000).map(|i| if i % 2 == 0 { b } else { -b }));
        let got = nr(&sig, 16000, 0.5, 3.5).unwrap().db;
        nr_exact &= got == 10.0 * ((b * b) / (a * a)).log10();
    }
    pass &= nr_exact;
    notes.push(format!("NR exact: {nr_exact}"));

    let cfg = StftConfig::default();
    let len = 8000;
    let x = TimeSignal::new(
        16000,
        (0..3).map(|_| (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()).collect(),
    )
    .unwrap();
    let est: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut w1 = Array2::from_shape_fn((cfg.num_bins(), 3), |_| cnormal(&mut rng) * 0.3);
    for k in [0, cfg.num_bins() - 1] {
        w1.row_mut(k).iter_mut().for_each(|v| v.im = 0.0);
    }
    let w = StageWeights::new(w1.clone(), None, Some(16000), Provenance::Learned).unwrap();
    let lw = LossWeights::default();
    let l = losses(x.channel(0), &est, Some((&w, &x, &cfg)), &lw).unwrap();
    let mae = x.channel(0).iter().zip(&est).map(|(a, b)| (a - b).abs()).sum::<f64>() / len as f64;
    let xd = naive_beamformed(&w1, &x, &cfg);
    let reg = x.channel(0).iter().zip(&xd).map(|(a, b)| (a - b).abs()).sum::<f64>() / len as f64;
    let combined = 0.9 * mae + 0.1 * reg;
    let dl = (l.mae - mae)
        .abs()
        .max((l.reg.unwrap() - reg).abs())
        .max((l.combined - combined).abs());
    pass &= dl <= 1e-12;
    notes.push(format!("loss deviation {dl:.1e}"));
    outcome(pass, notes.join(", "))
}

fn learned_fixture() -> Outcome {
    let run = || -> beamlab::Result<Outcome> {
        let dir = tempfile::tempdir()?;
        let stft = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let geometry = ArrayGeometry::default();
        let scenario = sample_scenario(&mut rng, &ScenarioRanges::anechoic(), &geometry, NoiseType::Stationary)?;
        let mix = synthetic_mixture(&scenario, &geometry, &MixtureSpec::default())?;
        let y = analyze(&mix.y, &stft)?;
        let frames = noise_frames_for(&stft, 8000)?;
        let (w, _) = design_beamformer(&y, DesignMethod::Mvdr, frames, 0)?;
        let s1 = beamlab::beamformer::apply_stage1(&w, &y)?;
        let psd = noise_psd_from_head(&s1, frames)?;
        let gains = lsa_gains(&s1, &psd, &Default::default())?;
        let fixture = StageWeights::new(w.w1().clone(), Some(gains_as_mask(&gains)), None, Provenance::Learned)?;
        let path = dir.path().join("fixture.exbf");
        save_weights(&fixture, &path, y.num_frames())?;
        let (loaded, _) = load_weights(&path)?;
        let reference = enhance_utterance(&mix.y, 0, &EnhanceConfig::for_method(Method::MvdrPf), None)?;
        let learned = enhance_utterance(&mix.y, 0, &EnhanceConfig::for_method(Method::Learned), Some(&loaded))?;
        let a = reference.estimate.channel(0);
        let b = learned.estimate.channel(0);
        let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = a.iter().map(|p| p * p).sum();
        let rel = (num / den).sqrt();
        Ok(outcome(rel < 1e-4, format!("relative L2 difference {rel:.2e}")))
    };
    run().unwrap_or_else(|e| outcome(false, e.to_string()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("distortionless constraint (1000 random SPD cases)", distortionless),
        ("whitening identity (1000 random PSD matrices)", whitening),
        ("RTF oracle: rank-1 plus noise closed form", rtf_analytic),
        ("RTF oracle: simulated anechoic median error", rtf_simulated),
        ("STFT roundtrip (100 random multichannel signals)", stft_roundtrip),
        ("beampattern: source 350, noise 330, anechoic MVDR", beampattern_near_pair),
        ("beampattern: brute-force oracle", beampattern_oracle),
        ("end-to-end 20-utterance MVDR+PF batch", end_to_end),
        ("metric oracles (SI-SDR, NR, losses)", metric_oracles),
        ("learned-weight fixture reproduces MVDR+PF", learned_fixture),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += !o.pass as usize;
        println!("[{tag}] {name}: {} ({:.2} s)", o.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
