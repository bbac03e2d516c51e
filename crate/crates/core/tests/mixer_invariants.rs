use beamlab::mixer::{
    make_variant, mix, speech_like, stream_rng, synthetic_mixture, Mixture, MixtureSpec, VariantInputs,
};
use beamlab::room::{simulate_rir, ArrayGeometry, NoiseType, ReflectionOrder, RirSettings, Scenario};
use beamlab::signal::variance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn scenario(t60: f64, noise_type: NoiseType) -> Scenario {
    Scenario {
        lx: 7.0,
        ly: 8.0,
        lz: 3.0,
        t60,
        mic_center: [3.5, 3.0, 1.0],
        tilt_phi: 10.0,
        source_theta: 60.0,
        noise_theta: 120.0,
        source_r: 2.0,
        noise_r: 2.0,
        seed: 21,
        noise_type,
    }
}

fn short() -> MixtureSpec {
    MixtureSpec {
        duration_s: 2.0,
        switch_time_s: 1.2,
        ..Default::default()
    }
}

fn segment_snr(m: &Mixture, directional: &[f64]) -> f64 {
    let h = m.spec.head_samples();
    let x = &m.reference_target()[h..];
    variance(x) / variance(&directional[h..])
}

fn sensor_free(spec: &MixtureSpec) -> MixtureSpec {
    MixtureSpec {
        sensor_snr_db: 400.0,
        ..spec.clone()
    }
}

#[test]
fn directional_snr_at_reference_mic() {
    for t60 in [0.0, 0.4] {
        let spec = sensor_free(&short());
        let m = synthetic_mixture(&scenario(t60, NoiseType::Stationary), &ArrayGeometry::default(), &spec).unwrap();
        let r = segment_snr(&m, m.n.channel(0));
        assert!((r / 10f64.powf(0.3) - 1.0).abs() < 0.02, "T60 {t60}: ratio {r}");
    }
}

#[test]
fn babble_snr_at_reference_mic() {
    for kind in [NoiseType::BabbleNoise, NoiseType::BabbleVoice] {
        let spec = sensor_free(&short());
        let m = synthetic_mixture(&scenario(0.0, kind), &ArrayGeometry::default(), &spec).unwrap();
        let r = segment_snr(&m, m.n.channel(0));
        assert!((r / 10f64.powf(0.3) - 1.0).abs() < 0.02, "{kind}: ratio {r}");
        assert_eq!(m.extra_sources.len(), 10);
    }
}

#[test]
fn head_is_noise_only_and_mixing_is_additive() {
    for kind in NoiseType::ALL {
        let m = synthetic_mixture(&scenario(0.0, kind), &ArrayGeometry::default(), &short()).unwrap();
        let h = m.spec.head_samples();
        for c in 0..m.y.num_channels() {
            assert!(m.x.channel(c)[..h].iter().all(|&v| v == 0.0), "{kind}");
            for t in 0..m.y.len() {
                assert_eq!(m.y.channel(c)[t], m.x.channel(c)[t] + m.n.channel(c)[t]);
            }
        }
        assert_eq!(m.y.len(), m.spec.total_samples());
    }
}

#[test]
fn generation_is_deterministic() {
    for kind in NoiseType::ALL {
        let s = scenario(0.3, kind);
        let a = synthetic_mixture(&s, &ArrayGeometry::default(), &short()).unwrap();
        let b = synthetic_mixture(&s, &ArrayGeometry::default(), &short()).unwrap();
        assert_eq!(a, b);
    }
    let mut s = scenario(0.0, NoiseType::Stationary);
    let a = synthetic_mixture(&s, &ArrayGeometry::default(), &short()).unwrap();
    s.seed += 1;
    let b = synthetic_mixture(&s, &ArrayGeometry::default(), &short()).unwrap();
    assert_ne!(a.y, b.y);
}

#[test]
fn anechoic_target_is_delayed_attenuated_source() {
    let s = scenario(0.0, NoiseType::Stationary);
    let g = ArrayGeometry::default();
    let spec = short();
    let target = speech_like(spec.target_samples(), 16000, &mut ChaCha8Rng::seed_from_u64(4));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise: Vec<f64> = (0..spec.total_samples() + 16000)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let m = mix(&s, &g, &spec, &target, &noise).unwrap();
    let rir = simulate_rir(&s, &g, &s.source_position(), ReflectionOrder::DIRECT, &RirSettings::default()).unwrap();
    let head = spec.head_samples();
    for (c, h) in rir.filters.iter().enumerate() {
        // Direct convolution of the head-delayed target with the direct-path filter.
        for t in (head..m.x.len()).step_by(97) {
            let mut acc = 0.0;
            for (i, &hv) in h.iter().enumerate() {
                if t >= head + i && t - head - i < target.len() {
                    acc += hv * target[t - head - i];
                }
            }
            assert!((m.x.channel(c)[t] - acc).abs() < 1e-10, "mic {c} t {t}");
        }
    }
}

#[test]
fn speaker_switch_to_same_talker_and_place_is_stationary() {
    let s = scenario(0.0, NoiseType::SpeakerSwitch);
    let g = ArrayGeometry::default();
    let spec = short();
    let target = speech_like(spec.target_samples(), 16000, &mut stream_rng(s.seed, 1));
    let inputs = VariantInputs {
        target: Some(&target),
        alternate_target: Some(&target),
        alternate_theta: Some(s.source_theta),
        ..Default::default()
    };
    let switched = make_variant(NoiseType::SpeakerSwitch, &s, &g, &spec, &inputs).unwrap();
    let plain = make_variant(NoiseType::Stationary, &s, &g, &spec, &inputs).unwrap();
    assert_eq!(switched.x, plain.x);
    assert_eq!(switched.y, plain.y);
}

/// Spatial signature of the noise: cross-correlation between two mics,
/// compared between the head and the segment after the switch.
fn signature_change(m: &Mixture) -> f64 {
    let h = m.spec.head_samples();
    let sw = m.spec.switch_sample() + 1000;
    let pair = |lo: usize, hi: usize| {
        let a = &m.n.channel(0)[lo..hi];
        let b = &m.n.channel(3)[lo..hi];
        (0..=12)
            .map(|lag| {
                let n = a.len() - lag;
                let num: f64 = (0..n).map(|i| a[i] * b[i + lag]).sum();
                num / (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>()).sqrt()
            })
            .collect::<Vec<f64>>()
    };
    let before = pair(0, h);
    let after = pair(sw, sw + h);
    before.iter().zip(&after).map(|(x, y)| (x - y).abs()).sum()
}

#[test]
fn time_varying_noise_changes_spatial_signature() {
    let g = ArrayGeometry::default();
    let spec = sensor_free(&short());
    let stationary = synthetic_mixture(&scenario(0.0, NoiseType::Stationary), &g, &spec).unwrap();
    let mut s = scenario(0.0, NoiseType::TimeVaryingNoise);
    s.noise_theta = 30.0;
    let inputs = VariantInputs {
        alternate_theta: Some(150.0),
        ..Default::default()
    };
    let varying = make_variant(NoiseType::TimeVaryingNoise, &s, &g, &spec, &inputs).unwrap();
    assert!(signature_change(&varying) > 5.0 * signature_change(&stationary));
}
