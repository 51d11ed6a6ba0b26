//! Cross-module checks: simulator ground truth feeding RTF estimation and
//! the segmenter, and the recursive-vs-direct covariance oracle at scale.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use segbeam::rtf::estimate_rtf_cw;
use segbeam::scene::{render_scene, ArrayGeometry, SceneSpec, SignalKind, SourceTrack, TrackSegment};
use segbeam::segmenter::{offline_dp_segment, run_online, SegmenterConfig};
use segbeam::stft::{stft_forward, Spectrogram, StftConfig, WindowKind};
use segbeam::{CovarianceState, Snapshot, SteeringVector};

fn cx(rng: &mut impl Rng, scale: f64) -> Complex64 {
    Complex64::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * Complex64::new(scale / 2f64.sqrt(), 0.0)
}

#[test]
fn woodbury_matches_direct_inversion_over_long_run() {
    // p = 8, 500 random snapshots, δ = 0.1: the recursively maintained
    // inverse must track direct inversion at every 50th step.
    let p = 8;
    let delta = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let nu = SteeringVector::unit(p, 0).unwrap();
    let mut st = CovarianceState::init(&nu, delta, 0).unwrap();
    let mut scm = DMatrix::<Complex64>::from_diagonal_element(p, p, Complex64::new(delta, 0.0));
    for t in 0..500 {
        let x = Snapshot::new(DVector::from_fn(p, |_, _| cx(&mut rng, 1.0)), t).unwrap();
        scm.gerc(Complex64::ONE, &x.values, &x.values, Complex64::ONE);
        st.rank1_update(&x).unwrap();
        if (t + 1) % 50 == 0 {
            let direct = scm.clone().try_inverse().expect("SCM invertible");
            let err = (st.s_inv() - &direct).norm() / direct.norm();
            assert!(err <= 1e-7, "step {}: relative Frobenius error {err:.3e}", t + 1);
        }
    }
}

#[test]
fn rtf_estimate_matches_scene_ground_truth() {
    // Noiseless static white-noise source plus a separate white sensor-noise
    // segment: per-bin covariance whitening must recover the analytic
    // steering to within 2° mean phase error. Magnitudes are checked over the
    // interpolation passband (≤ 0.8·Nyquist); above it the 64-tap
    // windowed-sinc transition makes the rendered gains diverge from the
    // ideal spherical-wave model by design.
    let geometry = ArrayGeometry::circular([0.0, 0.0, 1.2], 0.06, 4).unwrap();
    let spec = SceneSpec {
        geometry: geometry.clone(),
        target: SourceTrack::static_source([2.2, 0.7, 1.4], SignalKind::WhiteNoise, 0.0),
        interferers: vec![],
        noise_level_db: -400.0,
        duration_s: 5.0,
        sample_rate: 16000,
        seed: 31,
    };
    let out = render_scene(&spec).unwrap();
    let cfg = StftConfig::default_1024(16000);
    let noisy = stft_forward(&out.target_image, &cfg).unwrap();

    // target-free segment: plain white sensor noise
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut noise = Spectrogram::zeros(cfg, 64, 4, 0);
    for bin in 0..noise.bins() {
        for frame in 0..64 {
            for ch in 0..4 {
                noise.set(bin, frame, ch, cx(&mut rng, 1.0));
            }
        }
    }

    let est = estimate_rtf_cw(&noisy, &noise, 0).unwrap();
    let truth = spec.target_steering(1024, 0).unwrap();
    let mut phase_err_sum = 0.0;
    let mut phase_count = 0usize;
    let mut mag_err_sum = 0.0;
    let mut mag_count = 0usize;
    let passband = (noisy.bins() as f64 * 0.8) as usize;
    for bin in 1..noisy.bins() - 1 {
        if est.condition_flags[bin] {
            continue;
        }
        let nu_est = &est.nu_per_bin[bin];
        let nu_true = truth[bin].values();
        for ch in 1..4 {
            let ratio = nu_est[ch] / nu_true[ch];
            phase_err_sum += ratio.arg().abs().to_degrees();
            phase_count += 1;
            if bin <= passband {
                mag_err_sum += (ratio.norm() - 1.0).abs();
                mag_count += 1;
            }
        }
    }
    assert!(phase_count > 400, "too few clear bins ({phase_count})");
    let mean_phase = phase_err_sum / phase_count as f64;
    let mean_mag = mag_err_sum / mag_count as f64;
    assert!(mean_phase <= 2.0, "mean phase error {mean_phase:.3}° over {phase_count} entries");
    assert!(mean_mag <= 0.02, "passband mean magnitude error {mean_mag:.4}");
}

#[test]
fn rtf_error_shrinks_as_frames_double() {
    // Monte-Carlo consistency: median angle between the estimate and the true
    // direction decreases as the frame count doubles 32 → 64 → 128.
    let p = 4;
    let config = StftConfig::new(16, 8, WindowKind::SqrtHann, 16000).unwrap();
    let mut medians = Vec::new();
    for &frames in &[32usize, 64, 128] {
        let mut errs = Vec::new();
        for seed in 0..15 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let dirs: Vec<DVector<Complex64>> = (0..config.bins())
                .map(|_| DVector::from_fn(p, |_, _| cx(&mut rng, 1.5)))
                .collect();
            let mut noisy = Spectrogram::zeros(config, frames, p, 0);
            let mut noise = Spectrogram::zeros(config, frames.max(p), p, 0);
            for bin in 0..config.bins() {
                for frame in 0..frames {
                    let g = cx(&mut rng, 1.0);
                    for ch in 0..p {
                        noisy.set(bin, frame, ch, dirs[bin][ch] * g + cx(&mut rng, 0.4));
                    }
                }
                for frame in 0..noise.frames() {
                    for ch in 0..p {
                        noise.set(bin, frame, ch, cx(&mut rng, 0.4));
                    }
                }
            }
            let est = estimate_rtf_cw(&noisy, &noise, 0).unwrap();
            for bin in 0..config.bins() {
                let nu = &est.nu_per_bin[bin];
                let d = &dirs[bin];
                // angle between the two complex directions
                let cosv = nu.dotc(d).norm() / (nu.norm() * d.norm());
                errs.push(cosv.clamp(-1.0, 1.0).acos());
            }
        }
        errs.sort_by(|a, b| a.total_cmp(b));
        medians.push(errs[errs.len() / 2]);
    }
    assert!(
        medians[0] > medians[1] && medians[1] > medians[2],
        "median angles must shrink: {medians:?}"
    );
}

#[test]
fn three_planted_changes_are_all_found() {
    // Piecewise scene with 3 covariance changes: the online partition must
    // contain exactly 3 detected changes, each within ±(τ+10) of truth, and
    // match the offline oracle's count.
    // Interferer directions rotate through array axes; the constraint
    // direction overlaps them all, so each regime change is visible in the
    // beamformed output.
    let p = 4;
    let tau = 8;
    let seg = 150;
    let axis = |i: usize| {
        let mut v = DVector::<Complex64>::zeros(p);
        v[i] = Complex64::new(1.0, 0.0);
        v
    };
    let dirs = [axis(1), axis(2), axis(3), axis(0)];
    let truth: Vec<usize> = vec![seg, 2 * seg, 3 * seg];
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut snaps = Vec::new();
    for (k, d) in dirs.iter().enumerate() {
        for t in 0..seg {
            let g = cx(&mut rng, 8.0);
            let mut v = d * g;
            for e in v.iter_mut() {
                *e += cx(&mut rng, 0.3);
            }
            snaps.push(Snapshot::new(v, k * seg + t).unwrap());
        }
    }
    let ones = DVector::from_element(p, Complex64::new(0.5, 0.0));
    let nu = SteeringVector::new(ones, 0).unwrap();
    let delta = 0.1;
    let penalty = segbeam::segmenter::default_penalty(&snaps, &nu, delta, 2.0).unwrap();
    let cfg = SegmenterConfig::new(penalty, delta, tau, None, p).unwrap();

    let (_, online) = run_online(&snaps, &nu, &cfg).unwrap();
    let detected: Vec<usize> = online[1..].to_vec();
    assert_eq!(detected.len(), truth.len(), "partition {online:?}");
    for (d, t) in detected.iter().zip(&truth) {
        assert!(d.abs_diff(*t) <= tau + 10, "detected {d} vs true {t}");
    }

    let (oracle, _) = offline_dp_segment(&snaps, &nu, &cfg).unwrap();
    assert_eq!(oracle.len(), online.len(), "oracle {oracle:?} vs online {online:?}");
}
