//! Property tests for the core invariants.

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use segbeam::metrics::{change_point_score, si_sdr};
use segbeam::stft::{istft_inverse, stft_forward, Spectrogram, StftConfig, WindowKind};
use segbeam::{CovarianceState, Snapshot, SteeringVector};

fn complex_vec(p: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// |wᴴν − 1| ≤ 1e-10 after every update, for arbitrary data and steering.
    #[test]
    fn distortionless_constraint_holds(
        nu_raw in complex_vec(4),
        snaps in prop::collection::vec(complex_vec(4), 1..40),
        delta in 1e-3..10.0f64,
    ) {
        let nu_v = DVector::from_iterator(4, nu_raw.iter().map(|&(re, im)| Complex64::new(re, im)));
        prop_assume!(nu_v.norm() > 1e-6);
        let nu = SteeringVector::new(nu_v, 0).unwrap();
        let mut st = CovarianceState::init(&nu, delta, 0).unwrap();
        for (t, s) in snaps.iter().enumerate() {
            let x = Snapshot::new(
                DVector::from_iterator(4, s.iter().map(|&(re, im)| Complex64::new(re, im))),
                t,
            ).unwrap();
            st.rank1_update(&x).unwrap();
            prop_assert!(st.constraint_error() <= 1e-10);
            prop_assert!(st.rho() > 0.0);
        }
    }

    /// stft(a·x + b·y) = a·stft(x) + b·stft(y)
    #[test]
    fn stft_is_linear(
        seed in 0u64..1000,
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let config = StftConfig::new(64, 32, WindowKind::SqrtHann, 8000).unwrap();
        let len = 300;
        let x: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(xv, yv)| a * xv + b * yv).collect();

        let sx = stft_forward(&[x], &config).unwrap();
        let sy = stft_forward(&[y], &config).unwrap();
        let sm = stft_forward(&[mix], &config).unwrap();
        for bin in 0..sm.bins() {
            for frame in 0..sm.frames() {
                let want = sx.at(bin, frame, 0) * Complex64::new(a, 0.0)
                    + sy.at(bin, frame, 0) * Complex64::new(b, 0.0);
                prop_assert!((sm.at(bin, frame, 0) - want).norm() <= 1e-12 * (1.0 + want.norm()));
            }
        }
    }

    /// Round trip through the filterbank reproduces the signal.
    #[test]
    fn stft_roundtrip(seed in 0u64..1000, hop_div in 1usize..3) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frame = 128;
        let config = StftConfig::new(frame, frame >> hop_div, WindowKind::SqrtHann, 8000).unwrap();
        let len = 700;
        let audio: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let spec = stft_forward(&[audio.clone()], &config).unwrap();
        let back = istft_inverse(&spec).unwrap();
        prop_assert_eq!(back[0].len(), len);
        for i in 0..len {
            prop_assert!((audio[i] - back[0][i]).abs() <= 1e-10);
        }
    }

    /// si_sdr(a·x, s) = si_sdr(x, s) for any a > 0.
    #[test]
    fn si_sdr_scale_invariant(seed in 0u64..1000, scale in 1e-3..1e3f64) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let reference: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let estimate: Vec<f64> = reference
            .iter()
            .map(|v| v + 0.3 * (rng.random::<f64>() - 0.5))
            .collect();
        let base = si_sdr(&estimate, &reference).unwrap();
        let scaled: Vec<f64> = estimate.iter().map(|v| v * scale).collect();
        let after = si_sdr(&scaled, &reference).unwrap();
        prop_assert!((base - after).abs() <= 1e-9);
    }

    /// Adding an orthogonal component strictly decreases SI-SDR.
    #[test]
    fn si_sdr_penalizes_orthogonal_components(seed in 0u64..1000, eps in 0.01..1.0f64) {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 256;
        let reference: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let estimate = reference.clone();
        // Gram-Schmidt an orthogonal perturbation
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let rr: f64 = reference.iter().map(|v| v * v).sum();
        let dot: f64 = raw.iter().zip(&reference).map(|(a, b)| a * b).sum();
        let orth: Vec<f64> = raw.iter().zip(&reference).map(|(a, b)| a - dot / rr * b).collect();
        let perturbed: Vec<f64> = estimate.iter().zip(&orth).map(|(e, o)| e + eps * o).collect();
        let clean = si_sdr(&estimate, &reference).unwrap();
        let dirty = si_sdr(&perturbed, &reference).unwrap();
        prop_assert!(dirty < clean);
    }

    /// score(truth, truth) = (1, 1, 0) for any sorted list.
    #[test]
    fn change_point_self_score(mut truth in prop::collection::vec(0usize..10_000, 0..20)) {
        truth.sort_unstable();
        truth.dedup();
        let (p, r, l) = change_point_score(&truth, &truth, 0);
        prop_assert_eq!(p, 1.0);
        prop_assert_eq!(r, 1.0);
        if truth.is_empty() {
            prop_assert!(l.is_nan());
        } else {
            prop_assert_eq!(l, 0.0);
        }
    }
}

/// Mechanical check that the spectrogram container round-trips cell writes.
#[test]
fn spectrogram_cell_addressing() {
    let config = StftConfig::new(32, 16, WindowKind::SqrtHann, 8000).unwrap();
    let mut spec = Spectrogram::zeros(config, 5, 3, 100);
    let mut k = 0.0;
    for bin in 0..spec.bins() {
        for frame in 0..5 {
            for ch in 0..3 {
                spec.set(bin, frame, ch, Complex64::new(k, -k));
                k += 1.0;
            }
        }
    }
    let mut k = 0.0;
    for bin in 0..spec.bins() {
        for frame in 0..5 {
            for ch in 0..3 {
                assert_eq!(spec.at(bin, frame, ch), Complex64::new(k, -k));
                k += 1.0;
            }
        }
    }
}
