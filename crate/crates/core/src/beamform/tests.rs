use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::roomsim::{simulate_rirs, ObservationTensor, Rir, RirSet, Scene, SourceRole};
use crate::signal::{StftConfig, Waveform};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn delay_rirs(delays: &[&[usize]], roles: Vec<SourceRole>) -> RirSet {
    let rirs = delays
        .iter()
        .map(|per_mic| {
            vec![per_mic
                .iter()
                .map(|&k| {
                    let mut taps = vec![0.0; k + 1];
                    taps[k] = 1.0;
                    Rir { taps, sample_rate: 16000 }
                })
                .collect()]
        })
        .collect();
    RirSet { roles, mics_per_array: vec![delays[0].len()], sample_rate: 16000, rirs }
}

fn hermitian_eigenvalues(r: ndarray::ArrayView2<'_, Complex64>) -> Vec<f64> {
    let m = r.nrows();
    let mat = DMatrix::from_fn(m, m, |p, q| r[(p, q)]);
    let mut ev: Vec<f64> = mat.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn pure_delay_steering_phase() {
    let rirs = delay_rirs(&[&[10, 13]], vec![SourceRole::Target]);
    let cfg = StftConfig::default();
    let (d, _) = oracle_quantities(&rirs, &cfg).unwrap();
    let n = cfg.window_length() as f64;
    for i in 0..cfg.bins() {
        let di = d.per_array[0][(i, 1)];
        assert!((di.norm() - 1.0).abs() < 1e-12);
        let expect = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * i as f64 * 3.0 / n);
        assert!((di - expect).norm() < 1e-9, "bin {i}");
        assert_eq!(d.per_array[0][(i, 0)], c(1.0, 0.0));
    }
}

#[test]
fn transfer_function_of_long_rir() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let taps: Vec<f64> = (0..1300).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h = transfer_function(&taps, 512);
    for i in [0, 1, 100, 256] {
        let direct: Complex64 = taps
            .iter()
            .enumerate()
            .map(|(k, &t)| t * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (i * k) as f64 / 512.0))
            .sum();
        assert!((h[i] - direct).norm() < 1e-9);
    }
}

#[test]
fn no_interferer_gives_scaled_identity() {
    let rirs = delay_rirs(&[&[10, 11, 12]], vec![SourceRole::Target]);
    let (_, r) = oracle_quantities(&rirs, &StftConfig::default()).unwrap();
    for ri in r.per_array[0].axis_iter(Axis(0)) {
        for p in 0..3 {
            for q in 0..3 {
                let expect = if p == q { DIAGONAL_LOADING } else { 0.0 };
                assert_eq!(ri[(p, q)], c(expect, 0.0));
            }
        }
    }
}

#[test]
fn single_interferer_is_rank_one_before_loading() {
    let scene = Scene::preset(2, 0.0).unwrap();
    let mut rirs = simulate_rirs(&scene).unwrap();
    rirs.roles.truncate(2);
    rirs.rirs.truncate(2);
    let (_, r) = oracle_quantities(&rirs, &StftConfig::default()).unwrap();
    for a in 0..2 {
        for ri in r.per_array[a].axis_iter(Axis(0)) {
            let tr: f64 = ri.diag().iter().map(|x| x.re).sum();
            // tr(loaded) = tr0 (1 + delta)
            let eps = DIAGONAL_LOADING * tr / (3.0 * (1.0 + DIAGONAL_LOADING));
            let mut raw = ri.to_owned();
            for k in 0..3 {
                raw[(k, k)].re -= eps;
            }
            let ev = hermitian_eigenvalues(raw.view());
            assert!(ev[1].abs() < 1e-10 * ev[0] && ev[2].abs() < 1e-10 * ev[0], "{ev:?}");
        }
    }
}

#[test]
fn loaded_covariance_is_hermitian_with_eigenvalue_floor() {
    let scene = Scene::preset(3, 0.1).unwrap();
    let rirs = simulate_rirs(&scene).unwrap();
    let (_, r) = oracle_quantities(&rirs, &StftConfig::default()).unwrap();
    for ra in &r.per_array {
        for ri in ra.axis_iter(Axis(0)) {
            for p in 0..3 {
                for q in 0..3 {
                    assert!((ri[(p, q)] - ri[(q, p)].conj()).norm() <= 1e-12 * ri[(p, p)].re.max(1.0));
                }
            }
            let tr: f64 = ri.diag().iter().map(|x| x.re).sum();
            let floor = DIAGONAL_LOADING * (tr / (1.0 + DIAGONAL_LOADING)) / 3.0;
            let ev = hermitian_eigenvalues(ri);
            assert!(ev[2] >= floor * (1.0 - 1e-9), "{} < {floor}", ev[2]);
        }
    }
}

#[test]
fn identity_covariance_gives_matched_filter() {
    let d = DVector::from_vec(vec![c(1.0, 0.0), c(0.3, -0.4), c(-0.7, 0.2)]);
    let w = mvdr_weights(&DMatrix::identity(3, 3), &d).unwrap();
    let expect = &d / d.dotc(&d);
    assert!((w - expect).norm() < 1e-14);
}

#[test]
fn singular_covariance_rejected() {
    let d = DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
    assert!(mvdr_weights(&DMatrix::zeros(2, 2), &d).is_none());
}

fn scene_outputs(scene: &Scene) -> (SteeringSet, NoiseCovarianceSet, MvdrOutput, ObservationTensor) {
    let rirs = simulate_rirs(scene).unwrap();
    let cfg = StftConfig::default();
    let (d, r) = oracle_quantities(&rirs, &cfg).unwrap();
    // target-only observation built directly from the steering vectors
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = Array2::from_shape_fn((cfg.bins(), 20), |_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let arrays = d
        .per_array
        .iter()
        .map(|da| Array3::from_shape_fn((3, cfg.bins(), 20), |(m, i, j)| da[(i, m)] * s[(i, j)]))
        .collect();
    let x = ObservationTensor { arrays, window_length: 512, hop: 256, sample_rate: 16000 };
    let out = mvdr(&x, &d, &r).unwrap();
    (d, r, out, x)
}

#[test]
fn distortionless_and_target_passthrough() {
    for t60 in [0.0, 0.256] {
        let scene = Scene::preset(2, t60).unwrap();
        let (d, _, out, x) = scene_outputs(&scene);
        for a in 0..2 {
            let w = &out.weights.per_array[a];
            for i in 0..257 {
                let g: Complex64 = (0..3).map(|m| w[(i, m)].conj() * d.per_array[a][(i, m)]).sum();
                assert!((g - 1.0).norm() < 1e-6, "a={a} i={i} {g}");
            }
            let y = out.outputs.values.index_axis(Axis(2), a);
            let x0 = x.arrays[a].index_axis(Axis(0), 0);
            for (p, q) in y.iter().zip(x0.iter()) {
                assert!((p - q).norm() < 1e-6);
            }
        }
    }
}

/// White noise limited to `lo..hi` Hz by zeroing FFT bins.
pub(crate) fn band_noise(len: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    use rustfft::FftPlanner;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex64> = (0..len).map(|_| c(rng.gen_range(-1.0..1.0), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * 16000.0 / len as f64;
        if f < lo || f > hi {
            *v = c(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|v| v.re / len as f64).collect()
}

#[test]
fn rank_one_interferer_suppressed() {
    // interferer well off both look directions; the rendered scene holds only it
    let mut scene = Scene::preset(2, 0.0).unwrap();
    scene.sources.truncate(1);
    scene.sources.push(crate::roomsim::SourcePlacement { position: [4.5, 1.2], role: SourceRole::Interferer });
    let rirs = simulate_rirs(&scene).unwrap();
    let cfg = StftConfig::default();
    let (d, r) = oracle_quantities(&rirs, &cfg).unwrap();
    let dry = vec![Waveform::zeros(32000, 16000), wave(band_noise(32000, 300.0, 7000.0, 2))];
    let rendered = crate::roomsim::render_with_rirs(&rirs, &dry, &cfg).unwrap();
    let out = mvdr(&rendered.observations, &d, &r).unwrap();
    for a in 0..2 {
        let x = &rendered.observations.arrays[a];
        let e_in: f64 = x.index_axis(Axis(0), 0).iter().map(|v| v.norm_sqr()).sum();
        let e_out: f64 = out.outputs.values.index_axis(Axis(2), a).iter().map(|v| v.norm_sqr()).sum();
        let db = 10.0 * (e_in / e_out).log10();
        assert!(db >= 30.0, "array {a}: {db:.1} dB");
    }
}

#[test]
fn per_bin_null_matches_closed_form() {
    // R = g g^H + eps I gives w^H g = eps (d^H g)^* / (eps d^H d + |g|^2 d^H d - |d^H g|^2) (conj.)
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let d = DVector::from_fn(3, |k, _| if k == 0 { c(1.0, 0.0) } else { c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) });
        let g = DVector::from_fn(3, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut r = Array2::from_shape_fn((3, 3), |(p, q)| g[p] * g[q].conj());
        load_diagonal(&mut r, DIAGONAL_LOADING);
        let eps = DIAGONAL_LOADING * g.norm_squared() / 3.0;
        let w = mvdr_weights(&DMatrix::from_fn(3, 3, |p, q| r[(p, q)]), &d).unwrap();
        let got = w.dotc(&g);
        let dg = d.dotc(&g);
        let (dd, gg) = (d.norm_squared(), g.norm_squared());
        let expect = eps * dg / (eps * dd + gg * dd - dg.norm_sqr());
        assert!((got - expect).norm() <= 1e-9 * expect.norm().max(1e-12), "{got} vs {expect}");
    }
}

#[test]
fn mvdr_shape_mismatch_rejected() {
    let scene = Scene::preset(2, 0.0).unwrap();
    let (d, r, _, mut x) = scene_outputs(&scene);
    x.arrays.pop();
    assert!(mvdr(&x, &d, &r).is_err());
}

#[test]
fn weight_dump_layout() {
    let w = BeamformerWeights { per_array: vec![Array2::from_shape_vec((1, 2), vec![c(1.0, 2.0), c(3.0, 4.0)]).unwrap()] };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.bin");
    write_weights(&p, &w).unwrap();
    let bytes = std::fs::read(p).unwrap();
    let vals: Vec<f64> = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
}

fn noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn wave(samples: Vec<f64>) -> Waveform {
    Waveform::new(samples, 16000).unwrap()
}

#[test]
fn das_identical_copies() {
    let x = wave(noise(2000, 1));
    let y = delay_and_sum(&[x.clone(), x.clone()], 40).unwrap();
    assert_eq!(y, x);
}

#[test]
fn das_recovers_five_sample_lag() {
    let x = noise(3000, 2);
    let mut delayed = vec![0.0; 5];
    delayed.extend_from_slice(&x[..2995]);
    assert_eq!(best_lag(&x, &delayed, 40), 5);
    let y = delay_and_sum(&[wave(x.clone()), wave(delayed)], 40).unwrap();
    for n in 0..2995 {
        assert!((y.samples[n] - x[n]).abs() < 1e-10);
    }
}

#[test]
fn das_single_input_is_identity() {
    let x = wave(noise(500, 3));
    assert_eq!(delay_and_sum(std::slice::from_ref(&x), 10).unwrap(), x);
}

#[test]
fn das_permutation_invariant_with_fixed_anchor() {
    let base = noise(2000, 4);
    let shifted = |k: usize, seed: u64| {
        let mut v = vec![0.0; k];
        v.extend(base.iter().zip(noise(2000, seed)).map(|(b, n)| b + 0.1 * n).take(2000 - k));
        wave(v)
    };
    let a = wave(base.clone());
    let (b, c2, d) = (shifted(3, 5), shifted(7, 6), shifted(1, 7));
    let y1 = delay_and_sum(&[a.clone(), b.clone(), c2.clone(), d.clone()], 20).unwrap();
    let y2 = delay_and_sum(&[a, d, b, c2], 20).unwrap();
    for (p, q) in y1.samples.iter().zip(&y2.samples) {
        assert!((p - q).abs() <= 1e-15);
    }
}

#[test]
fn das_silent_estimate_contributes_nothing() {
    let x = wave(noise(800, 8));
    let y = delay_and_sum(&[Waveform::zeros(800, 16000), x.clone()], 10).unwrap();
    for (p, q) in y.samples.iter().zip(&x.samples) {
        assert!((p - 0.5 * q).abs() < 1e-15);
    }
    let z = delay_and_sum(&[Waveform::zeros(50, 16000)], 10).unwrap();
    assert!(z.samples.iter().all(|&s| s == 0.0));
}

#[test]
fn das_rate_mismatch_rejected() {
    let x = wave(noise(100, 9));
    let y = Waveform::new(noise(100, 10), 8000).unwrap();
    assert!(delay_and_sum(&[x, y], 5).is_err());
}

#[test]
fn default_lag_bound() {
    assert_eq!(default_max_lag(3.43, 343.0, 16000), 160 + 32);
}

