//! Speech-like test signals: voiced syllables with formant envelopes,
//! fricative bursts and pauses, one fundamental range per talker.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spotform::signal::{write_wav, WavFormat, Waveform};

/// (F1, F2, F3) in Hz for a handful of vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .enumerate()
        .map(|(n, &fc)| {
            let bw = 80.0 + 40.0 * n as f64;
            1.0 / (1.0 + ((f - fc) / bw).powi(2))
        })
        .sum::<f64>()
        * (1.0 + f / 500.0).recip().sqrt()
}

/// `secs` of speech-like signal at `fs` with base pitch `f0`.
pub fn synthetic_speech(seed: u64, f0: f64, tract: f64, secs: f64, fs: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs_f = fs as f64;
    let len = (secs * fs_f) as usize;
    let mut out = vec![0.0; len];
    let mut pos = (rng.gen_range(0.02..0.1) * fs_f) as usize;
    while pos < len {
        let syl = (rng.gen_range(0.12..0.32) * fs_f) as usize;
        let end = (pos + syl).min(len);
        let (va, vb) = (VOWELS[rng.gen_range(0..VOWELS.len())], VOWELS[rng.gen_range(0..VOWELS.len())]);
        let pitch0 = f0 * 2f64.powf(rng.gen_range(-0.5..0.5));
        let glide = rng.gen_range(-0.4..0.4);
        let level = rng.gen_range(0.4..1.0);
        let mut phase = 0.0;
        let harmonics = (4000.0 / (pitch0 * 0.8)) as usize;
        let phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        for n in pos..end {
            let u = (n - pos) as f64 / syl as f64;
            let pitch = pitch0 * (1.0 + glide * u) * (1.0 + 0.01 * (2.0 * PI * 5.0 * n as f64 / fs_f).sin());
            phase += 2.0 * PI * pitch / fs_f;
            let mut formants = [0.0; 3];
            for q in 0..3 {
                formants[q] = tract * (va[q] + (vb[q] - va[q]) * u);
            }
            let env = (u * 12.0).min(1.0) * ((1.0 - u) * 6.0).min(1.0);
            let mut s = 0.0;
            for (h, ph) in phases.iter().enumerate() {
                let f = pitch * (h + 1) as f64;
                if f > 0.45 * fs_f {
                    break;
                }
                s += formant_gain(f, &formants) * ((h + 1) as f64 * phase + ph).sin();
            }
            out[n] += level * env * s;
        }
        pos = end;
        if rng.gen_bool(0.35) && pos < len {
            // fricative: differentiated noise
            let fr = ((rng.gen_range(0.04..0.12) * fs_f) as usize).min(len - pos);
            let mut prev = 0.0;
            let amp = rng.gen_range(0.05..0.2);
            for n in 0..fr {
                let w: f64 = rng.gen_range(-1.0..1.0);
                let env = (PI * n as f64 / fr as f64).sin();
                out[pos + n] += amp * env * (w - prev);
                prev = w;
            }
            pos += fr;
        }
        pos += (rng.gen_range(0.02..0.15) * fs_f) as usize;
    }
    out
}

/// Writes a target and `interferers` interferer WAVs to `dir`.
pub fn write_speech_set(dir: &Path, interferers: usize, secs: f64) -> (PathBuf, Vec<PathBuf>) {
    let fs = 16000;
    let save = |name: &str, x: Vec<f64>| {
        let p = dir.join(name);
        write_wav(&p, &Waveform::new(x, fs).unwrap(), WavFormat::Float32).unwrap();
        p
    };
    let target = save("target.wav", synthetic_speech(11, 125.0, 1.0, secs, fs));
    let voices = [(210.0, 1.18), (95.0, 0.9), (170.0, 1.1), (240.0, 1.25)];
    let others = (0..interferers)
        .map(|k| save(&format!("interferer{k}.wav"), synthetic_speech(100 + k as u64, voices[k % 4].0, voices[k % 4].1, secs, fs)))
        .collect();
    (target, others)
}
