use ndarray::{Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{simulate_rirs, RirSet, Scene};
use crate::signal::{convolve, stft, StftConfig, Waveform};
use crate::{Error, Result};

/// Per-array multichannel STFTs; `arrays[a][(m, i, j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTensor {
    pub arrays: Vec<Array3<Complex64>>,
    pub window_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl ObservationTensor {
    pub fn array_count(&self) -> usize {
        self.arrays.len()
    }

    pub fn bins(&self) -> usize {
        self.arrays[0].dim().1
    }

    pub fn frames(&self) -> usize {
        self.arrays[0].dim().2
    }
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub observations: ObservationTensor,
    /// Time-domain mic signals, `[array][mic]`.
    pub mic_signals: Vec<Vec<Waveform>>,
    /// Target image at each array's reference mic (mic 0).
    pub references: Vec<Waveform>,
    /// Samples per rendered signal (the longest dry source).
    pub length: usize,
}

/// Simulates the scene's RIRs and renders the dry sources through them.
pub fn render_observations(scene: &Scene, dry: &[Waveform], cfg: &StftConfig) -> Result<Rendered> {
    if dry.len() != scene.sources.len() {
        return Err(Error::Dimension(format!("{} dry sources for {} scene sources", dry.len(), scene.sources.len())));
    }
    let rirs = simulate_rirs(scene)?;
    render_with_rirs(&rirs, dry, cfg)
}

/// Convolves each dry source with its RIRs and sums per mic; signals are cut
/// to the longest dry source.
pub fn render_with_rirs(rirs: &RirSet, dry: &[Waveform], cfg: &StftConfig) -> Result<Rendered> {
    if dry.len() != rirs.sources() {
        return Err(Error::Dimension(format!("{} dry sources for {} RIR sources", dry.len(), rirs.sources())));
    }
    for w in dry {
        if w.sample_rate != rirs.sample_rate {
            return Err(Error::SampleRateMismatch { expected: rirs.sample_rate, found: w.sample_rate });
        }
    }
    if cfg.sample_rate != rirs.sample_rate {
        return Err(Error::SampleRateMismatch { expected: rirs.sample_rate, found: cfg.sample_rate });
    }
    let length = dry.iter().map(Waveform::len).max().unwrap_or(0);
    if length == 0 {
        return Err(Error::EmptySignal);
    }
    let image = |s: usize, a: usize, m: usize| -> Vec<f64> {
        let mut y = convolve(&dry[s].samples, &rirs.get(s, a, m).taps);
        y.resize(length, 0.0);
        y
    };

    let pairs: Vec<(usize, usize)> =
        (0..rirs.arrays()).flat_map(|a| (0..rirs.mics_per_array[a]).map(move |m| (a, m))).collect();
    let mixed: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(a, m)| {
            let mut acc = vec![0.0; length];
            for s in 0..rirs.sources() {
                for (x, y) in acc.iter_mut().zip(image(s, a, m)) {
                    *x += y;
                }
            }
            acc
        })
        .collect();

    let target = rirs.target_index();
    let references = (0..rirs.arrays())
        .map(|a| Waveform { samples: image(target, a, 0), sample_rate: rirs.sample_rate })
        .collect();

    let mut mic_signals: Vec<Vec<Waveform>> = vec![Vec::new(); rirs.arrays()];
    for (&(a, _), samples) in pairs.iter().zip(mixed) {
        mic_signals[a].push(Waveform { samples, sample_rate: rirs.sample_rate });
    }

    let frames = cfg.frames(length);
    let mut arrays = Vec::with_capacity(rirs.arrays());
    for mics in &mic_signals {
        let mut x = Array3::zeros((mics.len(), cfg.bins(), frames));
        for (m, w) in mics.iter().enumerate() {
            x.index_axis_mut(Axis(0), m).assign(&stft(w, cfg)?.values);
        }
        arrays.push(x);
    }
    Ok(Rendered {
        observations: ObservationTensor {
            arrays,
            window_length: cfg.window_length(),
            hop: cfg.hop(),
            sample_rate: cfg.sample_rate,
        },
        mic_signals,
        references,
        length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roomsim::SourceRole;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap()
    }

    #[test]
    fn impulse_renders_the_rir() {
        let mut scene = Scene::preset(2, 0.0).unwrap();
        scene.sources.truncate(1);
        let rirs = simulate_rirs(&scene).unwrap();
        let mut imp = Waveform::zeros(2000, 16000);
        imp.samples[0] = 1.0;
        let cfg = StftConfig::default();
        let r = render_with_rirs(&rirs, &[imp], &cfg).unwrap();
        for a in 0..2 {
            for m in 0..3 {
                let taps = &rirs.get(0, a, m).taps;
                let mut expect = taps.clone();
                expect.resize(2000, 0.0);
                for (x, y) in r.mic_signals[a][m].samples.iter().zip(&expect) {
                    assert!((x - y).abs() < 1e-12);
                }
                let spec = stft(&Waveform { samples: expect, sample_rate: 16000 }, &cfg).unwrap();
                let diff = (&r.observations.arrays[a].index_axis(Axis(0), m) - &spec.values)
                    .iter()
                    .map(|c| c.norm())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-12);
            }
        }
    }

    #[test]
    fn superposition() {
        let scene = Scene::preset(2, 0.05).unwrap();
        let rirs = simulate_rirs(&scene).unwrap();
        let cfg = StftConfig::default();
        let dry: Vec<Waveform> = (0..3).map(|s| noise(3000, s)).collect();
        let joint = render_with_rirs(&rirs, &dry, &cfg).unwrap();
        let silent = Waveform::zeros(3000, 16000);
        let mut summed = vec![vec![vec![0.0; 3000]; 3]; 2];
        for s in 0..3 {
            let only: Vec<Waveform> = (0..3).map(|t| if t == s { dry[t].clone() } else { silent.clone() }).collect();
            let r = render_with_rirs(&rirs, &only, &cfg).unwrap();
            for a in 0..2 {
                for m in 0..3 {
                    for (acc, x) in summed[a][m].iter_mut().zip(&r.mic_signals[a][m].samples) {
                        *acc += x;
                    }
                }
            }
        }
        for a in 0..2 {
            for m in 0..3 {
                let j = &joint.mic_signals[a][m].samples;
                let err: f64 = j.iter().zip(&summed[a][m]).map(|(x, y)| (x - y).powi(2)).sum();
                let norm: f64 = j.iter().map(|x| x * x).sum();
                assert!(err.sqrt() <= 1e-12 * norm.sqrt());
            }
        }
    }

    #[test]
    fn shapes_and_references() {
        let scene = Scene::preset(2, 0.0).unwrap();
        let cfg = StftConfig::default();
        let dry: Vec<Waveform> = (0..3).map(|s| noise(16000, s)).collect();
        let r = render_observations(&scene, &dry, &cfg).unwrap();
        assert_eq!(r.observations.array_count(), 2);
        assert_eq!(r.observations.arrays[0].dim(), (3, 257, cfg.frames(16000)));
        assert_eq!(r.references.len(), 2);
        assert_eq!(scene.sources[0].role, SourceRole::Target);
        // reference = target alone through mic 0
        let rirs = simulate_rirs(&scene).unwrap();
        let mut expect = convolve(&dry[0].samples, &rirs.get(0, 1, 0).taps);
        expect.truncate(16000);
        for (x, y) in r.references[1].samples.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let scene = Scene::preset(2, 0.0).unwrap();
        let cfg = StftConfig::default();
        assert!(render_observations(&scene, &[noise(100, 0)], &cfg).is_err());
    }
}
