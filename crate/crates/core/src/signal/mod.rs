//! Waveforms, STFT analysis/synthesis, resampling and WAV I/O.

mod conv;
mod resample;
mod stft;
mod wav;

pub use conv::{convolve, cross_correlate};

pub use resample::resample;
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, Window};
pub use wav::{read_wav, write_wav, WavFormat};

use crate::{Error, Result, Scalar};

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<F = f64> {
    pub samples: Vec<F>,
    pub sample_rate: u32,
}

impl<F: Scalar> Waveform<F> {
    pub fn new(samples: Vec<F>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![F::zero(); len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> F {
        self.samples.iter().map(|&s| s * s).sum()
    }

    pub fn scaled(&self, gain: F) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Truncates or zero-pads to `len` samples.
    pub fn with_len(mut self, len: usize) -> Self {
        self.samples.resize(len, F::zero());
        self
    }
}

/// Scales every source to unit energy.
pub fn normalize_energy<F: Scalar>(sources: &[Waveform<F>]) -> Result<Vec<Waveform<F>>> {
    sources
        .iter()
        .enumerate()
        .map(|(idx, src)| {
            let energy = src.energy();
            if !(energy > F::zero()) {
                return Err(Error::SilentSource(idx));
            }
            Ok(src.scaled(F::one() / energy.sqrt()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn energies_become_unit() {
        let a = Waveform::new(vec![2.0, 0.0, 0.0, 0.0], 16000).unwrap();
        let b = Waveform::new(vec![0.0, 1.0], 16000).unwrap();
        assert_eq!(a.energy(), 4.0);
        let out = normalize_energy(&[a, b]).unwrap();
        for w in &out {
            assert!((w.energy() - 1.0f64).abs() < 1e-15);
        }
        assert_eq!(out[0].len(), 4);
        assert_eq!(out[1].len(), 2);
    }

    #[test]
    fn single_source_is_scaled_copy() {
        let a = Waveform::new(vec![3.0, -4.0], 8000).unwrap();
        let out = normalize_energy(std::slice::from_ref(&a)).unwrap();
        assert!((out[0].samples[0] - 0.6f64).abs() < 1e-15);
        assert!((out[0].samples[1] + 0.8f64).abs() < 1e-15);
    }

    #[test]
    fn random_sources_have_equal_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let srcs: Vec<Waveform> = (0..3)
            .map(|i| {
                let n = 1000 + 137 * i;
                let scale = 10f64.powi(i as i32 - 1);
                Waveform::new((0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap()
            })
            .collect();
        let out = normalize_energy(&srcs).unwrap();
        for a in &out {
            for b in &out {
                let direct_a: f64 = a.samples.iter().map(|s| s * s).sum();
                let direct_b: f64 = b.samples.iter().map(|s| s * s).sum();
                assert!((direct_a / direct_b - 1.0).abs() < 1e-12);
            }
        }
        let twice = normalize_energy(&out).unwrap();
        for (x, y) in out.iter().zip(&twice) {
            for (p, q) in x.samples.iter().zip(&y.samples) {
                assert!((p - q).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn silent_source_rejected() {
        let a = Waveform::new(vec![1.0, 0.0], 16000).unwrap();
        let z = Waveform::zeros(10, 16000);
        assert!(matches!(normalize_energy(&[a, z]), Err(Error::SilentSource(1))));
    }

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(Waveform::new(vec![f64::NAN], 16000).is_err());
        assert!(Waveform::<f64>::new(vec![0.0], 0).is_err());
    }
}
