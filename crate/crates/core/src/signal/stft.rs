use ndarray::Array2;
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann, constant-overlap-add at any hop of `len / R`, `R >= 2`.
    #[default]
    Hann,
}

impl Window {
    pub fn coefficients<F: Scalar>(self, len: usize) -> Vec<F> {
        match self {
            Window::Hann => (0..len)
                .map(|n| {
                    let phase = 2.0 * std::f64::consts::PI * n as f64 / len as f64;
                    F::lit(0.5 - 0.5 * phase.cos())
                })
                .collect(),
        }
    }
}

/// Frame parameters in milliseconds at a given sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window: Window,
    pub window_length_ms: f64,
    pub hop_ms: f64,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window: Window::Hann, window_length_ms: 32.0, hop_ms: 16.0, sample_rate: 16000 }
    }
}

impl StftConfig {
    pub fn window_length(&self) -> usize {
        (self.window_length_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    /// Number of one-sided frequency bins, `I`.
    pub fn bins(&self) -> usize {
        self.window_length() / 2 + 1
    }

    /// Head padding in samples; frame 0 starts this many samples before the signal.
    pub fn head_padding(&self) -> usize {
        self.window_length() - self.hop()
    }

    /// Frame count `J` for a signal of `len` samples. Every sample is covered
    /// by `window / hop` frames.
    pub fn frames(&self, len: usize) -> usize {
        let hop = self.hop();
        (len + self.head_padding()).div_ceil(hop)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.window_length();
        let h = self.hop();
        if self.sample_rate == 0 || n < 2 || h == 0 {
            return Err(Error::InvalidStft(format!("window {n} samples, hop {h} samples")));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidStft(format!("window length {n} must be even")));
        }
        if n % h != 0 || n / h < 2 {
            return Err(Error::InvalidStft(format!(
                "hop {h} must divide window {n} with at least 2x overlap"
            )));
        }
        Ok(())
    }
}

/// One-sided STFT, `values[(i, j)]` with `I = window / 2 + 1` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<F = f64> {
    pub values: Array2<Complex<F>>,
    pub window_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl<F: Scalar> ComplexSpectrogram<F> {
    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self { values: Array2::zeros(self.values.raw_dim()), ..self.clone() }
    }

    pub fn check_matches(&self, cfg: &StftConfig) -> Result<()> {
        if self.window_length != cfg.window_length()
            || self.hop != cfg.hop()
            || self.sample_rate != cfg.sample_rate
        {
            return Err(Error::StftMismatch(format!(
                "spectrogram ({}, {}, {} Hz) vs config ({}, {}, {} Hz)",
                self.window_length,
                self.hop,
                self.sample_rate,
                cfg.window_length(),
                cfg.hop(),
                cfg.sample_rate
            )));
        }
        if self.bins() != cfg.bins() {
            return Err(Error::StftMismatch(format!("{} bins, expected {}", self.bins(), cfg.bins())));
        }
        Ok(())
    }
}

pub fn stft<F: Scalar>(x: &Waveform<F>, cfg: &StftConfig) -> Result<ComplexSpectrogram<F>> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    if x.sample_rate != cfg.sample_rate {
        return Err(Error::SampleRateMismatch { expected: cfg.sample_rate, found: x.sample_rate });
    }
    let n = cfg.window_length();
    let hop = cfg.hop();
    let pad = cfg.head_padding();
    let frames = cfg.frames(x.len());
    let bins = cfg.bins();
    let window = cfg.window.coefficients::<F>(n);
    let fft = FftPlanner::<F>::new().plan_fft_forward(n);

    let mut values = Array2::zeros((bins, frames));
    let mut buf = vec![Complex::new(F::zero(), F::zero()); n];
    for j in 0..frames {
        for (q, slot) in buf.iter_mut().enumerate() {
            // position in the unpadded signal
            let pos = (j * hop + q) as isize - pad as isize;
            let s = if pos >= 0 && (pos as usize) < x.len() { x.samples[pos as usize] } else { F::zero() };
            *slot = Complex::new(s * window[q], F::zero());
        }
        fft.process(&mut buf);
        for i in 0..bins {
            values[(i, j)] = buf[i];
        }
    }
    Ok(ComplexSpectrogram { values, window_length: n, hop, sample_rate: cfg.sample_rate })
}

/// Weighted overlap-add inverse of [`stft`], truncated or padded to `length`.
pub fn istft<F: Scalar>(
    spec: &ComplexSpectrogram<F>,
    cfg: &StftConfig,
    length: usize,
) -> Result<Waveform<F>> {
    cfg.validate()?;
    spec.check_matches(cfg)?;
    let n = cfg.window_length();
    let hop = cfg.hop();
    let pad = cfg.head_padding();
    let frames = spec.frames();
    let bins = spec.bins();
    let window = cfg.window.coefficients::<F>(n);
    let ifft = FftPlanner::<F>::new().plan_fft_inverse(n);
    let scale = F::one() / F::from_usize(n).unwrap();

    let total = (frames - 1) * hop + n;
    let mut acc = vec![F::zero(); total];
    let mut norm = vec![F::zero(); total];
    let mut buf = vec![Complex::new(F::zero(), F::zero()); n];
    for j in 0..frames {
        for i in 0..bins {
            buf[i] = spec.values[(i, j)];
        }
        // DC and Nyquist of a real signal are real.
        buf[0].im = F::zero();
        buf[n / 2].im = F::zero();
        for i in 1..n / 2 {
            buf[n - i] = buf[i].conj();
        }
        ifft.process(&mut buf);
        let start = j * hop;
        for q in 0..n {
            acc[start + q] = acc[start + q] + buf[q].re * scale * window[q];
            norm[start + q] = norm[start + q] + window[q] * window[q];
        }
    }

    let tiny = F::epsilon();
    let samples = (0..length)
        .map(|t| {
            let p = t + pad;
            if p < total && norm[p] > tiny {
                acc[p] / norm[p]
            } else {
                F::zero()
            }
        })
        .collect();
    Ok(Waveform { samples, sample_rate: cfg.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn paper_frame_geometry() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.window_length(), 512);
        assert_eq!(cfg.hop(), 256);
        assert_eq!(cfg.bins(), 257);
        // J = ceil((L + 256) / 256)
        assert_eq!(cfg.frames(16000), 64);
        assert_eq!(cfg.frames(256), 2);
        assert_eq!(cfg.frames(1), 2);
        let x = Waveform::new(vec![0.1; 16000], 16000).unwrap();
        let s = stft(&x, &cfg).unwrap();
        assert_eq!(s.values.dim(), (257, 64));
    }

    #[test]
    fn zeros_map_to_zeros() {
        let cfg = StftConfig::default();
        let x = Waveform::<f64>::zeros(16000, 16000);
        let s = stft(&x, &cfg).unwrap();
        assert!(s.values.iter().all(|c| c.norm() == 0.0));
        let y = istft(&s.zeros_like(), &cfg, 16000).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_signal_rejected() {
        let cfg = StftConfig::default();
        let x = Waveform::<f64>::zeros(0, 16000);
        assert!(matches!(stft(&x, &cfg), Err(Error::EmptySignal)));
    }

    #[test]
    fn bin_centered_sinusoid_concentrates() {
        let cfg = StftConfig::default();
        let bin = 32usize;
        let f = bin as f64 * 16000.0 / 512.0;
        let x: Vec<f64> =
            (0..8000).map(|t| (2.0 * std::f64::consts::PI * f * t as f64 / 16000.0).sin()).collect();
        let s = stft(&Waveform::new(x, 16000).unwrap(), &cfg).unwrap();
        // Oracle: a Hann-windowed bin-centered sinusoid has DFT support on bins
        // {k-1, k, k+1} with magnitudes in ratio 1/4 : 1/2 : 1/4, so the centre bin
        // holds (1/4) / (1/4 + 2/16) = 2/3 of the energy and the 3-bin row all of it.
        for j in 2..s.frames() - 2 {
            let col = s.values.column(j);
            let total: f64 = col.iter().map(|c| c.norm_sqr()).sum();
            let near: f64 = (bin - 1..=bin + 1).map(|i| col[i].norm_sqr()).sum();
            assert!(near / total >= 0.99, "frame {j}: {}", near / total);
            assert!((col[bin].norm_sqr() / total - 2.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn roundtrip_random_noise() {
        let cfg = StftConfig::default();
        let mut worst = 0.0f64;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..16000).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = Waveform::new(x.clone(), 16000).unwrap();
            let y = istft(&stft(&w, &cfg).unwrap(), &cfg, x.len()).unwrap();
            worst = worst.max(rel_err(&y.samples, &x));
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn roundtrip_f32() {
        let cfg = StftConfig::default();
        let x: Vec<f32> = (0..3000).map(|t| ((t * 7919) % 101) as f32 / 50.0 - 1.0).collect();
        let w = Waveform::new(x.clone(), 16000).unwrap();
        let y = istft(&stft(&w, &cfg).unwrap(), &cfg, x.len()).unwrap();
        let err: f32 = y.samples.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(err < 1e-5);
    }

    #[test]
    fn windowed_energy_matches_parseval() {
        let cfg = StftConfig { sample_rate: 8000, ..StftConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..3000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = stft(&Waveform::new(x.clone(), 8000).unwrap(), &cfg).unwrap();
        let n = cfg.window_length();
        let win = cfg.window.coefficients::<f64>(n);
        for j in 0..s.frames() {
            let mut time = 0.0;
            for q in 0..n {
                let pos = (j * cfg.hop() + q) as isize - cfg.head_padding() as isize;
                if pos >= 0 && (pos as usize) < x.len() {
                    time += (x[pos as usize] * win[q]).powi(2);
                }
            }
            // one-sided spectrum: interior bins count twice
            let col = s.values.column(j);
            let mut freq = col[0].norm_sqr() + col[n / 2].norm_sqr();
            for i in 1..n / 2 {
                freq += 2.0 * col[i].norm_sqr();
            }
            freq /= n as f64;
            assert!((freq - time).abs() <= 1e-8 * time.max(1e-300), "frame {j}");
        }
    }

    #[test]
    fn mismatched_config_rejected() {
        let cfg = StftConfig::default();
        let x = Waveform::new(vec![1.0; 1000], 16000).unwrap();
        let s = stft(&x, &cfg).unwrap();
        let other = StftConfig { hop_ms: 8.0, ..cfg };
        assert!(matches!(istft(&s, &other, 1000), Err(Error::StftMismatch(_))));
        let bad = StftConfig { hop_ms: 12.0, ..cfg };
        assert!(bad.validate().is_err());
    }
}
