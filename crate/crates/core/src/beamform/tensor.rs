use ndarray::{Array2, Array3, Axis};
use num_complex::Complex;

use crate::signal::{ComplexSpectrogram, StftConfig};
use crate::{Error, Result, Scalar};

/// Beamformer outputs stacked over arrays, `values[(i, j, a)] = y_{i,j}^{(a)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BfOutputTensor<F = f64> {
    pub values: Array3<Complex<F>>,
    pub window_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl<F: Scalar> BfOutputTensor<F> {
    /// Stacks per-array spectrograms; all must share frame parameters and shape.
    pub fn from_spectrograms(specs: &[ComplexSpectrogram<F>]) -> Result<Self> {
        let first = specs.first().ok_or_else(|| Error::Dimension("no beamformer outputs".into()))?;
        let (bins, frames) = first.values.dim();
        for s in specs {
            if s.values.dim() != (bins, frames)
                || s.window_length != first.window_length
                || s.hop != first.hop
                || s.sample_rate != first.sample_rate
            {
                return Err(Error::Dimension("per-array spectrograms differ in shape or framing".into()));
            }
        }
        let mut values = Array3::zeros((bins, frames, specs.len()));
        for (a, s) in specs.iter().enumerate() {
            values.index_axis_mut(Axis(2), a).assign(&s.values);
        }
        Ok(Self {
            values,
            window_length: first.window_length,
            hop: first.hop,
            sample_rate: first.sample_rate,
        })
    }

    pub fn bins(&self) -> usize {
        self.values.dim().0
    }

    pub fn frames(&self) -> usize {
        self.values.dim().1
    }

    pub fn arrays(&self) -> usize {
        self.values.dim().2
    }

    pub fn spectrogram(&self, a: usize) -> ComplexSpectrogram<F> {
        self.with_values(self.values.index_axis(Axis(2), a).to_owned())
    }

    pub fn spectrograms(&self) -> Vec<ComplexSpectrogram<F>> {
        (0..self.arrays()).map(|a| self.spectrogram(a)).collect()
    }

    /// Wraps an `I x J` matrix with this tensor's frame parameters.
    pub fn with_values(&self, values: Array2<Complex<F>>) -> ComplexSpectrogram<F> {
        ComplexSpectrogram {
            values,
            window_length: self.window_length,
            hop: self.hop,
            sample_rate: self.sample_rate,
        }
    }

    pub fn check_matches(&self, cfg: &StftConfig) -> Result<()> {
        self.spectrogram(0).check_matches(cfg)
    }
}
