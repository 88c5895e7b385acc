use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::roomsim::RirSet;
use crate::signal::StftConfig;
use crate::{Error, Result};

pub const DIAGONAL_LOADING: f64 = 1e-3;

/// Relative transfer functions of the target, `per_array[a][(i, m)]`, with
/// the mic-0 entry equal to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringSet {
    pub per_array: Vec<Array2<Complex64>>,
}

/// Loaded interference covariances, `per_array[a][(i, m, m')]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovarianceSet {
    pub per_array: Vec<Array3<Complex64>>,
}

impl SteeringSet {
    pub fn arrays(&self) -> usize {
        self.per_array.len()
    }
}

impl NoiseCovarianceSet {
    pub fn arrays(&self) -> usize {
        self.per_array.len()
    }
}

/// Frequency response of `taps` at `i * fs / n` for `i` in `0..=n/2`.
pub fn transfer_function(taps: &[f64], n: usize) -> Vec<Complex64> {
    // padding to a multiple of n keeps the wanted frequencies on the FFT grid
    let blocks = taps.len().div_ceil(n).max(1);
    let len = blocks * n;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (b, &t) in buf.iter_mut().zip(taps) {
        b.re = t;
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    (0..=n / 2).map(|i| buf[i * blocks]).collect()
}

/// Adds `delta * tr(R) / M` to the diagonal, or `delta` when the trace vanishes.
pub fn load_diagonal(r: &mut Array2<Complex64>, delta: f64) {
    let m = r.nrows();
    let tr: f64 = r.diag().iter().map(|c| c.re).sum();
    let eps = if tr > 0.0 { delta * tr / m as f64 } else { delta };
    for k in 0..m {
        r[(k, k)].re += eps;
    }
}

/// Steering vectors and loaded covariances computed from the RIRs.
pub fn oracle_quantities(rirs: &RirSet, cfg: &StftConfig) -> Result<(SteeringSet, NoiseCovarianceSet)> {
    cfg.validate()?;
    if cfg.sample_rate != rirs.sample_rate {
        return Err(Error::SampleRateMismatch { expected: rirs.sample_rate, found: cfg.sample_rate });
    }
    let n = cfg.window_length();
    let bins = cfg.bins();
    let target = rirs.target_index();
    let interferers: Vec<usize> = rirs.interferers().collect();
    let mut steering = Vec::with_capacity(rirs.arrays());
    let mut covariance = Vec::with_capacity(rirs.arrays());
    for a in 0..rirs.arrays() {
        let m_count = rirs.mics_per_array[a];
        let spectra = |s: usize| -> Array2<Complex64> {
            let mut g = Array2::zeros((bins, m_count));
            for m in 0..m_count {
                let h = transfer_function(&rirs.get(s, a, m).taps, n);
                g.column_mut(m).assign(&ndarray::Array1::from(h));
            }
            g
        };
        let mut d = spectra(target);
        for (i, mut row) in d.axis_iter_mut(Axis(0)).enumerate() {
            let r0 = row[0];
            if r0.norm() == 0.0 {
                return Err(Error::IllConditioned { array: a, bin: i });
            }
            row.mapv_inplace(|x| x / r0);
        }
        let mut r = Array3::zeros((bins, m_count, m_count));
        for &s in &interferers {
            let g = spectra(s);
            for i in 0..bins {
                for p in 0..m_count {
                    for q in 0..m_count {
                        r[(i, p, q)] += g[(i, p)] * g[(i, q)].conj();
                    }
                }
            }
        }
        for mut ri in r.axis_iter_mut(Axis(0)) {
            let mut owned = ri.to_owned();
            load_diagonal(&mut owned, DIAGONAL_LOADING);
            ri.assign(&owned);
        }
        steering.push(d);
        covariance.push(r);
    }
    Ok((SteeringSet { per_array: steering }, NoiseCovarianceSet { per_array: covariance }))
}
