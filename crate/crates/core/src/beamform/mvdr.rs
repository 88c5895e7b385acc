use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{BfOutputTensor, NoiseCovarianceSet, SteeringSet};
use crate::roomsim::ObservationTensor;
use crate::{Error, Result};

/// Beamformer weights, `per_array[a][(i, m)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub per_array: Vec<Array2<Complex64>>,
}

#[derive(Debug, Clone)]
pub struct MvdrOutput {
    pub outputs: BfOutputTensor<f64>,
    pub weights: BeamformerWeights,
}

/// `w = R^-1 d / (d^H R^-1 d)` for one frequency.
pub fn mvdr_weights(r: &DMatrix<Complex64>, d: &DVector<Complex64>) -> Option<DVector<Complex64>> {
    let chol = r.clone().cholesky()?;
    let rd = chol.solve(d);
    let denom = d.dotc(&rd);
    if !denom.re.is_finite() || denom.re <= 0.0 {
        return None;
    }
    let w = rd / denom.conj();
    w.iter().all(|c| c.re.is_finite() && c.im.is_finite()).then_some(w)
}

fn array_weights(a: usize, d: &Array2<Complex64>, r: &Array3<Complex64>) -> Result<Array2<Complex64>> {
    let (bins, m) = d.dim();
    let rows: Vec<Result<Vec<Complex64>>> = (0..bins)
        .into_par_iter()
        .map(|i| {
            let rm = DMatrix::from_fn(m, m, |p, q| r[(i, p, q)]);
            let dv = DVector::from_fn(m, |p, _| d[(i, p)]);
            mvdr_weights(&rm, &dv).map(|w| w.iter().copied().collect()).ok_or(Error::IllConditioned { array: a, bin: i })
        })
        .collect();
    let mut w = Array2::zeros((bins, m));
    for (i, row) in rows.into_iter().enumerate() {
        for (p, v) in row?.into_iter().enumerate() {
            w[(i, p)] = v;
        }
    }
    Ok(w)
}

/// Applies an MVDR beamformer per array: `y = w^H x`.
pub fn mvdr(x: &ObservationTensor, d: &SteeringSet, r: &NoiseCovarianceSet) -> Result<MvdrOutput> {
    let arrays = x.array_count();
    if d.arrays() != arrays || r.arrays() != arrays {
        return Err(Error::Dimension(format!(
            "{arrays} observed arrays, {} steering sets, {} covariance sets",
            d.arrays(),
            r.arrays()
        )));
    }
    let (bins, frames) = (x.bins(), x.frames());
    let mut values = Array3::zeros((bins, frames, arrays));
    let mut weights = Vec::with_capacity(arrays);
    for a in 0..arrays {
        let xa = &x.arrays[a];
        let m = xa.dim().0;
        if xa.dim() != (m, bins, frames)
            || d.per_array[a].dim() != (bins, m)
            || r.per_array[a].dim() != (bins, m, m)
        {
            return Err(Error::Dimension(format!("array {a}: observation, steering and covariance shapes disagree")));
        }
        let w = array_weights(a, &d.per_array[a], &r.per_array[a])?;
        let mut out = values.index_axis_mut(Axis(2), a);
        for i in 0..bins {
            for j in 0..frames {
                out[(i, j)] = (0..m).map(|p| w[(i, p)].conj() * xa[(p, i, j)]).sum();
            }
        }
        weights.push(w);
    }
    Ok(MvdrOutput {
        outputs: BfOutputTensor { values, window_length: x.window_length, hop: x.hop, sample_rate: x.sample_rate },
        weights: BeamformerWeights { per_array: weights },
    })
}

/// Raw dump of the weights: for each array, bin and mic (in that order) the
/// real then imaginary part as little-endian f64.
pub fn write_weights(path: impl AsRef<Path>, weights: &BeamformerWeights) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for w in &weights.per_array {
        for c in w.iter() {
            out.write_all(&c.re.to_le_bytes())?;
            out.write_all(&c.im.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}
