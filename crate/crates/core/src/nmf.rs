//! Conventional NMF spotforming baseline.
//!
//! The amplitude spectrograms of all beamformer outputs are concatenated along
//! time (`n = a * J + j`), factorized with GKL multiplicative updates, and a
//! basis is kept in frame `j` only when its activation exceeds `tau` in every
//! array. The per-array target spectrogram is recovered with a Wiener gain.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex;
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beamform::BfOutputTensor;
use crate::divergence::gkl;
use crate::signal::ComplexSpectrogram;
use crate::{Error, Result, Scalar};

/// Nonnegative `I x N` input with columns `n = a * J + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatMatrix<F = f64> {
    pub values: Array2<F>,
    pub arrays: usize,
    pub frames: usize,
}

pub fn build_concat<F: Scalar>(y: &BfOutputTensor<F>) -> ConcatMatrix<F> {
    let (bins, frames, arrays) = y.values.dim();
    let mut values = Array2::zeros((bins, arrays * frames));
    for a in 0..arrays {
        for j in 0..frames {
            for i in 0..bins {
                values[(i, a * frames + j)] = y.values[(i, j, a)].norm();
            }
        }
    }
    ConcatMatrix { values, arrays, frames }
}

/// Basis `T` (`I x K`, columns sum to one) and activation `V~` (`N x K`).
#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel<F = f64> {
    pub basis: Array2<F>,
    pub activation: Array2<F>,
}

impl<F: Scalar> NmfModel<F> {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Uniform (0, 1) initialization of `T` then `V~`, drawn in that order, with `T`
    /// normalized and its scale folded into `V~`.
    pub fn random(bins: usize, columns: usize, rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = uniform_matrix(&mut rng, bins, rank);
        let activation = uniform_matrix(&mut rng, columns, rank);
        let mut model = Self { basis, activation };
        normalize_columns(&mut model.basis, &mut model.activation);
        model
    }

    pub fn reconstruct(&self) -> Array2<F> {
        self.basis.dot(&self.activation.t())
    }
}

pub(crate) fn uniform_matrix<F: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<F> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let u: f64 = rng.sample(Open01);
        F::lit(u)
    })
}

/// Scales each column of `simplex` to unit sum and multiplies the matching
/// column of `carrier` by the removed scale.
pub(crate) fn normalize_columns<F: Scalar>(simplex: &mut Array2<F>, carrier: &mut Array2<F>) {
    for (mut col, mut other) in simplex.axis_iter_mut(Axis(1)).zip(carrier.axis_iter_mut(Axis(1))) {
        let s = col.sum();
        if s > F::zero() {
            col.mapv_inplace(|x| x / s);
            other.mapv_inplace(|x| x * s);
        }
    }
}

pub(crate) fn floor_entries<F: Scalar>(m: &mut Array2<F>) {
    let floor = F::model_floor();
    m.mapv_inplace(|x| if x < floor { floor } else { x });
}

pub(crate) fn has_non_finite<F: Scalar>(m: &Array2<F>) -> bool {
    m.iter().any(|x| !x.is_finite())
}

/// `C / Chat`, with `Chat` kept strictly positive.
pub(crate) fn ratio<F: Scalar>(c: &Array2<F>, approx: &Array2<F>) -> Array2<F> {
    let tiny = F::min_positive_value();
    let mut r = Array2::zeros(c.raw_dim());
    Zip::from(&mut r).and(c).and(approx).for_each(|r, &c, &x| *r = c / x.max(tiny));
    r
}

/// GKL between `C` and `T V~^T`.
pub fn gkl_cost<F: Scalar>(model: &NmfModel<F>, c: &ConcatMatrix<F>) -> F {
    let approx = model.reconstruct();
    let mut acc = F::zero();
    Zip::from(&c.values).and(&approx).for_each(|&b, &a| acc = acc + gkl(b, a));
    acc
}

/// One multiplicative GKL iteration: update `T`, normalize its columns into
/// `V~`, then update `V~`.
pub fn update_step<F: Scalar>(model: &mut NmfModel<F>, c: &ConcatMatrix<F>) {
    let r = ratio(&c.values, &model.reconstruct());
    let num = r.dot(&model.activation);
    let den = model.activation.sum_axis(Axis(0));
    Zip::from(&mut model.basis)
        .and(&num)
        .and_broadcast(&den)
        .for_each(|t, &n, &d| *t = *t * n / d);
    floor_entries(&mut model.basis);
    normalize_columns(&mut model.basis, &mut model.activation);

    let r = ratio(&c.values, &model.reconstruct());
    let num = r.t().dot(&model.basis);
    let den = model.basis.sum_axis(Axis(0));
    Zip::from(&mut model.activation)
        .and(&num)
        .and_broadcast(&den)
        .for_each(|v, &n, &d| *v = *v * n / d);
    floor_entries(&mut model.activation);
}

#[derive(Debug, Clone)]
pub struct NmfFit<F = f64> {
    pub model: NmfModel<F>,
    /// GKL before the first iteration, then after each iteration.
    pub cost_trace: Vec<F>,
    pub seed: u64,
}

pub fn fit_nmf<F: Scalar>(c: &ConcatMatrix<F>, rank: usize, iterations: usize, seed: u64) -> Result<NmfFit<F>> {
    fit_nmf_observed(c, rank, iterations, seed, |_, _| ControlFlow::Continue(()))
}

/// [`fit_nmf`] with a per-iteration callback receiving `(iteration, cost)`;
/// returning `Break` stops the fit with [`Error::Stopped`].
pub fn fit_nmf_observed<F: Scalar>(
    c: &ConcatMatrix<F>,
    rank: usize,
    iterations: usize,
    seed: u64,
    mut observer: impl FnMut(usize, F) -> ControlFlow<()>,
) -> Result<NmfFit<F>> {
    if rank == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be at least 1".into()));
    }
    let (bins, columns) = c.values.dim();
    if rank > bins.min(columns) {
        log::warn!("K = {rank} exceeds min(I, N) = {}", bins.min(columns));
    }
    let mut model = NmfModel::random(bins, columns, rank, seed);
    let mut cost_trace = Vec::with_capacity(iterations + 1);
    cost_trace.push(gkl_cost(&model, c));
    for it in 1..=iterations {
        update_step(&mut model, c);
        if has_non_finite(&model.basis) || has_non_finite(&model.activation) {
            return Err(Error::NumericalDivergence(it));
        }
        let cost = gkl_cost(&model, c);
        cost_trace.push(cost);
        if observer(it, cost).is_break() {
            return Err(Error::Stopped(format!("NMF stopped at iteration {it}")));
        }
    }
    Ok(NmfFit { model, cost_trace, seed })
}

/// Binary `J x K` frame mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMask {
    pub values: Array2<bool>,
}

impl FrameMask {
    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }
}

/// `h_{j,k} = 1` iff `v~_{aJ+j,k} > tau` for every array `a`.
pub fn threshold_mask<F: Scalar>(model: &NmfModel<F>, arrays: usize, frames: usize, tau: F) -> FrameMask {
    let rank = model.rank();
    let values = Array2::from_shape_fn((frames, rank), |(j, k)| {
        (0..arrays).all(|a| model.activation[(a * frames + j, k)] > tau)
    });
    FrameMask { values }
}

/// Per-array Wiener reconstruction `sum_k (t h v)^2 / sum_k (t v)^2 * y`.
pub fn nmf_wiener<F: Scalar>(
    model: &NmfModel<F>,
    mask: &FrameMask,
    y: &BfOutputTensor<F>,
) -> Result<Vec<ComplexSpectrogram<F>>> {
    let (bins, frames, arrays) = y.values.dim();
    let rank = model.rank();
    if model.basis.nrows() != bins
        || model.activation.nrows() != arrays * frames
        || mask.values.dim() != (frames, rank)
    {
        return Err(Error::Dimension(format!(
            "model T {:?}, V {:?}, mask {:?} vs Y {:?}",
            model.basis.dim(),
            model.activation.dim(),
            mask.values.dim(),
            y.values.dim()
        )));
    }
    let t_sq = model.basis.mapv(|t| t * t);
    let floor = F::min_positive_value();
    let mut out = Vec::with_capacity(arrays);
    for a in 0..arrays {
        let v = model.activation.slice(ndarray::s![a * frames..(a + 1) * frames, ..]);
        let v_sq = v.mapv(|x| x * x);
        let mut masked = v_sq.clone();
        Zip::from(&mut masked).and(&mask.values).for_each(|m, &h| {
            if !h {
                *m = F::zero();
            }
        });
        let num = t_sq.dot(&masked.t());
        let den = t_sq.dot(&v_sq.t());
        let ya = y.values.index_axis(Axis(2), a);
        let mut values = Array2::<Complex<F>>::zeros((bins, frames));
        Zip::from(&mut values).and(&ya).and(&num).and(&den).for_each(|s, &y, &n, &d| {
            *s = y * (n / d.max(floor));
        });
        out.push(y.with_values(values));
    }
    Ok(out)
}

/// Text dump of `T` and `V~` with a small header.
pub fn dump_model<F: Scalar>(model: &NmfModel<F>, seed: u64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# nmf K={} seed={}", model.rank(), seed);
    write_matrix(&mut s, "T", &model.basis);
    write_matrix(&mut s, "V", &model.activation);
    s
}

pub(crate) fn write_matrix<F: Scalar>(out: &mut String, name: &str, m: &Array2<F>) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}
