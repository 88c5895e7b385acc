//! Attractor-regularized NTF spotforming.
//!
//! The amplitude tensor `c[a, i, j] = |y_{i,j}^{(a)}|` is modelled as
//! `sum_k z[a,k] t[i,k] v[j,k]`. Allocation columns `z_k` and basis columns
//! `t_k` live on the probability simplex. Each `z_k` is pulled by a GKL
//! penalty of weight `mu` toward its nearest attractor: the uniform vector
//! `1/A` (a component shared by all arrays, i.e. the target) or a one-hot
//! vector (a component seen by a single array, i.e. residual interference).
//!
//! All updates are majorization-minimization steps, so for a fixed `mu` the
//! regularized cost never increases across an iteration.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::beamform::BfOutputTensor;
use crate::divergence::gkl;
use crate::nmf::{floor_entries, has_non_finite, normalize_columns, ratio, uniform_matrix, write_matrix};
use crate::signal::ComplexSpectrogram;
use crate::{Error, Result, Scalar};

/// Nonnegative tensor indexed `(a, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropTensor<F = f64> {
    pub values: Array3<F>,
}

impl<F: Scalar> PropTensor<F> {
    pub fn arrays(&self) -> usize {
        self.values.dim().0
    }

    pub fn bins(&self) -> usize {
        self.values.dim().1
    }

    pub fn frames(&self) -> usize {
        self.values.dim().2
    }

    pub fn slice(&self, a: usize) -> ArrayView2<'_, F> {
        self.values.index_axis(Axis(0), a)
    }
}

pub fn build_prop_tensor<F: Scalar>(y: &BfOutputTensor<F>) -> PropTensor<F> {
    let (bins, frames, arrays) = y.values.dim();
    PropTensor { values: Array3::from_shape_fn((arrays, bins, frames), |(a, i, j)| y.values[(i, j, a)].norm()) }
}

/// Allocation `Z` (`A x K`), basis `T` (`I x K`), activation `V` (`J x K`).
#[derive(Debug, Clone, PartialEq)]
pub struct NtfModel<F = f64> {
    pub allocation: Array2<F>,
    pub basis: Array2<F>,
    pub activation: Array2<F>,
}

impl<F: Scalar> NtfModel<F> {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn arrays(&self) -> usize {
        self.allocation.nrows()
    }

    /// `Z = 1/A`; `T` then `V` drawn uniform on (0, 1), `T` normalized into `V`.
    pub fn random(arrays: usize, bins: usize, frames: usize, rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut basis = uniform_matrix(&mut rng, bins, rank);
        let mut activation = uniform_matrix(&mut rng, frames, rank);
        normalize_columns(&mut basis, &mut activation);
        let allocation = Array2::from_elem((arrays, rank), F::one() / F::from_usize(arrays).unwrap());
        Self { allocation, basis, activation }
    }

    /// Model slice for array `a`: `sum_k z[a,k] t[i,k] v[j,k]`.
    pub fn reconstruct_slice(&self, a: usize) -> Array2<F> {
        let scaled = &self.basis * &self.allocation.row(a);
        scaled.dot(&self.activation.t())
    }

    pub fn reconstruct(&self) -> Array3<F> {
        let (bins, frames) = (self.basis.nrows(), self.activation.nrows());
        let mut out = Array3::zeros((self.arrays(), bins, frames));
        for a in 0..self.arrays() {
            out.index_axis_mut(Axis(0), a).assign(&self.reconstruct_slice(a));
        }
        out
    }

    fn is_finite(&self) -> bool {
        !(has_non_finite(&self.allocation) || has_non_finite(&self.basis) || has_non_finite(&self.activation))
    }
}

/// Attractors as columns of an `A x B` matrix, `B = A + 1`: column 0 is the
/// uniform vector, column `b >= 1` is one-hot at array `b - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorSet<F = f64> {
    pub vectors: Array2<F>,
}

impl<F: Scalar> AttractorSet<F> {
    pub fn new(arrays: usize) -> Self {
        let uniform = F::one() / F::from_usize(arrays).unwrap();
        let vectors = Array2::from_shape_fn((arrays, arrays + 1), |(a, b)| match b {
            0 => uniform,
            _ if b == a + 1 => F::one(),
            _ => F::zero(),
        });
        Self { vectors }
    }

    pub fn arrays(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `sum_a D(p_{a,b} | z_a)`.
    pub fn divergence(&self, b: usize, z: ndarray::ArrayView1<'_, F>) -> F {
        self.vectors.column(b).iter().zip(z.iter()).fold(F::zero(), |acc, (&p, &z)| acc + gkl(p, z))
    }

    /// Nearest attractor and its divergence; ties go to the smaller index and
    /// an all-infinite column maps to class 0.
    pub fn nearest(&self, z: ndarray::ArrayView1<'_, F>) -> (usize, F) {
        let mut best = (0, self.divergence(0, z));
        for b in 1..self.len() {
            let d = self.divergence(b, z);
            if d < best.1 {
                best = (b, d);
            }
        }
        best
    }
}

/// Class index `b_k` per basis and the target selector `h_k = [b_k == 0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub classes: Vec<usize>,
    pub target: Vec<bool>,
}

impl Assignment {
    pub fn from_classes(classes: Vec<usize>) -> Self {
        let target = classes.iter().map(|&b| b == 0).collect();
        Self { classes, target }
    }

    pub fn target_count(&self) -> usize {
        self.target.iter().filter(|&&h| h).count()
    }
}

pub fn assign_attractors<F: Scalar>(allocation: &Array2<F>, attractors: &AttractorSet<F>) -> Assignment {
    let classes = allocation.axis_iter(Axis(1)).map(|z| attractors.nearest(z).0).collect();
    Assignment::from_classes(classes)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegularizationSchedule<F = f64> {
    pub mu: F,
    /// Leading iterations run with `mu = 0`.
    pub warmup_iterations: usize,
    pub total_iterations: usize,
}

impl Default for RegularizationSchedule<f64> {
    fn default() -> Self {
        Self { mu: 100.0, warmup_iterations: 50, total_iterations: 100 }
    }
}

impl<F: Scalar> RegularizationSchedule<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= F::zero()) || !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be finite and >= 0, got {}", self.mu)));
        }
        if self.warmup_iterations > self.total_iterations {
            return Err(Error::InvalidParameter(format!(
                "warmup {} exceeds total {}",
                self.warmup_iterations, self.total_iterations
            )));
        }
        Ok(())
    }

    /// Weight active in 1-based iteration `it`.
    pub fn mu_at(&self, it: usize) -> F {
        if it <= self.warmup_iterations {
            F::zero()
        } else {
            self.mu
        }
    }
}

/// GKL between the tensor and the model.
pub fn data_cost<F: Scalar>(model: &NtfModel<F>, c: &PropTensor<F>) -> F {
    let mut acc = F::zero();
    for a in 0..c.arrays() {
        let approx = model.reconstruct_slice(a);
        Zip::from(&c.slice(a)).and(&approx).for_each(|&b, &x| acc = acc + gkl(b, x));
    }
    acc
}

/// `sum_k min_b sum_a D(p_{a,b} | z_{a,k})`.
pub fn regularizer<F: Scalar>(model: &NtfModel<F>, attractors: &AttractorSet<F>) -> F {
    model.allocation.axis_iter(Axis(1)).fold(F::zero(), |acc, z| acc + attractors.nearest(z).1)
}

/// Regularized objective with the nearest-attractor assignment of the current `Z`.
pub fn evaluate_cost<F: Scalar>(model: &NtfModel<F>, c: &PropTensor<F>, attractors: &AttractorSet<F>, mu: F) -> F {
    let data = data_cost(model, c);
    if mu == F::zero() {
        data
    } else {
        data + mu * regularizer(model, attractors)
    }
}

/// Multiplicative update of `Z` for a fixed assignment (no normalization).
pub fn allocation_step<F: Scalar>(
    model: &mut NtfModel<F>,
    c: &PropTensor<F>,
    attractors: &AttractorSet<F>,
    assignment: &Assignment,
    mu: F,
) {
    let (arrays, rank) = model.allocation.dim();
    let basis_mass = model.basis.sum_axis(Axis(0));
    let activation_mass = model.activation.sum_axis(Axis(0));
    let mut next = model.allocation.clone();
    for a in 0..arrays {
        let r = ratio(&c.slice(a).to_owned(), &model.reconstruct_slice(a));
        let rv = r.dot(&model.activation);
        for k in 0..rank {
            let data: F = (0..model.basis.nrows()).map(|i| model.basis[(i, k)] * rv[(i, k)]).sum();
            let p = attractors.vectors[(a, assignment.classes[k])];
            next[(a, k)] = (model.allocation[(a, k)] * data + mu * p)
                / (basis_mass[k] * activation_mass[k] + mu);
        }
    }
    floor_entries(&mut next);
    model.allocation = next;
}

/// Projects each `z_k` onto the simplex by scaling, folding the scale into `v_k`.
pub fn normalize_allocation<F: Scalar>(model: &mut NtfModel<F>) {
    normalize_columns(&mut model.allocation, &mut model.activation);
}

/// Multiplicative update of `T` (no normalization).
pub fn basis_step<F: Scalar>(model: &mut NtfModel<F>, c: &PropTensor<F>) {
    let (bins, rank) = model.basis.dim();
    let mut num = Array2::<F>::zeros((bins, rank));
    for a in 0..c.arrays() {
        let r = ratio(&c.slice(a).to_owned(), &model.reconstruct_slice(a));
        let rv = r.dot(&model.activation);
        num.zip_mut_with(&(&rv * &model.allocation.row(a)), |n, &x| *n = *n + x);
    }
    let activation_mass = model.activation.sum_axis(Axis(0));
    let den = &model.allocation.sum_axis(Axis(0)) * &activation_mass;
    Zip::from(&mut model.basis).and(&num).and_broadcast(&den).for_each(|t, &n, &d| *t = *t * n / d);
    floor_entries(&mut model.basis);
}

pub fn normalize_basis<F: Scalar>(model: &mut NtfModel<F>) {
    normalize_columns(&mut model.basis, &mut model.activation);
}

/// Multiplicative update of `V`.
pub fn activation_step<F: Scalar>(model: &mut NtfModel<F>, c: &PropTensor<F>) {
    let (frames, rank) = model.activation.dim();
    let mut num = Array2::<F>::zeros((frames, rank));
    for a in 0..c.arrays() {
        let r = ratio(&c.slice(a).to_owned(), &model.reconstruct_slice(a));
        let rt = r.t().dot(&model.basis);
        num.zip_mut_with(&(&rt * &model.allocation.row(a)), |n, &x| *n = *n + x);
    }
    let basis_mass = model.basis.sum_axis(Axis(0));
    let den = &model.allocation.sum_axis(Axis(0)) * &basis_mass;
    Zip::from(&mut model.activation).and(&num).and_broadcast(&den).for_each(|v, &n, &d| *v = *v * n / d);
    floor_entries(&mut model.activation);
}

/// One composite iteration: reassign attractors, update and normalize `Z`,
/// update and normalize `T`, update `V`. Returns the assignment used for `Z`.
///
/// With a single array the simplex holds only `z = 1`, so the `Z` update is
/// skipped and the iteration reduces to plain GKL NMF.
pub fn update_step<F: Scalar>(
    model: &mut NtfModel<F>,
    c: &PropTensor<F>,
    attractors: &AttractorSet<F>,
    mu: F,
) -> Assignment {
    let assignment = assign_attractors(&model.allocation, attractors);
    if model.arrays() > 1 {
        allocation_step(model, c, attractors, &assignment, mu);
        normalize_allocation(model);
    }
    basis_step(model, c);
    normalize_basis(model);
    activation_step(model, c);
    assignment
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint<F = f64> {
    /// Iterations completed when the cost was taken.
    pub iteration: usize,
    pub mu: F,
    pub cost: F,
}

#[derive(Debug, Clone)]
pub struct NtfFit<F = f64> {
    pub model: NtfModel<F>,
    pub assignment: Assignment,
    /// Cost before the first iteration and after each iteration under the
    /// weight then active. When the weight switches on, an extra point
    /// re-evaluates the pre-switch model under the new weight, so every
    /// constant-`mu` segment starts from its own baseline.
    pub trace: Vec<TracePoint<F>>,
    pub seed: u64,
}

impl<F: Scalar> NtfFit<F> {
    /// Trace split into runs of constant `mu`.
    pub fn segments(&self) -> Vec<&[TracePoint<F>]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.trace.len() {
            if i == self.trace.len() || self.trace[i].mu != self.trace[start].mu {
                out.push(&self.trace[start..i]);
                start = i;
            }
        }
        out
    }
}

pub fn fit_ntf<F: Scalar>(
    c: &PropTensor<F>,
    rank: usize,
    schedule: &RegularizationSchedule<F>,
    seed: u64,
) -> Result<NtfFit<F>> {
    fit_ntf_observed(c, rank, schedule, seed, |_, _| ControlFlow::Continue(()))
}

/// [`fit_ntf`] with a per-iteration callback receiving `(iteration, cost)`;
/// returning `Break` stops the fit with [`Error::Stopped`].
pub fn fit_ntf_observed<F: Scalar>(
    c: &PropTensor<F>,
    rank: usize,
    schedule: &RegularizationSchedule<F>,
    seed: u64,
    mut observer: impl FnMut(usize, F) -> ControlFlow<()>,
) -> Result<NtfFit<F>> {
    if rank == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    schedule.validate()?;
    let (arrays, bins, frames) = c.values.dim();
    if arrays == 0 || bins == 0 || frames == 0 {
        return Err(Error::Dimension(format!("empty tensor {:?}", c.values.dim())));
    }
    let attractors = AttractorSet::new(arrays);
    let mut model = NtfModel::random(arrays, bins, frames, rank, seed);
    let mut trace = Vec::with_capacity(schedule.total_iterations + 2);
    let mu0 = schedule.mu_at(1);
    trace.push(TracePoint { iteration: 0, mu: mu0, cost: evaluate_cost(&model, c, &attractors, mu0) });

    for it in 1..=schedule.total_iterations {
        let mu = schedule.mu_at(it);
        if mu != trace.last().unwrap().mu {
            let cost = evaluate_cost(&model, c, &attractors, mu);
            trace.push(TracePoint { iteration: it - 1, mu, cost });
        }
        update_step(&mut model, c, &attractors, mu);
        if !model.is_finite() {
            return Err(Error::NumericalDivergence(it));
        }
        let cost = evaluate_cost(&model, c, &attractors, mu);
        trace.push(TracePoint { iteration: it, mu, cost });
        if observer(it, cost).is_break() {
            return Err(Error::Stopped(format!("NTF stopped at iteration {it}")));
        }
    }
    let assignment = assign_attractors(&model.allocation, &attractors);
    Ok(NtfFit { model, assignment, trace, seed })
}

/// Per-array Wiener reconstruction `sum_k (h z t v)^2 / sum_k (z t v)^2 * y`.
///
/// All bases labelled target gives pass-through; none gives silence.
pub fn ntf_wiener<F: Scalar>(
    model: &NtfModel<F>,
    assignment: &Assignment,
    y: &BfOutputTensor<F>,
) -> Result<Vec<ComplexSpectrogram<F>>> {
    let (bins, frames, arrays) = y.values.dim();
    let rank = model.rank();
    if model.allocation.dim() != (arrays, rank)
        || model.basis.nrows() != bins
        || model.activation.nrows() != frames
        || assignment.target.len() != rank
    {
        return Err(Error::Dimension(format!(
            "model Z {:?}, T {:?}, V {:?}, h {} vs Y {:?}",
            model.allocation.dim(),
            model.basis.dim(),
            model.activation.dim(),
            assignment.target.len(),
            y.values.dim()
        )));
    }
    if assignment.target.iter().all(|&h| h) {
        return Ok(y.spectrograms());
    }
    if assignment.target.iter().all(|&h| !h) {
        log::warn!("no basis assigned to the common class; target estimate is silent");
        return Ok((0..arrays).map(|a| y.spectrogram(a).zeros_like()).collect());
    }
    let v_sq = model.activation.mapv(|v| v * v);
    let mut v_sq_target = v_sq.clone();
    for (k, mut col) in v_sq_target.axis_iter_mut(Axis(1)).enumerate() {
        if !assignment.target[k] {
            col.fill(F::zero());
        }
    }
    let floor = F::min_positive_value();
    let mut out = Vec::with_capacity(arrays);
    for a in 0..arrays {
        let zt_sq = (&model.basis * &model.allocation.row(a)).mapv(|x| x * x);
        let num = zt_sq.dot(&v_sq_target.t());
        let den = zt_sq.dot(&v_sq.t());
        let ya = y.values.index_axis(Axis(2), a);
        let mut values = Array2::<Complex<F>>::zeros((bins, frames));
        Zip::from(&mut values).and(&ya).and(&num).and(&den).for_each(|s, &y, &n, &d| {
            *s = y * (n / d.max(floor));
        });
        out.push(y.with_values(values));
    }
    Ok(out)
}

/// Text dump of `Z`, `T`, `V`, `b`, `h` and the cost trace.
pub fn dump_fit<F: Scalar>(fit: &NtfFit<F>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# ntf K={} seed={}", fit.model.rank(), fit.seed);
    write_matrix(&mut s, "Z", &fit.model.allocation);
    write_matrix(&mut s, "T", &fit.model.basis);
    write_matrix(&mut s, "V", &fit.model.activation);
    let b: Vec<String> = fit.assignment.classes.iter().map(|b| b.to_string()).collect();
    let h: Vec<String> = fit.assignment.target.iter().map(|&h| u8::from(h).to_string()).collect();
    let _ = writeln!(s, "b {}\n{}", b.len(), b.join(" "));
    let _ = writeln!(s, "h {}\n{}", h.len(), h.join(" "));
    let _ = writeln!(s, "trace {}", fit.trace.len());
    for p in &fit.trace {
        let _ = writeln!(s, "{} {:e} {:e}", p.iteration, p.mu, p.cost);
    }
    s
}
