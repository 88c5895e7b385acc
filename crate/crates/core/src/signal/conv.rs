use num_complex::Complex;
use rustfft::FftPlanner;

/// Full linear convolution, length `a.len() + b.len() - 1` (FFT based).
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let lift = |x: &[f64]| {
        let mut v = vec![Complex::new(0.0, 0.0); n];
        for (slot, &s) in v.iter_mut().zip(x) {
            slot.re = s;
        }
        v
    };
    let mut fa = lift(a);
    let mut fb = lift(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// `r[l] = sum_n x[n + l] y[n]` for lags `l` in `-max_lag..=max_lag`, indexed
/// by `l + max_lag`.
pub fn cross_correlate(x: &[f64], y: &[f64], max_lag: usize) -> Vec<f64> {
    // x[n + l] y[n] summed = (x conv reversed y) at index l + len(y) - 1
    let rev: Vec<f64> = y.iter().rev().copied().collect();
    let full = convolve(x, &rev);
    let zero = y.len() as isize - 1;
    (-(max_lag as isize)..=max_lag as isize)
        .map(|l| {
            let idx = zero + l;
            if idx >= 0 && (idx as usize) < full.len() {
                full[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}
