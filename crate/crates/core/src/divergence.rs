//! Generalized Kullback-Leibler divergence `D(b | a) = b log(b / a) + a - b`.

use crate::Scalar;

/// Elementwise GKL with the limits `D(0 | a) = a` and `D(b | 0) = +inf` for `b > 0`.
#[inline]
pub fn gkl<F: Scalar>(b: F, a: F) -> F {
    if b == F::zero() {
        a
    } else if a == F::zero() {
        F::infinity()
    } else {
        b * (b / a).ln() + a - b
    }
}

/// Sum of elementwise divergences over paired slices.
pub fn gkl_sum<F: Scalar>(target: impl IntoIterator<Item = F>, model: impl IntoIterator<Item = F>) -> F {
    target.into_iter().zip(model).map(|(b, a)| gkl(b, a)).fold(F::zero(), |acc, d| acc + d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_and_values() {
        assert_eq!(gkl(0.0, 0.3), 0.3);
        assert_eq!(gkl(0.2, 0.0), f64::INFINITY);
        assert_eq!(gkl(0.0f64, 0.0), 0.0);
        assert!(gkl(0.7f64, 0.7).abs() < 1e-16);
        let expect = 0.5 * (0.5f64 / 0.25).ln() + 0.25 - 0.5;
        assert!((gkl(0.5, 0.25) - expect).abs() < 1e-16);
    }

    #[test]
    fn nonnegative_on_grid() {
        for i in 0..20 {
            for j in 1..20 {
                let (b, a) = (i as f64 * 0.1, j as f64 * 0.1);
                assert!(gkl(b, a) >= -1e-15);
            }
        }
    }
}
