//! SDR metrics and seed aggregation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::signal::{convolve, cross_correlate, Waveform};
use crate::{Error, Result};

/// Reported in place of +/- infinity for exact matches and zero projections.
pub const SDR_CAP_DB: f64 = 300.0;
pub const DEFAULT_FILTER_TAPS: usize = 512;
/// Ratios above this are round-off of an exact match and report the cap.
pub const EXACT_MATCH_DB: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdrVariant {
    SiSdr,
    FilteredSdr,
}

impl SdrVariant {
    pub fn label(self) -> &'static str {
        match self {
            SdrVariant::SiSdr => "si-sdr",
            SdrVariant::FilteredSdr => "filtered-sdr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrReport {
    pub method: String,
    pub k: Option<usize>,
    /// tau for nmf, mu for ntf.
    pub hyper: Option<f64>,
    pub seed: u64,
    pub sdr_db: f64,
    pub variant: SdrVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub mean_db: f64,
    pub std_db: f64,
    pub count: usize,
}

fn ratio_db(signal: f64, residual: f64) -> f64 {
    if signal <= 0.0 {
        return -SDR_CAP_DB;
    }
    if residual <= 0.0 {
        return SDR_CAP_DB;
    }
    let db = 10.0 * (signal / residual).log10();
    if db > EXACT_MATCH_DB {
        SDR_CAP_DB
    } else {
        db.max(-SDR_CAP_DB)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn paired<'a>(estimate: &'a Waveform, reference: &'a Waveform) -> Result<(&'a [f64], &'a [f64])> {
    if estimate.sample_rate != reference.sample_rate {
        return Err(Error::SampleRateMismatch { expected: reference.sample_rate, found: estimate.sample_rate });
    }
    let n = estimate.len().min(reference.len());
    let (e, s) = (&estimate.samples[..n], &reference.samples[..n]);
    if s.iter().all(|&x| x == 0.0) {
        return Err(Error::SilentReference);
    }
    Ok((e, s))
}

/// Scale-invariant SDR in dB; signals are truncated to the shorter length.
pub fn si_sdr(estimate: &Waveform, reference: &Waveform) -> Result<f64> {
    let (e, s) = paired(estimate, reference)?;
    let alpha = dot(e, s) / dot(s, s);
    let residual: f64 = e.iter().zip(s).map(|(x, y)| (x - alpha * y).powi(2)).sum();
    Ok(ratio_db(alpha * alpha * dot(s, s), residual))
}

/// Gram matrix `G[k][l] = sum_{n<N} s[n-k] s[n-l]` of the delayed copies of
/// `s` truncated to `N` samples.
fn delayed_gram(s: &[f64], taps: usize) -> DMatrix<f64> {
    let n = s.len();
    let r = cross_correlate(s, s, taps - 1);
    let mut g = DMatrix::zeros(taps, taps);
    for tau in 0..taps {
        // first row from the full autocorrelation, then peel off the tail
        let mut v = r[taps - 1 + tau];
        for k in 0..taps - tau {
            let l = k + tau;
            if k > 0 {
                let (a, b) = (n as isize - k as isize, n as isize - l as isize);
                if a >= 0 && b >= 0 {
                    v -= s[a as usize] * s[b as usize];
                }
            }
            g[(k, l)] = v;
            g[(l, k)] = v;
        }
    }
    g
}

/// SDR allowing any FIR distortion of `filter_taps` taps on the reference.
pub fn filtered_sdr(estimate: &Waveform, reference: &Waveform, filter_taps: usize) -> Result<f64> {
    if filter_taps == 0 {
        return Err(Error::InvalidParameter("filter_taps must be at least 1".into()));
    }
    let (e, s) = paired(estimate, reference)?;
    let n = s.len();
    let taps = filter_taps.min(n);
    let gram = delayed_gram(s, taps);
    let xc = cross_correlate(e, s, taps - 1);
    let rhs = DVector::from_fn(taps, |k, _| xc[taps - 1 + k]);
    let h = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            let ridge = 1e-10 * gram.trace();
            log::warn!("filtered SDR: normal equations ill-conditioned, adding ridge {ridge:e}");
            let loaded = gram + DMatrix::identity(taps, taps) * ridge;
            match loaded.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => return Err(Error::NumericalDivergence(0)),
            }
        }
    };
    let mut proj = convolve(s, h.as_slice());
    proj.truncate(n);
    let residual: f64 = e.iter().zip(&proj).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(ratio_db(dot(&proj, &proj), residual))
}

/// Mean and unbiased standard deviation (0 for a single value).
pub fn aggregate(values: &[f64]) -> Result<AggregateStats> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("cannot aggregate zero reports".into()));
    }
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let std = if count > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(AggregateStats { mean_db: mean, std_db: std, count })
}

/// Aggregates reports sharing method, K, hyperparameter and variant.
pub fn aggregate_reports(reports: &[SdrReport]) -> Vec<(SdrReport, AggregateStats)> {
    let mut groups: Vec<(SdrReport, Vec<f64>)> = Vec::new();
    for r in reports {
        let same = |g: &SdrReport| g.method == r.method && g.k == r.k && g.hyper == r.hyper && g.variant == r.variant;
        match groups.iter_mut().find(|(g, _)| same(g)) {
            Some((_, v)) => v.push(r.sdr_db),
            None => groups.push((r.clone(), vec![r.sdr_db])),
        }
    }
    groups
        .into_iter()
        .map(|(key, v)| (key, aggregate(&v).expect("groups are nonempty")))
        .collect()
}
