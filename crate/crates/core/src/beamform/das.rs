use crate::signal::{cross_correlate, Waveform};
use crate::{Error, Result};

/// `ceil(distance / c * fs) + 32` samples.
pub fn default_max_lag(max_distance: f64, sound_speed: f64, sample_rate: u32) -> usize {
    (max_distance / sound_speed * sample_rate as f64).ceil() as usize + 32
}

/// Lag `l` maximizing `sum_n x[n + l] anchor[n]`; ties keep the smallest |l|.
pub fn best_lag(anchor: &[f64], x: &[f64], max_lag: usize) -> isize {
    let r = cross_correlate(x, anchor, max_lag);
    let mut best = (max_lag as isize, f64::NEG_INFINITY);
    for (idx, &v) in r.iter().enumerate() {
        let lag = idx as isize - max_lag as isize;
        if v > best.1 || (v == best.1 && lag.abs() < best.0.abs()) {
            best = (lag, v);
        }
    }
    best.0
}

/// Aligns every estimate to the first non-silent one and averages over all
/// `A` inputs; silent inputs add nothing.
pub fn delay_and_sum(estimates: &[Waveform], max_lag: usize) -> Result<Waveform> {
    let first = estimates.first().ok_or(Error::EmptySignal)?;
    let fs = first.sample_rate;
    if let Some(w) = estimates.iter().find(|w| w.sample_rate != fs) {
        return Err(Error::SampleRateMismatch { expected: fs, found: w.sample_rate });
    }
    let len = first.len();
    let mut out = vec![0.0; len];
    let silent: Vec<bool> = estimates.iter().map(|w| w.samples.iter().all(|&s| s == 0.0)).collect();
    for (a, &s) in silent.iter().enumerate() {
        if s {
            log::warn!("delay-and-sum: estimate {a} is all zeros and contributes nothing");
        }
    }
    let Some(anchor) = silent.iter().position(|&s| !s) else {
        return Ok(Waveform::zeros(len, fs));
    };
    let anchor = &estimates[anchor].samples;
    let scale = 1.0 / estimates.len() as f64;
    for (w, &s) in estimates.iter().zip(&silent) {
        if s {
            continue;
        }
        let lag = best_lag(anchor, &w.samples, max_lag);
        for (n, o) in out.iter_mut().enumerate() {
            let src = n as isize + lag;
            if src >= 0 && (src as usize) < w.len() {
                *o += w.samples[src as usize] * scale;
            }
        }
    }
    Waveform::new(out, fs)
}
