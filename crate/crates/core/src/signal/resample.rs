use super::Waveform;
use crate::{Error, Result, Scalar};

const HALF_TAPS: usize = 32;
const KAISER_BETA: f64 = 8.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Windowed-sinc polyphase resampler: 64 taps per phase, Kaiser (beta = 8).
pub fn resample<F: Scalar>(x: &Waveform<F>, target_rate: u32) -> Result<Waveform<F>> {
    if target_rate == 0 {
        return Err(Error::InvalidParameter("target rate must be positive".into()));
    }
    if target_rate == x.sample_rate {
        return Ok(x.clone());
    }
    let g = gcd(x.sample_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (x.sample_rate as u64 / g) as usize;
    let cutoff = (target_rate as f64 / x.sample_rate as f64).min(1.0);

    // table[phase][tap]: tap k sits at input offset k - HALF_TAPS + 1 from floor(position)
    let norm = bessel_i0(KAISER_BETA);
    let table: Vec<Vec<F>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            (0..2 * HALF_TAPS)
                .map(|k| {
                    let t = (k as f64 - HALF_TAPS as f64 + 1.0) - frac;
                    let r = t / HALF_TAPS as f64;
                    if r.abs() >= 1.0 {
                        return F::zero();
                    }
                    let arg = std::f64::consts::PI * cutoff * t;
                    let sinc = if arg == 0.0 { 1.0 } else { arg.sin() / arg };
                    let win = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                    F::lit(cutoff * sinc * win)
                })
                .collect()
        })
        .collect();

    let out_len = (x.len() * up).div_ceil(down);
    let samples = (0..out_len)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as isize;
            let taps = &table[pos % up];
            let mut acc = F::zero();
            for (k, &h) in taps.iter().enumerate() {
                let idx = base + k as isize - HALF_TAPS as isize + 1;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc = acc + h * x.samples[idx as usize];
                }
            }
            acc
        })
        .collect();
    Ok(Waveform { samples, sample_rate: target_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn sine(freq: f64, rate: u32, len: usize) -> Waveform<f64> {
        let s = (0..len)
            .map(|t| (2.0 * std::f64::consts::PI * freq * t as f64 / rate as f64).sin())
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    fn peak_bin(x: &[f64]) -> usize {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        (0..buf.len() / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap()
    }

    #[test]
    fn same_rate_is_identity() {
        let x = sine(440.0, 16000, 1000);
        assert_eq!(resample(&x, 16000).unwrap(), x);
    }

    #[test]
    fn downsample_keeps_tone() {
        let x = sine(1000.0, 48000, 48000);
        let y = resample(&x, 16000).unwrap();
        assert_eq!(y.sample_rate, 16000);
        assert!((y.len() as isize - 16000).abs() <= 1);
        // 16000-point FFT at 16 kHz: 1 Hz bins, tone at bin 1000
        let bin = peak_bin(&y.samples[..16000]);
        assert!((bin as isize - 1000).abs() <= 1, "{bin}");
        // amplitude preserved away from edges
        let mid = &y.samples[2000..14000];
        let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
        assert!((rms - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3, "{rms}");
    }

    #[test]
    fn upsample_doubles_length() {
        for len in [1000usize, 1001, 7] {
            let x = sine(300.0, 8000, len);
            let y = resample(&x, 16000).unwrap();
            assert!((y.len() as isize - 2 * len as isize).abs() <= 1);
        }
    }

    #[test]
    fn upsample_interpolates_smooth_signal() {
        let x = sine(200.0, 8000, 4000);
        let y = resample(&x, 16000).unwrap();
        let reference = sine(200.0, 16000, 8000);
        let err = y.samples[200..7800]
            .iter()
            .zip(&reference.samples[200..7800])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn rejects_zero_rate() {
        assert!(resample(&sine(1.0, 100, 10), 0).is_err());
    }
}
