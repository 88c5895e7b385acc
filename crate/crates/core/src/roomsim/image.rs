use rayon::prelude::*;

use super::{Rir, RirSet, Scene};
use crate::{Error, Result};

/// Half-width of the 81-tap fractional-delay kernel.
const SINC_HALF: isize = 40;
const CALIBRATION_TOLERANCE: f64 = 0.05;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Adds `gain * delta(n - delay)` with Hann-windowed sinc interpolation.
fn add_fractional_impulse(taps: &mut [f64], delay: f64, gain: f64) {
    let centre = delay.round() as isize;
    let half_window = SINC_HALF as f64 + 1.0;
    for n in centre - SINC_HALF..=centre + SINC_HALF {
        if n < 0 || n as usize >= taps.len() {
            continue;
        }
        let t = n as f64 - delay;
        let w = 0.5 * (1.0 + (std::f64::consts::PI * t / half_window).cos());
        taps[n as usize] += gain * sinc(t) * w;
    }
}

/// Image sources along one axis of `[0, size]`: `(coordinate, reflections)`.
fn axis_images(coord: f64, size: f64, max_order: usize) -> Vec<(f64, u32)> {
    let mut out = Vec::new();
    let n_max = max_order as i64 / 2 + 1;
    for n in -n_max..=n_max {
        for q in 0..2i64 {
            let reflections = (2 * n - q).unsigned_abs();
            if reflections as usize > max_order {
                continue;
            }
            let x = if q == 0 { coord } else { -coord } + 2.0 * n as f64 * size;
            out.push((x, reflections as u32));
        }
    }
    out
}

struct ImageParams {
    reflection: f64,
    max_order: usize,
    len: usize,
}

fn rir_for(scene: &Scene, source: [f64; 2], mic: [f64; 2], p: &ImageParams) -> Vec<f64> {
    let fs = scene.sample_rate as f64;
    let c = scene.sound_speed;
    let mut taps = vec![0.0; p.len];
    let xs = axis_images(source[0], scene.room.width, p.max_order);
    let ys = axis_images(source[1], scene.room.depth, p.max_order);
    let horizon = p.len as f64 + SINC_HALF as f64;
    for &(x, rx) in &xs {
        for &(y, ry) in &ys {
            let r = (x - mic[0]).hypot(y - mic[1]);
            let delay = r / c * fs;
            if delay >= horizon {
                continue;
            }
            let gain = if rx + ry == 0 { 1.0 } else { p.reflection.powi((rx + ry) as i32) };
            if gain == 0.0 {
                continue;
            }
            // cylindrical spreading
            add_fractional_impulse(&mut taps, delay, gain / r.sqrt());
        }
    }
    taps
}

fn max_direct_delay(scene: &Scene) -> f64 {
    let fs = scene.sample_rate as f64;
    let mut best: f64 = 0.0;
    for s in &scene.sources {
        for arr in &scene.arrays {
            for m in arr.mic_positions() {
                let r = (s.position[0] - m[0]).hypot(s.position[1] - m[1]);
                best = best.max(r / scene.sound_speed * fs);
            }
        }
    }
    best
}

fn image_params(scene: &Scene, reflection: f64) -> ImageParams {
    let fs = scene.sample_rate as f64;
    let direct = max_direct_delay(scene);
    if scene.t60 == 0.0 || reflection == 0.0 {
        return ImageParams { reflection: 0.0, max_order: 0, len: direct.ceil() as usize + SINC_HALF as usize + 1 };
    }
    let min_side = scene.room.width.min(scene.room.depth);
    let max_order = (scene.sound_speed * scene.t60 / min_side).ceil() as usize + 3;
    let len = (direct + scene.t60 * fs).ceil() as usize + SINC_HALF as usize + 1;
    ImageParams { reflection, max_order, len }
}

/// Schroeder backward-integration T60, extrapolated from the -5 dB to -25 dB
/// span of the energy decay curve. `None` when the curve never reaches -25 dB.
pub fn schroeder_t60(taps: &[f64], sample_rate: u32) -> Option<f64> {
    let mut edc = vec![0.0; taps.len()];
    let mut acc = 0.0;
    for (n, &h) in taps.iter().enumerate().rev() {
        acc += h * h;
        edc[n] = acc;
    }
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let (mut sx, mut sy, mut sxx, mut sxy, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut reached = false;
    for (n, &e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if db <= -25.0 {
            reached = true;
            break;
        }
        if db <= -5.0 {
            let t = n as f64 / sample_rate as f64;
            sx += t;
            sy += db;
            sxx += t * t;
            sxy += t * db;
            count += 1.0;
        }
    }
    if !reached || count < 2.0 {
        return None;
    }
    let slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    (slope < 0.0).then(|| -60.0 / slope)
}

/// Finds the uniform wall reflection coefficient whose probe RIR (target to
/// array 0, mic 0) has the requested Schroeder T60, by bisection.
pub fn calibrate_reflection(scene: &Scene) -> Result<f64> {
    scene.validate()?;
    if scene.t60 == 0.0 {
        return Ok(0.0);
    }
    let source = scene.sources[scene.target_index()].position;
    let mic = scene.arrays[0].mic_positions()[0];
    let estimate = |rho: f64| {
        let p = image_params(scene, rho);
        schroeder_t60(&rir_for(scene, source, mic, &p), scene.sample_rate).unwrap_or(0.0)
    };
    let (mut lo, mut hi) = (0.0, 0.9999);
    let top = estimate(hi);
    if top < scene.t60 * (1.0 - CALIBRATION_TOLERANCE) {
        log::warn!("T60 {:.3} s unreachable in this room (max {:.3} s)", scene.t60, top);
        return Ok(hi);
    }
    let mut best = (hi, (top - scene.t60).abs());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let t = estimate(mid);
        let err = (t - scene.t60).abs();
        if err < best.1 {
            best = (mid, err);
        }
        if err < 0.005 * scene.t60 {
            break;
        }
        if t < scene.t60 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.1 > CALIBRATION_TOLERANCE * scene.t60 {
        log::warn!("reflection calibration off by {:.1}%", 100.0 * best.1 / scene.t60);
    }
    Ok(best.0)
}

/// Image-source RIRs for every (source, array, mic) triple. Anechoic scenes
/// give the direct path only; otherwise the wall reflection is calibrated to
/// the scene's T60.
pub fn simulate_rirs(scene: &Scene) -> Result<RirSet> {
    let rho = calibrate_reflection(scene)?;
    simulate_rirs_with_reflection(scene, rho)
}

pub fn simulate_rirs_with_reflection(scene: &Scene, reflection: f64) -> Result<RirSet> {
    scene.validate()?;
    if !(0.0..1.0).contains(&reflection) {
        return Err(Error::InvalidParameter(format!("reflection coefficient {reflection} outside [0, 1)")));
    }
    let params = image_params(scene, reflection);
    let triples: Vec<(usize, usize, usize)> = (0..scene.sources.len())
        .flat_map(|s| {
            scene
                .arrays
                .iter()
                .enumerate()
                .flat_map(move |(a, arr)| (0..arr.mic_count).map(move |m| (s, a, m)))
        })
        .collect();
    let flat: Vec<Vec<f64>> = triples
        .par_iter()
        .map(|&(s, a, m)| {
            let mic = scene.arrays[a].mic_positions()[m];
            rir_for(scene, scene.sources[s].position, mic, &params)
        })
        .collect();

    let mut iter = flat.into_iter();
    let rirs = (0..scene.sources.len())
        .map(|_| {
            scene
                .arrays
                .iter()
                .map(|arr| {
                    (0..arr.mic_count)
                        .map(|_| Rir { taps: iter.next().unwrap(), sample_rate: scene.sample_rate })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(RirSet {
        roles: scene.roles(),
        mics_per_array: scene.arrays.iter().map(|a| a.mic_count).collect(),
        sample_rate: scene.sample_rate,
        rirs,
    })
}
