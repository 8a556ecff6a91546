//! Shared numeric kernels: FFT plumbing, band-limited fractional delay,
//! single-frequency DTFT evaluation and phasor generation.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Zero samples appended before a fractional-delay FFT so the interpolation
/// ringing does not wrap around the segment.
const DELAY_GUARD_SAMPLES: usize = 64;

/// Phasor recurrences are re-anchored with an exact `cis` this often.
const PHASOR_ANCHOR_INTERVAL: usize = 512;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub(crate) fn inverse_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Smallest length `>= min_len` whose only prime factors are 2, 3, 5 and 7.
pub fn smooth_fft_len(min_len: usize) -> usize {
    let mut n = min_len.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5, 7] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Fills `out[k] = start * exp(j * step * k)` using a rotation recurrence
/// that is periodically re-anchored to keep the phase error near 1e-13 rad.
pub fn fill_phasor(out: &mut [Complex64], start_phase: f64, step: f64) {
    let rot = Complex64::cis(step);
    for (block, chunk) in out.chunks_mut(PHASOR_ANCHOR_INTERVAL).enumerate() {
        let k0 = (block * PHASOR_ANCHOR_INTERVAL) as f64;
        let mut z = Complex64::cis(start_phase + step * k0);
        for s in chunk.iter_mut() {
            *s = z;
            z *= rot;
        }
    }
}

/// Multiplies `x[k]` in place by `exp(j * (start_phase + step * k))`.
pub fn rotate_linear(x: &mut [Complex64], start_phase: f64, step: f64) {
    let rot = Complex64::cis(step);
    for (block, chunk) in x.chunks_mut(PHASOR_ANCHOR_INTERVAL).enumerate() {
        let k0 = (block * PHASOR_ANCHOR_INTERVAL) as f64;
        let mut z = Complex64::cis(start_phase + step * k0);
        for s in chunk.iter_mut() {
            *s *= z;
            z *= rot;
        }
    }
}

/// `out[k] += src[k] * scale * exp(j * (start_phase + step * k))`.
pub fn accumulate_rotated(
    out: &mut [Complex64],
    src: &[Complex64],
    scale: Complex64,
    start_phase: f64,
    step: f64,
) {
    let rot = Complex64::cis(step);
    let blocks = out
        .chunks_mut(PHASOR_ANCHOR_INTERVAL)
        .zip(src.chunks(PHASOR_ANCHOR_INTERVAL));
    for (block, (o, s)) in blocks.enumerate() {
        let k0 = (block * PHASOR_ANCHOR_INTERVAL) as f64;
        let mut z = scale * Complex64::cis(start_phase + step * k0);
        for (o, s) in o.iter_mut().zip(s) {
            *o += s * z;
            z *= rot;
        }
    }
}

/// Band-limited delay of `x` by `frac` samples (`0 <= frac < 1`) through a
/// linear phase ramp in the frequency domain.
///
/// The segment is zero-padded before the transform; the returned buffer is
/// longer than `x` and carries the interpolation tail past the last sample.
pub fn fractional_delay(x: &[Complex64], frac: f64) -> Vec<Complex64> {
    let n = smooth_fft_len(x.len() + DELAY_GUARD_SAMPLES);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..x.len()].copy_from_slice(x);
    forward_fft(n).process(&mut buf);

    // Bin k carries frequency k/n cycles/sample for k < n/2 and (k-n)/n above.
    let step = -2.0 * PI * frac / n as f64;
    let half = n.div_ceil(2);
    let scale = 1.0 / n as f64;
    rotate_linear(&mut buf[..half], 0.0, step);
    rotate_linear(&mut buf[half..], step * (half as f64 - n as f64), step);
    inverse_fft(n).process(&mut buf);
    for s in buf.iter_mut() {
        *s *= scale;
    }
    buf
}

/// DTFT of `x` at `freq` cycles/sample with the phase referenced to the
/// middle of the block: `sum x[k] exp(-j 2 pi f (k - (L-1)/2))`.
///
/// For a pure tone this yields the tone's phase at the block centre
/// regardless of small errors in `freq`.
pub fn centered_dtft(x: &[Complex64], freq: f64) -> Complex64 {
    let centre = (x.len() as f64 - 1.0) / 2.0;
    let step = -2.0 * PI * freq;
    let rot = Complex64::cis(step);
    let mut acc = Complex64::new(0.0, 0.0);
    for (block, chunk) in x.chunks(PHASOR_ANCHOR_INTERVAL).enumerate() {
        let k0 = (block * PHASOR_ANCHOR_INTERVAL) as f64;
        let mut z = Complex64::cis(step * (k0 - centre));
        for s in chunk {
            acc += s * z;
            z *= rot;
        }
    }
    acc
}

/// Integrate-and-dump decimation: averages consecutive blocks of `factor`
/// samples. A trailing partial block is discarded.
pub fn decimate_boxcar(x: &[Complex64], factor: usize) -> Vec<Complex64> {
    assert!(factor >= 1, "decimation factor must be at least 1");
    if factor == 1 {
        return x.to_vec();
    }
    let scale = 1.0 / factor as f64;
    x.chunks_exact(factor)
        .map(|c| c.iter().sum::<Complex64>() * scale)
        .collect()
}

/// Median of a slice of finite values (mean of the middle pair for even length).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (below, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if values.len() % 2 == 1 {
        upper
    } else {
        let lower = below.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let mut p = phase.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Unwraps a sequence of wrapped phases.
///
/// Whole turns are counted as an integer so the correction is applied with a
/// single rounding, however long the sequence.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut turns: i64 = 0;
    let mut prev: Option<f64> = None;
    for &p in phases {
        if let Some(q) = prev {
            turns -= ((p - q) / (2.0 * PI)).round() as i64;
        }
        out.push(p + 2.0 * PI * turns as f64);
        prev = Some(p);
    }
    out
}
