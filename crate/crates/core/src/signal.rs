//! Timestamped complex baseband sample buffers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance, in samples, when checking that two signals share a sample grid.
const GRID_TOLERANCE: f64 = 1e-3;

/// A block of complex baseband samples anchored in absolute simulation time.
///
/// Sample `k` is taken at `start_time_s + k / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    start_time_s: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64, start_time_s: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Argument("signal must hold at least one sample".into()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Argument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !start_time_s.is_finite() {
            return Err(Error::Argument("start time must be finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            start_time_s,
        })
    }

    /// All-zero signal of `len` samples.
    pub fn zeros(len: usize, sample_rate_hz: f64, start_time_s: f64) -> Result<Self> {
        Self::new(
            crate::buffer::zeroed(len),
            sample_rate_hz,
            start_time_s,
        )
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(mut self) -> Vec<Complex64> {
        std::mem::take(&mut self.samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Time just past the last sample.
    pub fn end_time_s(&self) -> f64 {
        self.start_time_s + self.duration_s()
    }

    /// Absolute time of sample `index`.
    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time_s + index as f64 / self.sample_rate_hz
    }

    pub fn with_start_time(mut self, start_time_s: f64) -> Self {
        self.start_time_s = start_time_s;
        self
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Number of samples by which `other` starts after `self`.
    ///
    /// Fails when the rates differ or the two start times are not separated by
    /// a whole number of samples.
    pub fn grid_offset(&self, other: &ComplexSignal) -> Result<i64> {
        if (self.sample_rate_hz - other.sample_rate_hz).abs() > 1e-9 * self.sample_rate_hz {
            return Err(Error::Argument(format!(
                "sample rate mismatch: {} Hz vs {} Hz",
                self.sample_rate_hz, other.sample_rate_hz
            )));
        }
        let offset = (other.start_time_s - self.start_time_s) * self.sample_rate_hz;
        let rounded = offset.round();
        if (offset - rounded).abs() > GRID_TOLERANCE {
            return Err(Error::Argument(format!(
                "signals are not on a common sample grid (offset {offset} samples)"
            )));
        }
        Ok(rounded as i64)
    }

    /// Copy of `len` samples starting `offset` samples after this signal's
    /// start; positions outside the signal read as zero.
    pub fn window(&self, offset: i64, len: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); len];
        let n = self.samples.len() as i64;
        let lo = offset.max(0);
        let hi = (offset + len as i64).min(n);
        if lo < hi {
            let dst = (lo - offset) as usize;
            out[dst..dst + (hi - lo) as usize]
                .copy_from_slice(&self.samples[lo as usize..hi as usize]);
        }
        out
    }

    /// Adds `other` into `self` over their common support. Samples of `other`
    /// that fall outside `self` are dropped.
    pub fn accumulate(&mut self, other: &ComplexSignal) -> Result<()> {
        let offset = self.grid_offset(other)?;
        let n = self.samples.len() as i64;
        let lo = offset.max(0);
        let hi = (offset + other.samples.len() as i64).min(n);
        if lo < hi {
            let src = &other.samples[(lo - offset) as usize..(hi - offset) as usize];
            for (d, s) in self.samples[lo as usize..hi as usize].iter_mut().zip(src) {
                *d += s;
            }
        }
        Ok(())
    }
}

impl Drop for ComplexSignal {
    fn drop(&mut self) {
        crate::buffer::recycle(std::mem::take(&mut self.samples));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_empty_and_bad_rate() {
        assert!(ComplexSignal::new(vec![], 1.0, 0.0).is_err());
        assert!(ComplexSignal::new(vec![c(1.0)], 0.0, 0.0).is_err());
        assert!(ComplexSignal::new(vec![c(1.0)], -5.0, 0.0).is_err());
    }

    #[test]
    fn duration_is_len_over_rate() {
        let s = ComplexSignal::zeros(250, 1000.0, 2.0).unwrap();
        assert!((s.duration_s() - 0.25).abs() < 1e-15);
        assert!((s.end_time_s() - 2.25).abs() < 1e-15);
    }

    #[test]
    fn grid_offset_and_window() {
        let a = ComplexSignal::new((0..10).map(|k| c(k as f64)).collect(), 10.0, 1.0).unwrap();
        let b = ComplexSignal::zeros(3, 10.0, 1.3).unwrap();
        assert_eq!(a.grid_offset(&b).unwrap(), 3);
        let off = ComplexSignal::zeros(3, 10.0, 1.35).unwrap();
        assert!(a.grid_offset(&off).is_err());

        let w = a.window(-2, 5);
        assert_eq!(w, vec![c(0.0), c(0.0), c(0.0), c(1.0), c(2.0)]);
        let w = a.window(8, 4);
        assert_eq!(w, vec![c(8.0), c(9.0), c(0.0), c(0.0)]);
    }
}
