//! Recycling of large sample buffers.
//!
//! A full frame holds millions of samples. Fresh allocations of that size are
//! served by the OS page by page on first touch, which costs more than the
//! arithmetic done on them, so dropped signal buffers are kept in a small
//! process-wide pool and handed out again.

use std::sync::Mutex;

use num_complex::Complex64;

/// Buffers shorter than this are left to the allocator.
const MIN_POOLED_LEN: usize = 1 << 16;
/// Buffers kept for reuse.
const POOL_SLOTS: usize = 6;

static POOL: Mutex<Vec<Vec<Complex64>>> = Mutex::new(Vec::new());

fn with_pool<T>(f: impl FnOnce(&mut Vec<Vec<Complex64>>) -> T) -> T {
    let mut guard = POOL.lock().unwrap_or_else(|e| e.into_inner());
    f(&mut guard)
}

/// A zero-filled buffer of `len` samples.
pub(crate) fn zeroed(len: usize) -> Vec<Complex64> {
    let mut v = with_capacity(len);
    v.resize(len, Complex64::new(0.0, 0.0));
    v
}

/// An empty buffer able to hold `len` samples without reallocating.
pub(crate) fn with_capacity(len: usize) -> Vec<Complex64> {
    if len >= MIN_POOLED_LEN {
        let reused = with_pool(|pool| {
            let best = pool
                .iter()
                .enumerate()
                .filter(|(_, v)| v.capacity() >= len)
                .min_by_key(|(_, v)| v.capacity())
                .map(|(i, _)| i);
            best.map(|i| pool.swap_remove(i))
        });
        if let Some(mut v) = reused {
            v.clear();
            return v;
        }
        // Headroom so slightly longer requests later can reuse this buffer.
        return Vec::with_capacity(len + len / 8);
    }
    Vec::with_capacity(len)
}

/// Hands a buffer back for reuse.
pub(crate) fn recycle(v: Vec<Complex64>) {
    if v.capacity() < MIN_POOLED_LEN {
        return;
    }
    with_pool(|pool| {
        if pool.len() < POOL_SLOTS {
            pool.push(v);
        } else if let Some(smallest) = pool
            .iter_mut()
            .min_by_key(|b| b.capacity())
            .filter(|b| b.capacity() < v.capacity())
        {
            *smallest = v;
        }
    });
}

/// Builds a long buffer out of overlapping slot-sized pieces written in
/// ascending order. Zeros are laid down only just ahead of each piece, so
/// each region is still in cache when it is accumulated into.
pub(crate) struct Assembler {
    buf: Vec<Complex64>,
}

impl Assembler {
    pub(crate) fn new(capacity: usize) -> Self {
        Self {
            buf: with_capacity(capacity),
        }
    }

    /// `len` samples starting at `base`, zero where nothing was written yet.
    pub(crate) fn region(&mut self, base: usize, len: usize) -> &mut [Complex64] {
        if self.buf.len() < base + len {
            self.buf.resize(base + len, Complex64::new(0.0, 0.0));
        }
        &mut self.buf[base..base + len]
    }

    /// The assembled buffer, zero-padded or cut to exactly `len` samples.
    pub(crate) fn finish(mut self, len: usize) -> Vec<Complex64> {
        self.buf.resize(len, Complex64::new(0.0, 0.0));
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recycled_buffers_come_back_zeroed() {
        let mut v = zeroed(2 * MIN_POOLED_LEN);
        v[3] = Complex64::new(1.0, 2.0);
        recycle(v);
        let w = zeroed(MIN_POOLED_LEN);
        assert_eq!(w.len(), MIN_POOLED_LEN);
        assert!(w.iter().all(|s| *s == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn assembler_overlaps_add() {
        let one = Complex64::new(1.0, 0.0);
        let mut a = Assembler::new(8);
        a.region(0, 3).iter_mut().for_each(|s| *s += one);
        a.region(2, 3).iter_mut().for_each(|s| *s += one);
        a.region(7, 1)[0] += one;
        let v = a.finish(9);
        let re: Vec<f64> = v.iter().map(|s| s.re).collect();
        assert_eq!(re, [1.0, 1.0, 2.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn small_buffers_bypass_pool() {
        let v = zeroed(16);
        assert_eq!(v.len(), 16);
        recycle(v);
    }
}
