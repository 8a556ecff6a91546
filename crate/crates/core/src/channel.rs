//! Propagation between the victim radar and the attacker: delay, carrier
//! phase rotation, complex gain, oscillator drift and additive noise.
//!
//! The delay is evaluated once per chirp slot from the range at the slot's
//! start and held constant within the slot (stop-and-hop). Sub-sample delays
//! are realized by a frequency-domain phase ramp.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::buffer::Assembler;
use crate::dsp::{accumulate_rotated, fractional_delay};
use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use crate::waveform::RadarConfig;
use crate::SPEED_OF_LIGHT;

/// Geometry and impairments of one propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Separation between the radars at `epoch_s`.
    pub distance_m: f64,
    /// Range rate; positive when the radars move apart.
    pub relative_velocity_mps: f64,
    /// Linear amplitude gain of one traversal.
    pub path_gain: f64,
    /// Variance of the circular complex Gaussian noise added at the receiver.
    pub noise_power: f64,
    /// Receiver LO frequency minus transmitter LO frequency. Only applied by
    /// [`propagate_one_way`] when drift is requested.
    pub oscillator_offset_hz: f64,
    /// Time at which `distance_m` holds.
    pub epoch_s: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            distance_m: 0.0,
            relative_velocity_mps: 0.0,
            path_gain: 1.0,
            noise_power: 0.0,
            oscillator_offset_hz: 0.0,
            epoch_s: 0.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.distance_m,
            self.relative_velocity_mps,
            self.path_gain,
            self.noise_power,
            self.oscillator_offset_hz,
            self.epoch_s,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Channel("channel parameters must be finite".into()));
        }
        if self.distance_m < 0.0 {
            return Err(Error::Channel(format!(
                "distance must be non-negative, got {}",
                self.distance_m
            )));
        }
        if self.path_gain < 0.0 {
            return Err(Error::Channel("path gain must be non-negative".into()));
        }
        if self.noise_power < 0.0 {
            return Err(Error::Channel("noise power must be non-negative".into()));
        }
        Ok(())
    }

    /// Range at absolute time `t`.
    pub fn distance_at(&self, t: f64) -> f64 {
        self.distance_m + self.relative_velocity_mps * (t - self.epoch_s)
    }

    /// Round-trip delay `2 d(t) / c`.
    pub fn round_trip_delay_at(&self, t: f64) -> f64 {
        2.0 * self.distance_at(t) / SPEED_OF_LIGHT
    }

    /// One-way delay `d(t) / c`.
    pub fn one_way_delay_at(&self, t: f64) -> f64 {
        self.distance_at(t) / SPEED_OF_LIGHT
    }
}

#[derive(Clone, Copy)]
enum Path {
    RoundTrip,
    OneWay,
}

/// The last fractionally delayed slot. Frames are mostly the same chirp
/// under different complex scalings, and delaying is linear, so a slot that
/// is a scaled copy of the cached one at the same sub-sample delay reuses its
/// output instead of another pair of FFTs.
struct DelayCache {
    frac: f64,
    source: Vec<Complex64>,
    pivot: usize,
    energy: f64,
    delayed: Vec<Complex64>,
}

impl DelayCache {
    fn new(segment: &[Complex64], frac: f64) -> Self {
        let pivot = segment
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (k, s)| {
                if s.norm_sqr() > best.1 {
                    (k, s.norm_sqr())
                } else {
                    best
                }
            })
            .0;
        Self {
            frac,
            source: segment.to_vec(),
            pivot,
            energy: segment.iter().map(|s| s.norm_sqr()).sum(),
            delayed: fractional_delay(segment, frac),
        }
    }

    /// `c` such that `segment == c * source` to within rounding, if any.
    fn ratio(&self, segment: &[Complex64], frac: f64) -> Option<Complex64> {
        if frac != self.frac || segment.len() != self.source.len() || self.energy == 0.0 {
            return None;
        }
        let c = segment[self.pivot] / self.source[self.pivot];
        let mut residual = 0.0;
        for (s, r) in segment.iter().zip(&self.source) {
            residual += (s - c * r).norm_sqr();
        }
        (residual <= 1e-24 * self.energy * c.norm_sqr().max(1e-300)).then_some(c)
    }
}

fn propagate<R: Rng + ?Sized>(
    tx: &ComplexSignal,
    params: &ChannelParams,
    config: &RadarConfig,
    path: Path,
    apply_drift: bool,
    rng: &mut R,
) -> Result<ComplexSignal> {
    params.validate()?;
    config.validate()?;
    let fs = tx.sample_rate_hz();
    let slot = config.samples_per_chirp();
    let (traversals, amplitude) = match path {
        Path::RoundTrip => (2.0, params.path_gain * params.path_gain),
        Path::OneWay => (1.0, params.path_gain),
    };

    let delays: Vec<f64> = (0..tx.len().div_ceil(slot))
        .map(|j| {
            let t = tx.time_of(j * slot);
            let d = params.distance_at(t);
            if d < 0.0 {
                Err(Error::Channel(format!("range becomes negative ({d} m) at t = {t} s")))
            } else {
                Ok(traversals * d / SPEED_OF_LIGHT)
            }
        })
        .collect::<Result<_>>()?;
    let max_delay = delays.iter().copied().fold(0.0, f64::max);
    if max_delay >= tx.duration_s() {
        return Err(Error::Channel(format!(
            "delay {max_delay} s is not shorter than the signal ({} s)",
            tx.duration_s()
        )));
    }

    let extra = (max_delay * fs).ceil() as usize;
    let total = tx.len() + extra;
    let mut out = Assembler::new(total);
    let mut cache: Option<DelayCache> = None;
    // Oscillator drift, applied per slot on the way in.
    let w = if apply_drift {
        -2.0 * PI * params.oscillator_offset_hz
    } else {
        0.0
    };

    for (j, (segment, &delay)) in tx.samples().chunks(slot).zip(&delays).enumerate() {
        let gain = Complex64::from_polar(amplitude, -2.0 * PI * config.carrier_freq_hz * delay);
        let shift = delay * fs;
        let mut whole = shift.floor() as usize;
        let mut frac = shift - whole as f64;
        if frac > 1.0 - 1e-9 {
            whole += 1;
            frac = 0.0;
        }
        let base = j * slot + whole;
        let (src, g) = if frac < 1e-9 {
            (segment, gain)
        } else {
            let scale = match cache.as_ref().and_then(|c| c.ratio(segment, frac)) {
                Some(ratio) => ratio,
                None => {
                    cache = Some(DelayCache::new(segment, frac));
                    Complex64::new(1.0, 0.0)
                }
            };
            let delayed = &cache.as_ref().expect("cache filled above").delayed;
            (delayed.as_slice(), gain * scale)
        };
        let n = src.len().min(total.saturating_sub(base));
        let region = out.region(base, n);
        if w != 0.0 {
            let t = tx.start_time_s() + base as f64 / fs;
            accumulate_rotated(region, &src[..n], g, w * t, w / fs);
        } else {
            for (o, s) in region.iter_mut().zip(src) {
                *o += s * g;
            }
        }
    }

    let mut out = out.finish(total);
    add_noise_samples(&mut out, params.noise_power, rng);
    ComplexSignal::new(out, fs, tx.start_time_s())
}

/// Round-trip reflection of `tx` off a target described by `params`.
///
/// The output starts with `tx` and is extended by the largest delay. Chirp
/// slot `j` is delayed by `2 d(t_j) / c`, scaled by `path_gain^2`, rotated by
/// `exp(-j 2 pi f_c t_d)` and receiver noise of `noise_power` is added.
pub fn propagate_echo<R: Rng + ?Sized>(
    tx: &ComplexSignal,
    params: &ChannelParams,
    config: &RadarConfig,
    rng: &mut R,
) -> Result<ComplexSignal> {
    propagate(tx, params, config, Path::RoundTrip, false, rng)
}

/// Single traversal of `tx` over `params`: delay `d(t)/c`, one `path_gain`
/// factor, carrier rotation `exp(-j 2 pi f_c d(t)/c)` and noise.
///
/// With `apply_drift` the output is also rotated by `exp(-j 2 pi df t)` where
/// `df` is `oscillator_offset_hz` and `t` absolute time, which models the
/// phase the receiver's mismatched LO accumulates against the transmitter.
pub fn propagate_one_way<R: Rng + ?Sized>(
    tx: &ComplexSignal,
    params: &ChannelParams,
    config: &RadarConfig,
    apply_drift: bool,
    rng: &mut R,
) -> Result<ComplexSignal> {
    propagate(tx, params, config, Path::OneWay, apply_drift, rng)
}

/// Sample-wise sum of two signals over the union of their supports.
pub fn mix_signals(a: &ComplexSignal, b: &ComplexSignal) -> Result<ComplexSignal> {
    let offset = a.grid_offset(b)?;
    let start = offset.min(0);
    let end = (a.len() as i64).max(offset + b.len() as i64);
    let mut out = ComplexSignal::zeros(
        (end - start) as usize,
        a.sample_rate_hz(),
        a.start_time_s() + start as f64 / a.sample_rate_hz(),
    )?;
    out.accumulate(a)?;
    out.accumulate(b)?;
    Ok(out)
}

/// Like [`mix_signals`], reusing the buffer of `a`. Cheaper when `b` starts
/// no earlier than `a`, which is the case for an attacker's replicas landing
/// on top of the echo.
pub fn superpose(mut a: ComplexSignal, b: &ComplexSignal) -> Result<ComplexSignal> {
    let offset = a.grid_offset(b)?;
    if offset < 0 {
        return mix_signals(&a, b);
    }
    let end = (offset as usize + b.len()).max(a.len());
    let rate = a.sample_rate_hz();
    let start = a.start_time_s();
    let mut samples = a.into_samples();
    samples.resize(end, Complex64::new(0.0, 0.0));
    a = ComplexSignal::new(samples, rate, start)?;
    a.accumulate(b)?;
    Ok(a)
}

/// Adds circular complex Gaussian noise of variance `noise_power`.
pub fn add_noise<R: Rng + ?Sized>(signal: &mut ComplexSignal, noise_power: f64, rng: &mut R) {
    add_noise_samples(signal.samples_mut(), noise_power, rng);
}

fn add_noise_samples<R: Rng + ?Sized>(samples: &mut [Complex64], noise_power: f64, rng: &mut R) {
    if noise_power <= 0.0 {
        return;
    }
    let sigma = (noise_power / 2.0).sqrt();
    for s in samples.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(re * sigma, im * sigma);
    }
}

/// Scales chirp slot `i` of `signal` (counted from its start) by `gains[i]`.
/// Slots beyond `gains` are left untouched. Used to emulate fading.
pub fn apply_chirp_gains(signal: &mut ComplexSignal, gains: &[f64], config: &RadarConfig) {
    let slot = config.samples_per_chirp();
    for (chunk, &g) in signal.samples_mut().chunks_mut(slot).zip(gains) {
        for s in chunk.iter_mut() {
            *s *= g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{chirp_phase, generate_chirp, generate_frame};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    fn frame_config(n: usize) -> RadarConfig {
        RadarConfig {
            chirps_per_frame: n.max(2),
            sync_chirps: 1,
            ..RadarConfig::default()
        }
    }

    #[test]
    fn identity_channel_is_exact() {
        let cfg = frame_config(3);
        let tx = generate_frame(&cfg, &[0.1, 0.2, 0.3]).unwrap();
        let params = ChannelParams::default();
        let echo = propagate_echo(&tx, &params, &cfg, &mut rng()).unwrap();
        assert_eq!(echo, tx);
        let one = propagate_one_way(&tx, &params, &cfg, true, &mut rng()).unwrap();
        assert_eq!(one, tx);
    }

    #[test]
    fn one_way_identity_up_to_gain() {
        let cfg = frame_config(2);
        let tx = generate_frame(&cfg, &[0.0, 1.0]).unwrap();
        let params = ChannelParams {
            path_gain: 0.3,
            ..ChannelParams::default()
        };
        let out = propagate_one_way(&tx, &params, &cfg, true, &mut rng()).unwrap();
        for (a, b) in out.samples().iter().zip(tx.samples()) {
            assert!((a - b * 0.3).norm() < 1e-15);
        }
    }

    #[test]
    fn one_way_delay_matches_analytic_chirp() {
        let cfg = RadarConfig::default();
        let tx = generate_chirp(&cfg, 0.0).unwrap();
        let params = ChannelParams {
            distance_m: 60.0,
            ..ChannelParams::default()
        };
        let tau = params.one_way_delay_at(0.0);
        assert!((tau - 200.138e-9).abs() < 1e-12, "tau = {tau}");
        let out = propagate_one_way(&tx, &params, &cfg, false, &mut rng()).unwrap();
        let carrier = Complex64::cis(-2.0 * PI * cfg.carrier_freq_hz * tau);
        let mut max_err: f64 = 0.0;
        for k in 2_000..54_000 {
            let t = k as f64 / cfg.sample_rate_hz - tau;
            let want = Complex64::cis(chirp_phase(&cfg, t)) * carrier;
            max_err = max_err.max((out.samples()[k] - want).norm());
        }
        assert!(max_err < 2e-3, "max interior error {max_err}");
    }

    #[test]
    fn integer_delay_is_exact_shift() {
        let cfg = frame_config(1);
        let tx = generate_chirp(&cfg, 0.0).unwrap();
        // 10 samples round trip at f_s = 56 MHz.
        let d = 10.0 / cfg.sample_rate_hz * SPEED_OF_LIGHT / 2.0;
        let params = ChannelParams {
            distance_m: d,
            ..ChannelParams::default()
        };
        let echo = propagate_echo(&tx, &params, &cfg, &mut rng()).unwrap();
        let rot = Complex64::cis(-2.0 * PI * cfg.carrier_freq_hz * 10.0 / cfg.sample_rate_hz);
        assert_eq!(echo.len(), tx.len() + 10);
        for k in 0..10 {
            assert_eq!(echo.samples()[k], Complex64::new(0.0, 0.0));
        }
        for k in 0..tx.len() {
            assert!((echo.samples()[k + 10] - tx.samples()[k] * rot).norm() < 1e-9);
        }
    }

    /// Adjacent-slot phase difference measured on the aligned chirp interiors.
    fn slot_phase_step(sig: &ComplexSignal, cfg: &RadarConfig, params: &ChannelParams, traversals: f64) -> f64 {
        let slot = cfg.samples_per_chirp();
        let fs = cfg.sample_rate_hz;
        let tau0 = traversals * params.distance_at(0.0) / SPEED_OF_LIGHT;
        let tau1 = traversals * params.distance_at(cfg.chirp_duration_s) / SPEED_OF_LIGHT;
        // Echo of slot i occupies [i*slot + tau_i*fs, (i+1)*slot + tau_i*fs).
        let guard = 200;
        let lo = (tau0.max(tau1) * fs).ceil() as usize + guard;
        let hi = slot + (tau0.min(tau1) * fs).floor() as usize - guard;
        let s = sig.samples();
        let acc: Complex64 = (lo..hi).map(|k| s[slot + k] * s[k].conj()).sum();
        acc.arg()
    }

    #[test]
    fn doppler_phase_step_for_one_mps() {
        let cfg = frame_config(2);
        let tx = generate_frame(&cfg, &[0.0, 0.0]).unwrap();
        let params = ChannelParams {
            distance_m: 60.0,
            relative_velocity_mps: 1.0,
            ..ChannelParams::default()
        };
        let echo = propagate_echo(&tx, &params, &cfg, &mut rng()).unwrap();
        // The received phase falls by 4 pi v T_c / lambda per chirp.
        let step = -slot_phase_step(&echo, &cfg, &params, 2.0);
        let want = 4.0 * PI * 1.0 * 1e-3 / cfg.wavelength();
        assert!((want - 0.04192).abs() < 1e-5);
        assert!((step - want).abs() < 1e-6, "step {step} want {want}");
    }

    #[test]
    fn oscillator_drift_accumulates_per_chirp() {
        let cfg = frame_config(2);
        let tx = generate_frame(&cfg, &[0.0, 0.0]).unwrap();
        let params = ChannelParams {
            oscillator_offset_hz: 100.0,
            ..ChannelParams::default()
        };
        let out = propagate_one_way(&tx, &params, &cfg, true, &mut rng()).unwrap();
        let step = -slot_phase_step(&out, &cfg, &params, 1.0);
        assert!((step - 2.0 * PI * 100.0 * 1e-3).abs() < 1e-9, "step {step}");
        assert!((step - 0.6283).abs() < 1e-4);
    }

    #[test]
    fn delay_longer_than_signal_is_rejected() {
        let cfg = frame_config(1);
        let tx = generate_chirp(&cfg, 0.0).unwrap();
        let params = ChannelParams {
            distance_m: 200_000.0,
            ..ChannelParams::default()
        };
        assert!(matches!(
            propagate_echo(&tx, &params, &cfg, &mut rng()),
            Err(Error::Channel(_))
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let cfg = frame_config(1);
        let tx = generate_chirp(&cfg, 0.0).unwrap();
        for params in [
            ChannelParams { distance_m: -1.0, ..ChannelParams::default() },
            ChannelParams { path_gain: -0.1, ..ChannelParams::default() },
            ChannelParams { noise_power: -1e-3, ..ChannelParams::default() },
        ] {
            assert!(propagate_echo(&tx, &params, &cfg, &mut rng()).is_err());
        }
    }

    #[test]
    fn noise_variance_is_calibrated() {
        let mut sig = ComplexSignal::zeros(1_200_000, 1.0e6, 0.0).unwrap();
        add_noise(&mut sig, 0.37, &mut rng());
        let n = sig.len() as f64;
        let mean: Complex64 = sig.samples().iter().sum::<Complex64>() / n;
        let var = sig.samples().iter().map(|s| (s - mean).norm_sqr()).sum::<f64>() / n;
        assert!((var / 0.37 - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn mixing_identities() {
        let a = ComplexSignal::new(
            (0..8).map(|k| Complex64::new(k as f64, -(k as f64))).collect(),
            8.0,
            1.0,
        )
        .unwrap();
        let zero = ComplexSignal::zeros(8, 8.0, 1.0).unwrap();
        assert_eq!(mix_signals(&a, &zero).unwrap(), a);

        let neg = ComplexSignal::new(a.samples().iter().map(|s| -s).collect(), 8.0, 1.0).unwrap();
        let sum = mix_signals(&a, &neg).unwrap();
        assert!(sum.samples().iter().all(|s| s.norm() == 0.0));

        let late = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 4], 8.0, 2.0).unwrap();
        let u = mix_signals(&a, &late).unwrap();
        assert_eq!(u.len(), 12);
        assert_eq!(u.start_time_s(), 1.0);
        assert_eq!(u.samples()[11], Complex64::new(1.0, 0.0));
        assert_eq!(superpose(a.clone(), &late).unwrap(), u);
        assert_eq!(superpose(late.clone(), &a).unwrap(), mix_signals(&late, &a).unwrap());

        let other_rate = ComplexSignal::zeros(8, 16.0, 1.0).unwrap();
        assert!(matches!(mix_signals(&a, &other_rate), Err(Error::Argument(_))));
    }
}
