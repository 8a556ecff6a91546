//! Victim receive chain: dechirp, per-chirp range FFT, beat and phase
//! extraction, frame-level range and velocity, per-chirp RSSI.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::{centered_dtft, forward_fft, median, smooth_fft_len};
use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use crate::waveform::RadarConfig;

/// Zero-padding factor of the range FFT used for peak search.
const RANGE_FFT_OVERSAMPLING: usize = 4;

/// Shortest IF block `estimate_beat` accepts.
pub const MIN_BEAT_SAMPLES: usize = 64;

/// Tunables of the victim receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverSettings {
    /// A chirp counts as detected when its peak exceeds the median of its IF
    /// spectrum by this many dB.
    pub detection_margin_db: f64,
    /// Bandwidth kept after dechirping; the IF is integrated and dumped down
    /// to roughly this rate before the range FFT.
    pub if_bandwidth_hz: f64,
}

impl Default for ReceiverSettings {
    fn default() -> Self {
        Self {
            detection_margin_db: 12.0,
            if_bandwidth_hz: 1.0e6,
        }
    }
}

impl ReceiverSettings {
    pub fn decimation_factor(&self, sample_rate_hz: f64) -> usize {
        ((sample_rate_hz / self.if_bandwidth_hz).floor() as usize).max(1)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.detection_margin_db.is_finite() && self.detection_margin_db >= 0.0) {
            out.push("receiver.detection_margin_db must be a non-negative number".into());
        }
        if !(self.if_bandwidth_hz > 0.0 && self.if_bandwidth_hz.is_finite()) {
            out.push("receiver.if_bandwidth_hz must be positive".into());
        }
        out
    }
}

/// Dominant tone of an IF block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatEstimate {
    /// Refined peak frequency, signed, in Hz.
    pub freq_hz: f64,
    /// Phase of the tone at the centre of the block.
    pub phase_rad: f64,
    /// Amplitude of the tone (unit-amplitude tone reads 1).
    pub magnitude: f64,
    /// Median spectral magnitude on the same scale as `magnitude`.
    pub noise_floor: f64,
}

impl BeatEstimate {
    /// Peak-to-median ratio in dB.
    pub fn snr_db(&self) -> f64 {
        if self.noise_floor > 0.0 {
            20.0 * (self.magnitude / self.noise_floor).log10()
        } else {
            f64::INFINITY
        }
    }

    /// The estimate as a complex phasor (amplitude and centre phase).
    pub fn as_phasor(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase_rad)
    }
}

/// One frame's worth of victim output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub timestamp_s: f64,
    pub frame_index: u64,
    pub range_m: f64,
    pub velocity_mps: f64,
    pub beat_freq_hz: f64,
    pub per_chirp_phase_rad: Vec<f64>,
    /// Peak amplitude of each chirp's IF tone.
    pub per_chirp_rssi: Vec<f64>,
    pub per_chirp_beat_hz: Vec<f64>,
    pub per_chirp_detected: Vec<bool>,
}

/// Mixes a received chirp with the transmitted one: `tx * conj(rx)`.
///
/// A pure echo delayed by `t_d` becomes a tone at `S t_d` whose phase carries
/// `2 pi f_c t_d`.
pub fn dechirp(tx_chirp: &ComplexSignal, rx_chirp: &ComplexSignal) -> Result<ComplexSignal> {
    if tx_chirp.len() != rx_chirp.len() {
        return Err(Error::Argument(format!(
            "dechirp length mismatch: {} vs {}",
            tx_chirp.len(),
            rx_chirp.len()
        )));
    }
    if (tx_chirp.sample_rate_hz() - rx_chirp.sample_rate_hz()).abs()
        > 1e-9 * tx_chirp.sample_rate_hz()
    {
        return Err(Error::Argument("dechirp sample rate mismatch".into()));
    }
    let samples = tx_chirp
        .samples()
        .iter()
        .zip(rx_chirp.samples())
        .map(|(t, r)| t * r.conj())
        .collect();
    ComplexSignal::new(samples, tx_chirp.sample_rate_hz(), tx_chirp.start_time_s())
}

/// Finds the strongest tone of an IF block.
///
/// The coarse peak comes from a zero-padded FFT and is refined by a parabola
/// through the log-magnitudes of the peak bin and its neighbours. Phase and
/// amplitude are then read from the DTFT at the refined frequency, with the
/// phase referenced to the block centre.
pub fn estimate_beat(if_signal: &ComplexSignal) -> Result<BeatEstimate> {
    let x = if_signal.samples();
    let len = x.len();
    if len < MIN_BEAT_SAMPLES {
        return Err(Error::Argument(format!(
            "beat estimation needs at least {MIN_BEAT_SAMPLES} samples, got {len}"
        )));
    }
    if x.iter().all(|s| s.norm_sqr() == 0.0) {
        return Err(Error::NoDetection("IF block is identically zero".into()));
    }

    let nfft = smooth_fft_len(RANGE_FFT_OVERSAMPLING * len);
    let mut spec = vec![Complex64::new(0.0, 0.0); nfft];
    spec[..len].copy_from_slice(x);
    forward_fft(nfft).process(&mut spec);
    let mags: Vec<f64> = spec.iter().map(|s| s.norm()).collect();

    let (peak, _) = mags
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (k, &m)| if m > best.1 { (k, m) } else { best });
    let a = mags[(peak + nfft - 1) % nfft].ln();
    let b = mags[peak].ln();
    let c = mags[(peak + 1) % nfft].ln();
    let denom = a - 2.0 * b + c;
    let delta = if denom.is_finite() && denom < 0.0 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let mut cycles = (peak as f64 + delta) / nfft as f64;
    if cycles >= 0.5 {
        cycles -= 1.0;
    }

    let z = centered_dtft(x, cycles);
    let scale = 1.0 / len as f64;
    Ok(BeatEstimate {
        freq_hz: cycles * if_signal.sample_rate_hz(),
        phase_rad: z.arg(),
        magnitude: z.norm() * scale,
        noise_floor: median(&mags) * scale,
    })
}

/// `tx * conj(rx)` over one chirp, integrated and dumped by `factor`.
fn dechirp_decimated(tx: &[Complex64], rx: &[Complex64], factor: usize) -> Vec<Complex64> {
    let scale = 1.0 / factor as f64;
    tx.chunks_exact(factor)
        .zip(rx.chunks_exact(factor))
        .map(|(t, r)| {
            t.iter()
                .zip(r)
                .map(|(a, b)| a * b.conj())
                .sum::<Complex64>()
                * scale
        })
        .collect()
}

/// Adds to decimated IF samples the noise that receiver noise of variance
/// `power` at the antenna would contribute.
///
/// Antenna noise `w` enters the IF as `(1/M) sum tx_k conj(w_k)` over each
/// block of `M` samples. With `w` white and circular this is circular
/// Gaussian of variance `power * sum |tx_k|^2 / M^2`, so drawing it here is
/// exact in distribution and needs `M` times fewer draws.
fn add_if_noise(dec: &mut [Complex64], tx: &[Complex64], factor: usize, power: f64, rng: &mut dyn RngCore) {
    if power <= 0.0 {
        return;
    }
    let m2 = (factor * factor) as f64;
    for (d, block) in dec.iter_mut().zip(tx.chunks_exact(factor)) {
        let energy: f64 = block.iter().map(|s| s.norm_sqr()).sum();
        let sigma = (power * energy / m2 / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *d += Complex64::new(re * sigma, im * sigma);
    }
}

/// Per-chirp beat estimates of a frame, `None` where the IF was empty.
fn chirp_beats(
    tx_frame: &ComplexSignal,
    rx_frame: &ComplexSignal,
    config: &RadarConfig,
    settings: &ReceiverSettings,
    mut noise: Option<(f64, &mut dyn RngCore)>,
) -> Result<Vec<Option<BeatEstimate>>> {
    config.validate()?;
    let n = config.chirps_per_frame;
    let slot = config.samples_per_chirp();
    if tx_frame.len() < n * slot {
        return Err(Error::Argument(format!(
            "transmit frame holds {} samples, expected {}",
            tx_frame.len(),
            n * slot
        )));
    }
    let rx_offset = tx_frame.grid_offset(rx_frame)?;
    let fs = tx_frame.sample_rate_hz();
    let factor = settings.decimation_factor(fs);
    let dec_rate = fs / factor as f64;

    (0..n)
        .map(|i| {
            let tx = &tx_frame.samples()[i * slot..(i + 1) * slot];
            let at = i as i64 * slot as i64 - rx_offset;
            let mut dec = if at >= 0 && at as usize + slot <= rx_frame.len() {
                dechirp_decimated(tx, &rx_frame.samples()[at as usize..at as usize + slot], factor)
            } else {
                dechirp_decimated(tx, &rx_frame.window(at, slot), factor)
            };
            if let Some((power, rng)) = noise.as_mut() {
                add_if_noise(&mut dec, tx, factor, *power, &mut **rng);
            }
            let start = tx_frame.time_of(i * slot) + (factor as f64 - 1.0) / (2.0 * fs);
            let sig = ComplexSignal::new(dec, dec_rate, start)?;
            match estimate_beat(&sig) {
                Ok(b) => Ok(Some(b)),
                Err(Error::NoDetection(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Range and velocity of one frame with default receiver settings.
pub fn process_frame(
    tx_frame: &ComplexSignal,
    rx_frame: &ComplexSignal,
    config: &RadarConfig,
) -> Result<Measurement> {
    process_frame_with(tx_frame, rx_frame, config, &ReceiverSettings::default(), None)
}

/// Range and velocity of one frame.
///
/// `tx_frame` is what the victim actually transmitted, so per-chirp phase
/// randomization cancels in the dechirp. For hopped frames `hop_offsets_hz`
/// removes the residual `2 pi h_i t_d` each hop leaves on the IF phase.
///
/// Range is the power-weighted mean of detected chirps' beat frequencies.
/// Velocity comes from the argument of `sum X_{i+1} conj(X_i)` over adjacent
/// detected chirps, i.e. a circular mean of the phase steps weighted by the
/// product of the two chirps' amplitudes.
pub fn process_frame_with(
    tx_frame: &ComplexSignal,
    rx_frame: &ComplexSignal,
    config: &RadarConfig,
    settings: &ReceiverSettings,
    hop_offsets_hz: Option<&[f64]>,
) -> Result<Measurement> {
    process_frame_impl(tx_frame, rx_frame, config, settings, hop_offsets_hz, None)
}

/// [`process_frame_with`] for a noiseless `rx_frame`, with receiver noise of
/// variance `noise_power` (per antenna sample) injected after the dechirp.
/// Statistically identical to adding the noise to `rx_frame` first.
pub fn process_frame_noisy<R: Rng + ?Sized>(
    tx_frame: &ComplexSignal,
    rx_frame: &ComplexSignal,
    config: &RadarConfig,
    settings: &ReceiverSettings,
    hop_offsets_hz: Option<&[f64]>,
    noise_power: f64,
    rng: &mut R,
) -> Result<Measurement> {
    if !(noise_power >= 0.0 && noise_power.is_finite()) {
        return Err(Error::Argument(format!("noise power must be non-negative, got {noise_power}")));
    }
    let mut adapter = RngAdapter(rng);
    process_frame_impl(
        tx_frame,
        rx_frame,
        config,
        settings,
        hop_offsets_hz,
        Some((noise_power, &mut adapter)),
    )
}

/// Lets an unsized generic generator travel as `&mut dyn RngCore`.
struct RngAdapter<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

fn process_frame_impl(
    tx_frame: &ComplexSignal,
    rx_frame: &ComplexSignal,
    config: &RadarConfig,
    settings: &ReceiverSettings,
    hop_offsets_hz: Option<&[f64]>,
    noise: Option<(f64, &mut dyn RngCore)>,
) -> Result<Measurement> {
    let n = config.chirps_per_frame;
    if let Some(h) = hop_offsets_hz {
        if h.len() != n {
            return Err(Error::Argument(format!("expected {n} hop offsets, got {}", h.len())));
        }
    }
    let beats = chirp_beats(tx_frame, rx_frame, config, settings, noise)?;
    let threshold = 10f64.powf(settings.detection_margin_db / 20.0);
    let slope = config.slope();

    let mut phases = Vec::with_capacity(n);
    let mut rssi = Vec::with_capacity(n);
    let mut freqs = Vec::with_capacity(n);
    let mut detected = Vec::with_capacity(n);
    for (i, b) in beats.iter().enumerate() {
        match b {
            Some(b) => {
                let hop_phase = hop_offsets_hz
                    .map(|h| 2.0 * PI * h[i] * b.freq_hz / slope)
                    .unwrap_or(0.0);
                phases.push(crate::dsp::wrap_phase(b.phase_rad - hop_phase));
                rssi.push(b.magnitude);
                freqs.push(b.freq_hz);
                detected.push(b.magnitude >= threshold * b.noise_floor);
            }
            None => {
                phases.push(0.0);
                rssi.push(0.0);
                freqs.push(0.0);
                detected.push(false);
            }
        }
    }

    let hits = detected.iter().filter(|&&d| d).count();
    if hits * 2 <= n {
        return Err(Error::NoDetection(format!(
            "only {hits} of {n} chirps rose {} dB above the noise floor",
            settings.detection_margin_db
        )));
    }

    let (mut wsum, mut fsum) = (0.0, 0.0);
    for i in (0..n).filter(|&i| detected[i]) {
        let w = rssi[i] * rssi[i];
        wsum += w;
        fsum += w * freqs[i];
    }
    let beat = fsum / wsum;

    let pair: Complex64 = (0..n - 1)
        .filter(|&i| detected[i] && detected[i + 1])
        .map(|i| {
            Complex64::from_polar(rssi[i + 1], phases[i + 1])
                * Complex64::from_polar(rssi[i], phases[i]).conj()
        })
        .sum();
    if pair.norm() == 0.0 {
        return Err(Error::NoDetection("no adjacent pair of detected chirps".into()));
    }

    Ok(Measurement {
        timestamp_s: tx_frame.start_time_s(),
        frame_index: (tx_frame.start_time_s() / config.frame_interval_s).round().max(0.0) as u64,
        range_m: config.beat_to_range(beat),
        velocity_mps: config.phase_step_to_velocity(pair.arg()),
        beat_freq_hz: beat,
        per_chirp_phase_rad: phases,
        per_chirp_rssi: rssi,
        per_chirp_beat_hz: freqs,
        per_chirp_detected: detected,
    })
}

/// Per-chirp peak power in dB relative to the frame median.
pub fn rssi_profile(measurement: &Measurement) -> Vec<f64> {
    let db: Vec<f64> = measurement
        .per_chirp_rssi
        .iter()
        .map(|&a| 10.0 * (a * a).max(f64::MIN_POSITIVE).log10())
        .collect();
    let m = median(&db);
    db.iter().map(|d| d - m).collect()
}
