//! Saw-tooth FMCW chirp and frame synthesis at complex baseband.
//!
//! Chirps sweep symmetrically from `-B/2` to `+B/2` around the carrier, so the
//! carrier only ever shows up as a phase rotation applied by the channel.
//! Each chirp restarts at its own commanded initial phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use crate::SPEED_OF_LIGHT;

/// Waveform and frame parameters shared by the victim radar and the attacker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_duration_s: f64,
    /// Chirps per frame (N).
    pub chirps_per_frame: usize,
    /// Leading chirps the attacker listens to before spoofing (n).
    pub sync_chirps: usize,
    pub sample_rate_hz: f64,
    /// Time between the starts of consecutive frames.
    pub frame_interval_s: f64,
    /// Linear amplitude of the transmitted chirps.
    pub tx_power: f64,
}

impl Default for RadarConfig {
    /// 1 GHz carrier, 28 MHz sweep, 1 ms chirps, 128 chirps per frame, two
    /// sync chirps, sampled at twice the bandwidth, one frame every 250 ms.
    fn default() -> Self {
        Self {
            carrier_freq_hz: 1.0e9,
            bandwidth_hz: 28.0e6,
            chirp_duration_s: 1.0e-3,
            chirps_per_frame: 128,
            sync_chirps: 2,
            sample_rate_hz: 56.0e6,
            frame_interval_s: 0.25,
            tx_power: 1.0,
        }
    }
}

impl RadarConfig {
    /// Chirp slope `S = B / T_c` in Hz/s.
    pub fn slope(&self) -> f64 {
        self.bandwidth_hz / self.chirp_duration_s
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn samples_per_chirp(&self) -> usize {
        (self.chirp_duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn samples_per_frame(&self) -> usize {
        self.samples_per_chirp() * self.chirps_per_frame
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.chirp_duration_s * self.chirps_per_frame as f64
    }

    /// Range bin width `c / (2B)`.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }

    /// Largest representable |v|, `lambda / (4 T_c)`.
    pub fn max_unambiguous_velocity(&self) -> f64 {
        self.wavelength() / (4.0 * self.chirp_duration_s)
    }

    /// Beat frequency of a target at `range_m`: `f_b = 2 S d / c`.
    pub fn range_to_beat(&self, range_m: f64) -> f64 {
        2.0 * self.slope() * range_m / SPEED_OF_LIGHT
    }

    /// Range of a beat frequency: `d = c f_b / (2 S)`.
    pub fn beat_to_range(&self, beat_hz: f64) -> f64 {
        SPEED_OF_LIGHT * beat_hz / (2.0 * self.slope())
    }

    /// Adjacent-chirp IF phase step of a target moving at `velocity_mps`:
    /// `4 pi v T_c / lambda`.
    pub fn velocity_to_phase_step(&self, velocity_mps: f64) -> f64 {
        4.0 * PI * velocity_mps * self.chirp_duration_s / self.wavelength()
    }

    pub fn phase_step_to_velocity(&self, phase_step_rad: f64) -> f64 {
        self.wavelength() * phase_step_rad / (4.0 * PI * self.chirp_duration_s)
    }

    /// Every violated invariant, as human-readable lines.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("chirp_duration_s", self.chirp_duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("frame_interval_s", self.frame_interval_s),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                out.push(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if !(self.tx_power >= 0.0 && self.tx_power.is_finite()) {
            out.push(format!("tx_power must be non-negative, got {}", self.tx_power));
        }
        if self.sample_rate_hz < 2.0 * self.bandwidth_hz {
            out.push(format!(
                "sample_rate_hz {} is below the Nyquist requirement 2*bandwidth = {}",
                self.sample_rate_hz,
                2.0 * self.bandwidth_hz
            ));
        }
        if self.carrier_freq_hz <= self.bandwidth_hz / 2.0 {
            out.push("carrier_freq_hz must exceed half the bandwidth".into());
        }
        if self.sync_chirps == 0 || self.sync_chirps >= self.chirps_per_frame {
            out.push(format!(
                "sync_chirps must satisfy 0 < n < N (n = {}, N = {})",
                self.sync_chirps, self.chirps_per_frame
            ));
        }
        if self.frame_duration_s() > self.frame_interval_s * (1.0 + 1e-12) {
            out.push(format!(
                "frame duration {} s exceeds frame_interval_s {} s",
                self.frame_duration_s(),
                self.frame_interval_s
            ));
        }
        let per_chirp = self.chirp_duration_s * self.sample_rate_hz;
        if (per_chirp - per_chirp.round()).abs() > 1e-6 || per_chirp.round() < 64.0 {
            out.push(format!(
                "chirp_duration_s * sample_rate_hz must be a whole number of at least 64 samples, got {per_chirp}"
            ));
        }
        let per_frame = self.frame_interval_s * self.sample_rate_hz;
        if (per_frame - per_frame.round()).abs() > 1e-6 {
            out.push(format!(
                "frame_interval_s * sample_rate_hz must be a whole number of samples, got {per_frame}"
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

/// Phase of the zero-initial-phase chirp at time `t` after its start.
pub fn chirp_phase(config: &RadarConfig, t: f64) -> f64 {
    2.0 * PI * (-0.5 * config.bandwidth_hz * t + 0.5 * config.slope() * t * t)
}

fn chirp_samples(config: &RadarConfig, initial_phase_rad: f64) -> Vec<Complex64> {
    let fs = config.sample_rate_hz;
    (0..config.samples_per_chirp())
        .map(|k| {
            let t = k as f64 / fs;
            Complex64::from_polar(config.tx_power, initial_phase_rad + chirp_phase(config, t))
        })
        .collect()
}

/// One chirp of `T_c * f_s` samples starting at time zero.
pub fn generate_chirp(config: &RadarConfig, initial_phase_rad: f64) -> Result<ComplexSignal> {
    config.validate()?;
    ComplexSignal::new(
        chirp_samples(config, initial_phase_rad),
        config.sample_rate_hz,
        0.0,
    )
}

/// N back-to-back chirps, chirp `i` starting at `i * T_c` with initial phase
/// `phases_rad[i]`.
pub fn generate_frame(config: &RadarConfig, phases_rad: &[f64]) -> Result<ComplexSignal> {
    generate_hopped_frame(config, phases_rad, None)
}

/// Like [`generate_frame`], with chirp `i` additionally shifted in frequency
/// by `hop_offsets_hz[i]` (frequency-hopping waveforms).
pub fn generate_hopped_frame(
    config: &RadarConfig,
    phases_rad: &[f64],
    hop_offsets_hz: Option<&[f64]>,
) -> Result<ComplexSignal> {
    config.validate()?;
    let n = config.chirps_per_frame;
    if phases_rad.len() != n {
        return Err(Error::Argument(format!(
            "expected {n} chirp phases, got {}",
            phases_rad.len()
        )));
    }
    if let Some(h) = hop_offsets_hz {
        if h.len() != n {
            return Err(Error::Argument(format!(
                "expected {n} hop offsets, got {}",
                h.len()
            )));
        }
    }
    let len = config.samples_per_chirp();
    let template = chirp_samples(config, 0.0);
    let mut samples = crate::buffer::with_capacity(len * n);
    let mut tone = vec![Complex64::new(0.0, 0.0); len];
    for (i, &phase) in phases_rad.iter().enumerate() {
        let rot = Complex64::cis(phase);
        match hop_offsets_hz.map(|h| h[i]).filter(|&h| h != 0.0) {
            None => samples.extend(template.iter().map(|s| s * rot)),
            Some(hop) => {
                crate::dsp::fill_phasor(
                    &mut tone,
                    phase,
                    2.0 * PI * hop / config.sample_rate_hz,
                );
                samples.extend(template.iter().zip(&tone).map(|(s, z)| s * z));
            }
        }
    }
    ComplexSignal::new(samples, config.sample_rate_hz, 0.0)
}
