//! Victim-side defenses: per-chirp phase randomization, per-chirp frequency
//! hopping and detection of the attacker's silent sync prefix in the RSSI.
//!
//! The victim always dechirps against the frame it actually transmitted, so
//! random phases cancel for genuine echoes and hops only leave a known
//! `2 pi h_i t_d` residue, removed in [`crate::victim::process_frame_with`].

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::median;
use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use crate::victim::Measurement;
use crate::waveform::{generate_frame, generate_hopped_frame, RadarConfig};

/// Circular variance of adjacent phase steps above which the victim raises
/// the phase-consistency alarm.
pub const PHASE_ALARM_VARIANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountermeasureMode {
    #[default]
    None,
    PhaseRandom,
    FreqHop,
    RssiDetect,
    Combined,
}

impl CountermeasureMode {
    pub const ALL: [CountermeasureMode; 5] = [
        Self::None,
        Self::PhaseRandom,
        Self::FreqHop,
        Self::RssiDetect,
        Self::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::PhaseRandom => "phase_random",
            Self::FreqHop => "freq_hop",
            Self::RssiDetect => "rssi_detect",
            Self::Combined => "combined",
        }
    }

    pub fn randomizes_phase(self) -> bool {
        matches!(self, Self::PhaseRandom | Self::Combined)
    }

    pub fn hops(self) -> bool {
        matches!(self, Self::FreqHop | Self::Combined)
    }

    pub fn checks_rssi(self) -> bool {
        matches!(self, Self::RssiDetect | Self::Combined)
    }
}

impl fmt::Display for CountermeasureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountermeasureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.as_str()).collect();
                Error::Config(format!(
                    "unknown countermeasure '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountermeasureConfig {
    pub mode: CountermeasureMode,
    /// Number of equally spaced phases the random chirp phase is drawn from.
    pub phase_pool_size: usize,
    /// Center-frequency offsets a hopped chirp may use.
    pub hop_pool_hz: Vec<f64>,
    pub rssi_pattern_threshold_db: f64,
    /// Length of the weak prefix to test; the radar's sync count when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rssi_prefix_length: Option<usize>,
}

impl Default for CountermeasureConfig {
    fn default() -> Self {
        Self {
            mode: CountermeasureMode::None,
            phase_pool_size: 16,
            hop_pool_hz: default_hop_pool(),
            rssi_pattern_threshold_db: 10.0,
            rssi_prefix_length: None,
        }
    }
}

/// Eight offsets evenly spread over +/-2 MHz.
pub fn default_hop_pool() -> Vec<f64> {
    (0..8).map(|k| -2.0e6 + 4.0e6 * k as f64 / 7.0).collect()
}

impl CountermeasureConfig {
    pub fn with_mode(mode: CountermeasureMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn prefix_length(&self, config: &RadarConfig) -> usize {
        self.rssi_prefix_length.unwrap_or(config.sync_chirps)
    }

    /// Problems with the configuration, checked against the radar it guards.
    ///
    /// Pool sizes are only enforced for the modes that use them.
    pub fn violations(&self, config: &RadarConfig) -> Vec<String> {
        let mut out = Vec::new();
        if self.mode.randomizes_phase() && self.phase_pool_size < 2 {
            out.push("countermeasure.phase_pool_size must be at least 2".into());
        }
        if self.mode.hops() {
            if self.hop_pool_hz.len() < 2 {
                out.push("countermeasure.hop_pool_hz needs at least 2 offsets".into());
            }
            let edge = config.sample_rate_hz / 2.0 - config.bandwidth_hz / 2.0;
            if let Some(h) = self.hop_pool_hz.iter().find(|h| !(h.abs() <= edge)) {
                out.push(format!(
                    "countermeasure hop offset {h} Hz pushes the sweep outside the +/-{} Hz band",
                    config.sample_rate_hz / 2.0
                ));
            }
        }
        if !(self.rssi_pattern_threshold_db.is_finite()) {
            out.push("countermeasure.rssi_pattern_threshold_db must be finite".into());
        }
        let prefix = self.prefix_length(config);
        if self.mode.checks_rssi() && (prefix == 0 || prefix >= config.chirps_per_frame) {
            out.push(format!(
                "countermeasure.rssi_prefix_length must lie in 1..{}",
                config.chirps_per_frame
            ));
        }
        out
    }
}

/// The phases a victim draws for one frame: `2 pi k / pool_size` with `k`
/// uniform.
pub fn random_phases<R: Rng + ?Sized>(count: usize, pool_size: usize, rng: &mut R) -> Vec<f64> {
    let pool = pool_size.max(1);
    (0..count)
        .map(|_| TAU * rng.random_range(0..pool) as f64 / pool as f64)
        .collect()
}

/// Per-chirp hop offsets drawn uniformly from `pool`.
pub fn random_hops<R: Rng + ?Sized>(count: usize, pool: &[f64], rng: &mut R) -> Vec<f64> {
    if pool.is_empty() {
        return vec![0.0; count];
    }
    (0..count)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect()
}

/// Frame whose chirps carry phases drawn from a 16-entry pool.
pub fn phase_randomized_frame(config: &RadarConfig, seed: u64) -> Result<(ComplexSignal, Vec<f64>)> {
    phase_randomized_frame_with_pool(config, CountermeasureConfig::default().phase_pool_size, seed)
}

pub fn phase_randomized_frame_with_pool(
    config: &RadarConfig,
    pool_size: usize,
    seed: u64,
) -> Result<(ComplexSignal, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = random_phases(config.chirps_per_frame, pool_size, &mut rng);
    Ok((generate_frame(config, &phases)?, phases))
}

pub fn frequency_hopped_frame(
    config: &RadarConfig,
    hop_pool_hz: &[f64],
    seed: u64,
) -> Result<(ComplexSignal, Vec<f64>)> {
    let cm = CountermeasureConfig {
        mode: CountermeasureMode::FreqHop,
        hop_pool_hz: hop_pool_hz.to_vec(),
        ..CountermeasureConfig::default()
    };
    let problems: Vec<_> = cm
        .violations(config)
        .into_iter()
        .filter(|p| p.contains("band"))
        .collect();
    if !problems.is_empty() {
        return Err(Error::Argument(problems.join("; ")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hops = random_hops(config.chirps_per_frame, hop_pool_hz, &mut rng);
    let zeros = vec![0.0; config.chirps_per_frame];
    Ok((generate_hopped_frame(config, &zeros, Some(&hops))?, hops))
}

/// Outcome of a per-frame detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub flagged: bool,
    pub score: f64,
}

/// Circular variance `1 - |mean(exp(j dphi))|` of the adjacent phase steps
/// of detected chirps. Near 0 for a coherent target, near 1 when the steps
/// are random.
pub fn phase_step_variance(measurement: &Measurement) -> f64 {
    let p = &measurement.per_chirp_phase_rad;
    let d = &measurement.per_chirp_detected;
    let steps: Vec<Complex64> = (0..p.len().saturating_sub(1))
        .filter(|&i| d[i] && d[i + 1])
        .map(|i| Complex64::cis(p[i + 1] - p[i]))
        .collect();
    if steps.is_empty() {
        return 1.0;
    }
    1.0 - (steps.iter().sum::<Complex64>() / steps.len() as f64).norm()
}

pub fn phase_consistency_alarm(measurement: &Measurement) -> Verdict {
    let score = phase_step_variance(measurement);
    Verdict {
        flagged: score > PHASE_ALARM_VARIANCE,
        score,
    }
}

/// Flags a frame whose first `prefix` chirps are weaker (median RSSI, dB)
/// than the rest by more than the threshold. The score is the gap in dB.
pub fn rssi_detect(measurement: &Measurement, config: &CountermeasureConfig) -> Verdict {
    let db: Vec<f64> = measurement
        .per_chirp_rssi
        .iter()
        .map(|&a| 20.0 * a.max(1e-300).log10())
        .collect();
    let prefix = config
        .rssi_prefix_length
        .unwrap_or(2)
        .clamp(1, db.len().saturating_sub(1).max(1));
    if db.len() < 2 {
        return Verdict {
            flagged: false,
            score: 0.0,
        };
    }
    let score = median(&db[prefix..]) - median(&db[..prefix]);
    Verdict {
        flagged: score > config.rssi_pattern_threshold_db,
        score,
    }
}
