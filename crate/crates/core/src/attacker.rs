//! The adversarial radar.
//!
//! The attacker listens to the first `n` chirps of each victim frame, uses
//! the very first arrival to lock onto the victim's chirp schedule, measures
//! the per-chirp phase drift between its own internal chirps and the
//! received ones, and answers the remaining `N - n` chirps with replicas
//! whose timing encodes the spoofed range and whose chirp-to-chirp phase
//! encodes the spoofed velocity.
//!
//! Phase conventions follow the victim's dechirp `tx * conj(rx)`: a replica
//! transmitted with initial phase `-i * dphi` advances the victim's IF phase
//! by `dphi` per chirp.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{propagate_echo, propagate_one_way, superpose, ChannelParams};
use crate::buffer::Assembler;
use crate::dsp::{accumulate_rotated, median};
use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use crate::victim::estimate_beat;
use crate::waveform::{chirp_phase, RadarConfig};
use crate::SPEED_OF_LIGHT;

/// Leading samples of a capture assumed to hold noise only.
pub const NOISE_REFERENCE_SAMPLES: usize = 256;

/// The TOA level never drops below this fraction of the strongest sample, so
/// interpolation pre-ringing in a noiseless capture cannot trigger early.
const NOISELESS_LEVEL_FRACTION: f64 = 0.25;

/// Bandwidth the attacker keeps after mixing with its internal chirps.
const ATTACKER_IF_BANDWIDTH_HZ: f64 = 1.0e6;

/// Power margins below this are flagged as unreliable: the victim may lock
/// onto the legitimate echo instead of the replica.
pub const RELIABLE_MARGIN_DB: f64 = 6.0;

/// Fixed attacker tunables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackerSettings {
    /// Replica amplitude at the victim relative to the legitimate echo.
    pub power_margin_db: f64,
    /// TOA trigger level as a multiple of the median noise magnitude.
    pub sync_threshold: f64,
    /// Compensate the measured drift when choosing chirp phases.
    pub compensate_drift: bool,
    /// Noise-only samples captured ahead of each listening window.
    pub listen_guard_samples: usize,
}

impl Default for AttackerSettings {
    fn default() -> Self {
        Self {
            power_margin_db: 20.0,
            sync_threshold: 6.0,
            compensate_drift: true,
            listen_guard_samples: 512,
        }
    }
}

impl AttackerSettings {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.power_margin_db.is_finite() {
            out.push("attacker.power_margin_db must be finite".into());
        }
        if !(self.sync_threshold > 0.0 && self.sync_threshold.is_finite()) {
            out.push("attacker.sync_threshold must be positive".into());
        }
        if self.listen_guard_samples < NOISE_REFERENCE_SAMPLES {
            out.push(format!(
                "attacker.listen_guard_samples must be at least {NOISE_REFERENCE_SAMPLES}"
            ));
        }
        out
    }

    pub fn is_reliable(&self) -> bool {
        self.power_margin_db >= RELIABLE_MARGIN_DB
    }
}

/// Everything the attacker knows or has decided, threaded from frame to frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerState {
    pub settings: AttackerSettings,
    pub synced: bool,
    /// How many times TOA synchronization ran; stays at 1 once locked.
    pub sync_count: u32,
    /// Arrival time of the first victim chirp at the attacker.
    pub toa_s: f64,
    /// Estimated start of the victim frame used for synchronization.
    pub victim_epoch_s: f64,
    /// Estimated start of the frame currently being attacked.
    pub frame_start_s: f64,
    /// Round-trip delay of the true geometry, `t_d`.
    pub t_d_est_s: f64,
    /// Measured phase advance of received chirps against internal chirps.
    pub per_chirp_drift_rad: f64,
    /// The attacker's own knowledge of the victim's range and range rate.
    pub true_range_m: f64,
    pub true_velocity_mps: f64,
    pub spoof_range_m: f64,
    pub spoof_velocity_mps: f64,
    /// `t_m = 2 (d_hat - d) / c`.
    pub manipulated_delay_s: f64,
    /// `phi_m = 4 pi v_hat T_c / lambda`.
    pub manipulating_phase_rad: f64,
    /// Linear amplitude of the transmitted replicas.
    pub tx_amplitude: f64,
}

impl AttackerState {
    pub fn new(settings: AttackerSettings) -> Self {
        Self {
            settings,
            synced: false,
            sync_count: 0,
            toa_s: 0.0,
            victim_epoch_s: 0.0,
            frame_start_s: 0.0,
            t_d_est_s: 0.0,
            per_chirp_drift_rad: 0.0,
            true_range_m: 0.0,
            true_velocity_mps: 0.0,
            spoof_range_m: 0.0,
            spoof_velocity_mps: 0.0,
            manipulated_delay_s: 0.0,
            manipulating_phase_rad: 0.0,
            tx_amplitude: 1.0,
        }
    }

    /// Sets the phantom the victim should see.
    pub fn set_target(
        &mut self,
        spoof_range_m: f64,
        spoof_velocity_mps: f64,
        config: &RadarConfig,
    ) -> Result<()> {
        if !(spoof_range_m.is_finite() && spoof_range_m >= 0.0) {
            return Err(Error::InfeasibleSpoof(format!(
                "spoofed range must be non-negative, got {spoof_range_m}"
            )));
        }
        let vmax = config.max_unambiguous_velocity();
        if !(spoof_velocity_mps.abs() < vmax) {
            return Err(Error::InfeasibleSpoof(format!(
                "spoofed velocity {spoof_velocity_mps} m/s is outside the victim's unambiguous range +/-{vmax} m/s"
            )));
        }
        self.spoof_range_m = spoof_range_m;
        self.spoof_velocity_mps = spoof_velocity_mps;
        self.refresh(config);
        Ok(())
    }

    /// Updates the attacker's knowledge of the true geometry.
    pub fn observe_truth(&mut self, range_m: f64, velocity_mps: f64, config: &RadarConfig) {
        self.true_range_m = range_m;
        self.true_velocity_mps = velocity_mps;
        self.refresh(config);
    }

    fn refresh(&mut self, config: &RadarConfig) {
        self.t_d_est_s = 2.0 * self.true_range_m / SPEED_OF_LIGHT;
        self.manipulated_delay_s = 2.0 * (self.spoof_range_m - self.true_range_m) / SPEED_OF_LIGHT;
        self.manipulating_phase_rad = config.velocity_to_phase_step(self.spoof_velocity_mps);
    }

    /// Total delay the victim will measure, `t_a = t_d + t_m`.
    pub fn adversarial_delay_s(&self) -> f64 {
        self.t_d_est_s + self.manipulated_delay_s
    }

    /// Per-chirp IF phase increment imprinted on the replicas.
    ///
    /// The measured drift holds the oscillator term plus one traversal's
    /// worth of Doppler; the return traversal adds another Doppler term of
    /// opposite sense, so the round-trip Doppler of the true motion is
    /// removed on top of the drift.
    pub fn adversarial_phase_step(&self, config: &RadarConfig) -> f64 {
        if self.settings.compensate_drift {
            self.manipulating_phase_rad + self.per_chirp_drift_rad
                - config.velocity_to_phase_step(self.true_velocity_mps)
        } else {
            self.manipulating_phase_rad
        }
    }
}

/// Time of arrival of the first sample that rises above `threshold` times the
/// median magnitude of the capture's leading noise-only segment.
pub fn sync_toa(rx: &ComplexSignal, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::Argument(format!("threshold must be positive, got {threshold}")));
    }
    let mags: Vec<f64> = rx.samples().iter().map(|s| s.norm()).collect();
    let ref_len = NOISE_REFERENCE_SAMPLES.min(mags.len() / 4).max(1);
    let noise = median(&mags[..ref_len]);
    let peak = mags.iter().copied().fold(0.0, f64::max);
    let noise_level = threshold * noise;
    if peak == 0.0 || noise_level >= peak {
        return Err(Error::SyncFailure(
            "no sample rises above the noise threshold".into(),
        ));
    }
    let level = noise_level.max(NOISELESS_LEVEL_FRACTION * peak);
    let idx = mags
        .iter()
        .position(|&m| m > level)
        .ok_or_else(|| Error::SyncFailure("no sample rises above the noise threshold".into()))?;
    Ok(rx.time_of(idx))
}

/// Circular mean of adjacent phase differences across IF blocks obtained by
/// mixing received sync chirps with internal chirps.
pub fn estimate_drift(internal_if_signals: &[ComplexSignal]) -> Result<f64> {
    if internal_if_signals.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "drift estimation needs at least 2 IF blocks, got {}",
            internal_if_signals.len()
        )));
    }
    let phases = internal_if_signals
        .iter()
        .map(|s| estimate_beat(s).map(|b| b.phase_rad))
        .collect::<Result<Vec<_>>>()?;
    let mean: Complex64 = phases
        .windows(2)
        .map(|w| Complex64::cis(w[1] - w[0]))
        .sum();
    Ok(mean.arg())
}

/// Transmission instant of replica `i` so it reaches the victim `t_a` after
/// the victim's own chirp `i` starts.
fn replica_transmit_time(state: &AttackerState, config: &RadarConfig, i: usize) -> f64 {
    let offset = i as f64 * config.chirp_duration_s;
    let range = state.true_range_m + state.true_velocity_mps * offset;
    state.frame_start_s + offset + state.adversarial_delay_s() - range / SPEED_OF_LIGHT
}

/// Builds the `N - n` replica chirps answering victim chirps `n..N`.
///
/// Replica `i` is the victim chirp shifted to its transmit instant (with
/// sub-sample precision), scaled to the attacker's amplitude and rotated by
/// `-i * dphi_a`.
pub fn synthesize_spoof_frame(state: &AttackerState, config: &RadarConfig) -> Result<ComplexSignal> {
    config.validate()?;
    if !state.synced {
        return Err(Error::Protocol("attacker is not synchronized to the victim".into()));
    }
    let t_a = state.adversarial_delay_s();
    let window = config.chirp_duration_s / 2.0;
    if !(0.0..=window).contains(&t_a) {
        return Err(Error::InfeasibleSpoof(format!(
            "spoofed delay {t_a} s lies outside [0, {window}] s (t_m = {} s)",
            state.manipulated_delay_s
        )));
    }

    let fs = config.sample_rate_hz;
    let len = config.samples_per_chirp();
    let (n_sync, n_total) = (config.sync_chirps, config.chirps_per_frame);
    let step = state.adversarial_phase_step(config);
    let bandwidth = config.bandwidth_hz;
    let slope = config.slope();

    let template: Vec<Complex64> = (0..len)
        .map(|k| Complex64::cis(chirp_phase(config, k as f64 / fs)))
        .collect();

    // Whole samples and the fractional remainder are tracked separately so
    // that replicas of a static geometry share a bit-identical sub-sample
    // offset (and the return channel can reuse one fractional delay).
    let base_pos = replica_transmit_time(state, config, 0) * fs;
    let base_idx = base_pos.floor();
    let base_frac = base_pos - base_idx;
    let drift_per_chirp = state.true_velocity_mps * config.chirp_duration_s / SPEED_OF_LIGHT * fs;
    let placements: Vec<(i64, f64)> = (n_sync..n_total)
        .map(|i| {
            let frac = base_frac - i as f64 * drift_per_chirp;
            let whole = frac.floor();
            (base_idx as i64 + (i * len) as i64 + whole as i64, (frac - whole) / fs)
        })
        .collect();
    let first = placements[0].0;
    let last = placements[placements.len() - 1].0;
    let total = (last - first) as usize + len;
    let mut out = Assembler::new(total);

    for (i, &(idx, lead)) in (n_sync..n_total).zip(&placements) {
        // T(t - e) = T(t) exp(j 2 pi (B e / 2 + S e^2 / 2)) exp(-j 2 pi S e t)
        let phase = -(i as f64) * step
            + std::f64::consts::TAU * (0.5 * bandwidth * lead + 0.5 * slope * lead * lead);
        let base = (idx - first) as usize;
        accumulate_rotated(
            out.region(base, len),
            &template,
            Complex64::from(state.tx_amplitude),
            phase,
            -std::f64::consts::TAU * slope * lead / fs,
        );
    }
    ComplexSignal::new(out.finish(total), fs, first as f64 / fs)
}

/// Dechirps received sync chirps against internal chirps aligned to their
/// expected arrival.
fn internal_if_blocks(
    rx: &ComplexSignal,
    state: &AttackerState,
    config: &RadarConfig,
) -> Result<Vec<ComplexSignal>> {
    let fs = config.sample_rate_hz;
    let len = config.samples_per_chirp();
    let factor = ((fs / ATTACKER_IF_BANDWIDTH_HZ).floor() as usize).max(1);
    let internal: Vec<Complex64> = (0..len)
        .map(|k| Complex64::cis(chirp_phase(config, k as f64 / fs)))
        .collect();
    (0..config.sync_chirps)
        .map(|i| {
            let offset = i as f64 * config.chirp_duration_s;
            let range = state.true_range_m + state.true_velocity_mps * offset;
            let arrival = state.frame_start_s + offset + range / SPEED_OF_LIGHT;
            let start = ((arrival - rx.start_time_s()) * fs).round() as i64;
            let received = rx.window(start, len);
            let mixed: Vec<Complex64> = internal
                .iter()
                .zip(&received)
                .map(|(a, b)| a * b.conj())
                .collect();
            let dec = crate::dsp::decimate_boxcar(&mixed, factor);
            ComplexSignal::new(dec, fs / factor as f64, rx.time_of(0) + start as f64 / fs)
        })
        .collect()
}

/// The attacker's side of one frame: listen, synchronize (first call only),
/// measure drift, synthesize the replicas and send them back over the
/// return leg. Returns the replicas as they arrive at the victim antenna.
///
/// The victim's sync chirps reach the attacker with the channel's oscillator
/// drift and noise. The return leg sees the opposite oscillator offset and
/// carries no noise of its own: receiver noise belongs to the victim.
pub fn attack_transmission<R: Rng + ?Sized>(
    victim_tx: &ComplexSignal,
    state: &AttackerState,
    channel: &ChannelParams,
    config: &RadarConfig,
    rng: &mut R,
) -> Result<(ComplexSignal, AttackerState)> {
    config.validate()?;
    channel.validate()?;
    let mut state = state.clone();
    let t0 = victim_tx.start_time_s();
    let fs = config.sample_rate_hz;
    let len = config.samples_per_chirp();

    state.observe_truth(channel.distance_at(t0), channel.relative_velocity_mps, config);
    state.tx_amplitude =
        10f64.powf(state.settings.power_margin_db / 20.0) * config.tx_power * channel.path_gain;

    let guard = state.settings.listen_guard_samples;
    let listened = (config.sync_chirps * len).min(victim_tx.len());
    let mut capture = vec![Complex64::new(0.0, 0.0); guard + listened];
    capture[guard..].copy_from_slice(&victim_tx.samples()[..listened]);
    let capture = ComplexSignal::new(capture, fs, t0 - guard as f64 / fs)?;
    let rx = propagate_one_way(&capture, channel, config, true, rng)?;

    if !state.synced {
        let toa = sync_toa(&rx, state.settings.sync_threshold)?;
        state.toa_s = toa;
        state.victim_epoch_s = toa - state.true_range_m / SPEED_OF_LIGHT;
        state.synced = true;
        state.sync_count += 1;
    }
    let frames = ((t0 - state.victim_epoch_s) / config.frame_interval_s).round();
    state.frame_start_s = state.victim_epoch_s + frames * config.frame_interval_s;

    let blocks = internal_if_blocks(&rx, &state, config)?;
    state.per_chirp_drift_rad = estimate_drift(&blocks)?;

    let back_leg = ChannelParams {
        oscillator_offset_hz: -channel.oscillator_offset_hz,
        noise_power: 0.0,
        ..*channel
    };
    let replicas = synthesize_spoof_frame(&state, config)?;
    let arriving = propagate_one_way(&replicas, &back_leg, config, true, rng)?;
    Ok((arriving, state))
}

/// One attacked frame, end to end: [`attack_transmission`] superposed with
/// the legitimate echo, which carries the victim's receiver noise.
pub fn run_attack_frame<R: Rng + ?Sized>(
    victim_tx: &ComplexSignal,
    state: &AttackerState,
    channel: &ChannelParams,
    config: &RadarConfig,
    rng: &mut R,
) -> Result<(ComplexSignal, AttackerState)> {
    let (arriving, state) = attack_transmission(victim_tx, state, channel, config, rng)?;
    let echo = propagate_echo(victim_tx, channel, config, rng)?;
    Ok((superpose(echo, &arriving)?, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::add_noise;
    use crate::waveform::generate_chirp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synced_state(config: &RadarConfig) -> AttackerState {
        let mut s = AttackerState::new(AttackerSettings::default());
        s.synced = true;
        s.observe_truth(60.0, 0.0, config);
        s
    }

    #[test]
    fn targets_fix_manipulated_delay_and_phase() {
        let cfg = RadarConfig::default();
        let mut s = synced_state(&cfg);
        s.set_target(30.0, -10.0, &cfg).unwrap();
        assert!((s.manipulated_delay_s + 200.138e-9).abs() < 1e-12);
        assert!((s.manipulating_phase_rad + 0.4192).abs() < 1e-4);
        assert!((s.adversarial_delay_s() - 2.0 * 30.0 / SPEED_OF_LIGHT).abs() < 1e-18);
        assert!(s.set_target(10.0, 80.0, &cfg).is_err());
        assert!(s.set_target(-1.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn unsynced_state_cannot_synthesize() {
        let cfg = RadarConfig::default();
        let s = AttackerState::new(AttackerSettings::default());
        assert!(matches!(synthesize_spoof_frame(&s, &cfg), Err(Error::Protocol(_))));
    }

    #[test]
    fn excessive_delay_is_infeasible() {
        let cfg = RadarConfig::default();
        let mut s = synced_state(&cfg);
        s.set_target(100_000.0, 0.0, &cfg).unwrap();
        assert!(matches!(
            synthesize_spoof_frame(&s, &cfg),
            Err(Error::InfeasibleSpoof(_))
        ));
    }

    #[test]
    fn replica_count_and_amplitude() {
        let cfg = RadarConfig {
            chirps_per_frame: 6,
            ..RadarConfig::default()
        };
        let mut s = synced_state(&cfg);
        s.set_target(45.0, -5.0, &cfg).unwrap();
        s.tx_amplitude = 3.0;
        let sig = synthesize_spoof_frame(&s, &cfg).unwrap();
        let len = cfg.samples_per_chirp();
        assert!(sig.len() >= 4 * len && sig.len() <= 4 * len + 1);
        assert!((sig.samples()[len / 2].norm() - 3.0).abs() < 1e-9);
    }

    fn capture_with_arrival(delay_s: f64, noise_power: f64, seed: u64) -> (ComplexSignal, f64) {
        let cfg = RadarConfig {
            chirps_per_frame: 2,
            sync_chirps: 1,
            ..RadarConfig::default()
        };
        let chirp = generate_chirp(&cfg, 0.0).unwrap();
        let guard = 512;
        let mut s = vec![Complex64::new(0.0, 0.0); guard];
        s.extend_from_slice(chirp.samples());
        let start = 1.0 - guard as f64 / cfg.sample_rate_hz;
        let capture = ComplexSignal::new(s, cfg.sample_rate_hz, start).unwrap();
        let params = ChannelParams {
            distance_m: delay_s * SPEED_OF_LIGHT,
            epoch_s: 1.0,
            ..ChannelParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rx = propagate_one_way(&capture, &params, &cfg, false, &mut rng).unwrap();
        add_noise(&mut rx, noise_power, &mut rng);
        (rx, 1.0 + delay_s)
    }

    #[test]
    fn noiseless_toa_within_one_sample() {
        let delay = 60.0 / SPEED_OF_LIGHT;
        let (rx, truth) = capture_with_arrival(delay, 0.0, 0);
        let toa = sync_toa(&rx, 3.0).unwrap();
        assert!((toa - truth).abs() <= 1.0 / 56.0e6, "err {}", toa - truth);
    }

    #[test]
    fn toa_at_20db_snr_over_100_trials() {
        let delay = 60.0 / SPEED_OF_LIGHT;
        let fs = 56.0e6;
        for seed in 0..100 {
            let (rx, truth) = capture_with_arrival(delay, 0.01, seed);
            let toa = sync_toa(&rx, 6.0).unwrap();
            assert!(((toa - truth) * fs).abs() <= 2.0, "seed {seed}: {} samples", (toa - truth) * fs);
        }
    }

    #[test]
    fn pure_noise_fails_to_sync() {
        let mut sig = ComplexSignal::zeros(60_000, 56.0e6, 0.0).unwrap();
        add_noise(&mut sig, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(matches!(sync_toa(&sig, 6.0), Err(Error::SyncFailure(_))));
        let zero = ComplexSignal::zeros(1000, 56.0e6, 0.0).unwrap();
        assert!(matches!(sync_toa(&zero, 3.0), Err(Error::SyncFailure(_))));
    }

    #[test]
    fn drift_needs_two_blocks() {
        let z = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 100], 1.0e6, 0.0).unwrap();
        assert!(matches!(estimate_drift(&[z]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn drift_of_rotating_blocks() {
        let blocks: Vec<ComplexSignal> = (0..3)
            .map(|i| {
                let rot = Complex64::cis(0.6283 * i as f64);
                let s = (0..1000)
                    .map(|k| rot * Complex64::cis(0.01 * k as f64))
                    .collect();
                ComplexSignal::new(s, 1.0e6, 0.0).unwrap()
            })
            .collect();
        assert!((estimate_drift(&blocks).unwrap() - 0.6283).abs() < 1e-9);
    }
}
