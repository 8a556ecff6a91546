//! Shared oracles for the integration tests. Everything here is computed
//! from first principles so the crate's own helpers are not used to check
//! themselves.
#![allow(dead_code)]

use std::f64::consts::PI;

use fmcw_spoof::attacker::{run_attack_frame, AttackerSettings, AttackerState};
use fmcw_spoof::channel::{propagate_echo, ChannelParams};
use fmcw_spoof::victim::{process_frame, Measurement};
use fmcw_spoof::waveform::{generate_frame, RadarConfig};
use fmcw_spoof::ComplexSignal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const C: f64 = 299_792_458.0;

/// Start of the frame used by the single-frame tests.
pub const T0: f64 = 0.5;

pub fn range_bin(bandwidth_hz: f64) -> f64 {
    C / (2.0 * bandwidth_hz)
}

pub fn v_max(carrier_hz: f64, chirp_s: f64) -> f64 {
    C / carrier_hz / (4.0 * chirp_s)
}

pub fn phase_step(v: f64, carrier_hz: f64, chirp_s: f64) -> f64 {
    4.0 * PI * v * chirp_s * carrier_hz / C
}

pub fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Same waveform, shorter frame: keeps single-frame properties cheap.
pub fn short_config(chirps: usize) -> RadarConfig {
    RadarConfig {
        chirps_per_frame: chirps,
        ..RadarConfig::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn plain_frame(cfg: &RadarConfig) -> ComplexSignal {
    generate_frame(cfg, &vec![0.0; cfg.chirps_per_frame])
        .unwrap()
        .with_start_time(T0)
}

/// Noiseless echo of a target at `d` (measured at the centre of the frame)
/// moving at `v`.
pub fn echo_params(cfg: &RadarConfig, d: f64, v: f64) -> ChannelParams {
    ChannelParams {
        distance_m: d,
        relative_velocity_mps: v,
        path_gain: 0.1,
        noise_power: 0.0,
        oscillator_offset_hz: 0.0,
        epoch_s: T0 + cfg.chirps_per_frame as f64 * cfg.chirp_duration_s / 2.0,
    }
}

pub fn echo_measurement(cfg: &RadarConfig, d: f64, v: f64) -> Measurement {
    let tx = plain_frame(cfg);
    let rx = propagate_echo(&tx, &echo_params(cfg, d, v), cfg, &mut rng(1)).unwrap();
    process_frame(&tx, &rx, cfg).unwrap()
}

/// One attacked frame: truth at 60 m standing still, phantom at `(dh, vh)`.
pub fn spoof_measurement(
    cfg: &RadarConfig,
    dh: f64,
    vh: f64,
    offset_hz: f64,
    noise_power: f64,
    seed: u64,
) -> (Measurement, AttackerState) {
    let tx = plain_frame(cfg);
    let channel = ChannelParams {
        distance_m: 60.0,
        relative_velocity_mps: 0.0,
        path_gain: 0.1,
        noise_power,
        oscillator_offset_hz: offset_hz,
        epoch_s: T0,
    };
    let mut state = AttackerState::new(AttackerSettings::default());
    state.set_target(dh, vh, cfg).unwrap();
    let (rx, state) = run_attack_frame(&tx, &state, &channel, cfg, &mut rng(seed)).unwrap();
    (process_frame(&tx, &rx, cfg).unwrap(), state)
}
