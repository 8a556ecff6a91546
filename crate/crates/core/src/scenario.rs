//! Multi-frame attack scenarios and their Monte Carlo evaluation.
//!
//! A scenario pairs a true trajectory of the attacker relative to the victim
//! with an optional spoof trajectory. One victim frame is simulated per
//! measurement instant `k * interval`, trajectories are sampled at the frame
//! start and held for the frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacker::{attack_transmission, AttackerSettings, AttackerState};
use crate::channel::{propagate_echo, superpose, ChannelParams};
use crate::countermeasures::{
    phase_consistency_alarm, random_hops, random_phases, rssi_detect, CountermeasureConfig,
};
use crate::error::{Error, Result};
use crate::victim::{process_frame_noisy, Measurement, ReceiverSettings};
use crate::waveform::{generate_hopped_frame, RadarConfig};

/// Position, range rate and range acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub distance_m: f64,
    pub velocity_mps: f64,
    pub acceleration_mps2: f64,
}

/// A stretch of constant acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration_s: f64,
    pub acceleration_mps2: f64,
}

/// Piecewise constant-acceleration motion starting at `t = 0`. After the
/// last segment the velocity is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub initial_distance_m: f64,
    pub initial_velocity_mps: f64,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn stationary(distance_m: f64) -> Self {
        Self {
            initial_distance_m: distance_m,
            initial_velocity_mps: 0.0,
            segments: Vec::new(),
        }
    }

    pub fn constant_acceleration(distance_m: f64, acceleration_mps2: f64, duration_s: f64) -> Self {
        Self {
            initial_distance_m: distance_m,
            initial_velocity_mps: 0.0,
            segments: vec![Segment {
                duration_s,
                acceleration_mps2,
            }],
        }
    }

    pub fn state_at(&self, t: f64) -> KinematicState {
        let (mut d, mut v, mut elapsed) = (self.initial_distance_m, self.initial_velocity_mps, 0.0);
        for seg in &self.segments {
            let dt = (t - elapsed).clamp(0.0, seg.duration_s);
            if t < elapsed + seg.duration_s {
                return KinematicState {
                    distance_m: d + v * dt + 0.5 * seg.acceleration_mps2 * dt * dt,
                    velocity_mps: v + seg.acceleration_mps2 * dt,
                    acceleration_mps2: seg.acceleration_mps2,
                };
            }
            d += v * seg.duration_s + 0.5 * seg.acceleration_mps2 * seg.duration_s * seg.duration_s;
            v += seg.acceleration_mps2 * seg.duration_s;
            elapsed += seg.duration_s;
        }
        let dt = (t - elapsed).max(0.0);
        KinematicState {
            distance_m: d + v * dt,
            velocity_mps: v,
            acceleration_mps2: 0.0,
        }
    }

    /// States at `t = 0`, every segment boundary and `end_s`: velocity is
    /// piecewise linear, so its extremes lie among these.
    fn knots(&self, end_s: f64) -> Vec<KinematicState> {
        let mut times = vec![0.0];
        let mut t = 0.0;
        for seg in &self.segments {
            t += seg.duration_s;
            if t < end_s {
                times.push(t);
            }
        }
        times.push(end_s);
        times.into_iter().map(|t| self.state_at(t)).collect()
    }

    /// First time the distance reaches zero, if it does within `horizon_s`.
    pub fn time_to_reach_zero(&self, horizon_s: f64) -> Option<f64> {
        let mut t0 = 0.0;
        let mut bounds: Vec<f64> = self
            .segments
            .iter()
            .map(|s| {
                t0 += s.duration_s;
                t0
            })
            .filter(|&t| t < horizon_s)
            .collect();
        bounds.push(horizon_s);
        let mut start = 0.0;
        for end in bounds {
            let s = self.state_at(start);
            let a = s.acceleration_mps2;
            // d + v t + a t^2 / 2 = 0 on [0, end - start]
            let span = end - start;
            let roots = if a == 0.0 {
                if s.velocity_mps != 0.0 {
                    vec![-s.distance_m / s.velocity_mps]
                } else {
                    vec![]
                }
            } else {
                let disc = s.velocity_mps * s.velocity_mps - 2.0 * a * s.distance_m;
                if disc < 0.0 {
                    vec![]
                } else {
                    let r = disc.sqrt();
                    let mut v = vec![(-s.velocity_mps - r) / a, (-s.velocity_mps + r) / a];
                    v.sort_by(f64::total_cmp);
                    v
                }
            };
            if let Some(r) = roots.into_iter().find(|&r| (0.0..=span).contains(&r)) {
                return Some(start + r);
            }
            start = end;
        }
        None
    }
}

/// Channel conditions shared by every frame of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSettings {
    pub path_gain: f64,
    pub noise_power: f64,
    pub oscillator_offset_hz: f64,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        Self {
            path_gain: 0.1,
            noise_power: 1.0e-5,
            oscillator_offset_hz: 0.0,
        }
    }
}

/// Complete description of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub duration_s: f64,
    /// Spacing of measurements; also the victim's frame interval.
    pub measurement_interval_s: f64,
    pub trials: usize,
    #[serde(default)]
    pub radar: RadarConfig,
    #[serde(default)]
    pub receiver: ReceiverSettings,
    #[serde(default)]
    pub channel: ChannelSettings,
    #[serde(default)]
    pub attacker: AttackerSettings,
    #[serde(default)]
    pub countermeasure: CountermeasureConfig,
    pub true_trajectory: Trajectory,
    /// Absent for a run without attack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spoof_trajectory: Option<Trajectory>,
}

impl ScenarioSpec {
    /// The radar configuration with the frame interval tied to the
    /// measurement interval.
    pub fn effective_radar(&self) -> RadarConfig {
        RadarConfig {
            frame_interval_s: self.measurement_interval_s,
            ..self.radar
        }
    }

    /// `floor(duration / interval) + 1`.
    pub fn step_count(&self) -> usize {
        if !(self.duration_s >= 0.0 && self.measurement_interval_s > 0.0) {
            return 0;
        }
        (self.duration_s / self.measurement_interval_s + 1e-9).floor() as usize + 1
    }

    pub fn times_s(&self) -> Vec<f64> {
        (0..self.step_count())
            .map(|k| k as f64 * self.measurement_interval_s)
            .collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let radar = self.effective_radar();
        let mut out: Vec<String> = radar.violations();
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            out.push(format!("duration_s must be non-negative, got {}", self.duration_s));
        }
        if !(self.measurement_interval_s > 0.0) {
            out.push("measurement_interval_s must be positive".into());
        }
        if self.trials < 1 {
            out.push("trials must be at least 1".into());
        }
        out.extend(self.receiver.violations());
        out.extend(self.attacker.violations());
        out.extend(self.countermeasure.violations(&radar));
        let ch = self.channel;
        if !(ch.path_gain >= 0.0 && ch.path_gain.is_finite()) {
            out.push("channel.path_gain must be non-negative".into());
        }
        if !(ch.noise_power >= 0.0 && ch.noise_power.is_finite()) {
            out.push("channel.noise_power must be non-negative".into());
        }
        if !ch.oscillator_offset_hz.is_finite() {
            out.push("channel.oscillator_offset_hz must be finite".into());
        }
        if !out.is_empty() {
            return out;
        }

        let end = self.times_s().last().copied().unwrap_or(0.0);
        let vmax = radar.max_unambiguous_velocity();
        let mut check = |label: &str, traj: &Trajectory| {
            for s in traj.knots(end) {
                if s.distance_m < 0.0 {
                    out.push(format!(
                        "{label} distance becomes negative ({:.3} m) within the run",
                        s.distance_m
                    ));
                    break;
                }
            }
            if let Some(v) = traj
                .knots(end)
                .iter()
                .map(|s| s.velocity_mps)
                .find(|v| v.abs() >= vmax)
            {
                out.push(format!(
                    "{label} velocity {v:.3} m/s is not representable: |v| must stay below lambda/(4 T_c) = {vmax:.3} m/s"
                ));
            }
        };
        check("true trajectory", &self.true_trajectory);
        if let Some(spoof) = &self.spoof_trajectory {
            check("spoof trajectory", spoof);
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

fn standard_spec(name: &str, duration_s: f64, spoof: Option<Trajectory>) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        duration_s,
        measurement_interval_s: 0.25,
        trials: 15,
        radar: RadarConfig::default(),
        receiver: ReceiverSettings::default(),
        channel: ChannelSettings::default(),
        attacker: AttackerSettings::default(),
        countermeasure: CountermeasureConfig::default(),
        true_trajectory: Trajectory::stationary(60.0),
        spoof_trajectory: spoof,
    }
}

/// Spoofed deceleration of 10 m/s^2 from 60 m until the phantom reaches 0 m.
pub fn emergency_brake_spec() -> ScenarioSpec {
    let duration = 12f64.sqrt();
    standard_spec(
        "emergency_brake",
        duration,
        Some(Trajectory::constant_acceleration(60.0, -10.0, duration)),
    )
}

/// Spoofed acceleration of 10 m/s^2 away from 60 m for 3.5 s.
pub fn phantom_acceleration_spec() -> ScenarioSpec {
    standard_spec(
        "phantom_acceleration",
        3.5,
        Some(Trajectory::constant_acceleration(60.0, 10.0, 3.5)),
    )
}

/// Static target at 60 m, no attacker.
pub fn baseline_spec() -> ScenarioSpec {
    standard_spec("baseline", 3.5, None)
}

pub const BUILTIN_SCENARIOS: [&str; 3] = ["emergency_brake", "phantom_acceleration", "baseline"];

pub fn builtin_spec(name: &str) -> Option<ScenarioSpec> {
    match name {
        "emergency_brake" => Some(emergency_brake_spec()),
        "phantom_acceleration" => Some(phantom_acceleration_spec()),
        "baseline" => Some(baseline_spec()),
        _ => None,
    }
}

/// Everything recorded about one simulated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub trial: usize,
    pub step: usize,
    pub time_s: f64,
    /// `None` when the victim detected nothing (a dropout).
    pub measurement: Option<Measurement>,
    pub dropout_reason: Option<String>,
    /// Why the attacker sat this frame out, if it did.
    pub attack_error: Option<String>,
    pub phase_alarm: Option<bool>,
    pub rssi_flag: Option<bool>,
    pub rssi_score_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub seed: u64,
    pub times_s: Vec<f64>,
    pub truth_range_m: Vec<f64>,
    pub truth_velocity_mps: Vec<f64>,
    pub spoof_range_m: Option<Vec<f64>>,
    pub spoof_velocity_mps: Option<Vec<f64>>,
    /// `trials[trial][step]`.
    pub trials: Vec<Vec<FrameRecord>>,
    pub mean_range_m: Vec<f64>,
    pub std_range_m: Vec<f64>,
    pub mean_velocity_mps: Vec<f64>,
    pub std_velocity_mps: Vec<f64>,
    pub dropout_count: Vec<usize>,
}

impl ScenarioResult {
    pub fn dropout_total(&self) -> usize {
        self.dropout_count.iter().sum()
    }

    pub fn frame_count(&self) -> usize {
        self.trials.iter().map(Vec::len).sum()
    }
}

/// Mean and sample standard deviation; NaN mean for no samples, zero
/// deviation for fewer than two.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Random stream of one trial: the top-level seed picks the key, the trial
/// index the stream.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn run_trial(spec: &ScenarioSpec, seed: u64, trial: usize) -> Result<Vec<FrameRecord>> {
    let radar = spec.effective_radar();
    let cm = &spec.countermeasure;
    let n = radar.chirps_per_frame;
    let mut rng = trial_rng(seed, trial);
    let mut attacker = AttackerState::new(spec.attacker);
    let rssi_cfg = CountermeasureConfig {
        rssi_prefix_length: Some(cm.prefix_length(&radar)),
        ..cm.clone()
    };

    // Without randomization every frame is the same waveform, so the buffer
    // is generated once and re-stamped.
    let mut reusable_tx = None;
    let mut records = Vec::with_capacity(spec.step_count());
    for (step, t) in spec.times_s().into_iter().enumerate() {
        let truth = spec.true_trajectory.state_at(t);
        // Receiver noise is injected by the victim after the dechirp; the
        // attacker's own receiver still sees noise on the forward leg.
        let channel = ChannelParams {
            distance_m: truth.distance_m,
            relative_velocity_mps: truth.velocity_mps,
            path_gain: spec.channel.path_gain,
            noise_power: spec.channel.noise_power,
            oscillator_offset_hz: spec.channel.oscillator_offset_hz,
            epoch_s: t,
        };
        let quiet = ChannelParams {
            noise_power: 0.0,
            ..channel
        };
        let randomized = cm.mode.randomizes_phase() || cm.mode.hops();
        let phases = if cm.mode.randomizes_phase() {
            random_phases(n, cm.phase_pool_size, &mut rng)
        } else {
            vec![0.0; n]
        };
        let hops = cm.mode.hops().then(|| random_hops(n, &cm.hop_pool_hz, &mut rng));
        let tx = match reusable_tx.take() {
            Some(tx) => tx,
            None => generate_hopped_frame(&radar, &phases, hops.as_deref())?,
        }
        .with_start_time(t);

        let mut attack_error = None;
        let echo = propagate_echo(&tx, &quiet, &radar, &mut rng)?;
        let rx = match &spec.spoof_trajectory {
            Some(spoof) => {
                let target = spoof.state_at(t);
                let attempt = attacker
                    .set_target(target.distance_m, target.velocity_mps, &radar)
                    .and_then(|_| attack_transmission(&tx, &attacker, &channel, &radar, &mut rng));
                match attempt {
                    Ok((arriving, state)) => {
                        attacker = state;
                        superpose(echo, &arriving)?
                    }
                    Err(e) => {
                        attack_error = Some(e.to_string());
                        echo
                    }
                }
            }
            None => echo,
        };

        let mut record = FrameRecord {
            trial,
            step,
            time_s: t,
            measurement: None,
            dropout_reason: None,
            attack_error,
            phase_alarm: None,
            rssi_flag: None,
            rssi_score_db: None,
        };
        let outcome = process_frame_noisy(
            &tx,
            &rx,
            &radar,
            &spec.receiver,
            hops.as_deref(),
            spec.channel.noise_power,
            &mut rng,
        );
        drop(rx);
        if !randomized {
            reusable_tx = Some(tx);
        }
        match outcome {
            Ok(m) => {
                if cm.mode.randomizes_phase() {
                    record.phase_alarm = Some(phase_consistency_alarm(&m).flagged);
                }
                if cm.mode.checks_rssi() {
                    let v = rssi_detect(&m, &rssi_cfg);
                    record.rssi_flag = Some(v.flagged);
                    record.rssi_score_db = Some(v.score);
                }
                record.measurement = Some(m);
            }
            Err(Error::NoDetection(msg)) => record.dropout_reason = Some(msg),
            Err(e) => return Err(e),
        }
        records.push(record);
    }
    Ok(records)
}

/// Runs every trial of `spec` and aggregates the per-instant statistics.
///
/// Trials run in parallel; each draws from its own stream of the seeded
/// generator, so the result depends only on `(spec, seed)`.
pub fn run_scenario(spec: &ScenarioSpec, seed: u64) -> Result<ScenarioResult> {
    spec.validate()?;
    let trials = (0..spec.trials)
        .into_par_iter()
        .map(|trial| run_trial(spec, seed, trial))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(spec, seed, trials))
}

/// Builds a result from per-trial records, recomputing truth, targets and
/// statistics.
pub fn aggregate(spec: &ScenarioSpec, seed: u64, trials: Vec<Vec<FrameRecord>>) -> ScenarioResult {
    let times = spec.times_s();
    let truth: Vec<KinematicState> = times.iter().map(|&t| spec.true_trajectory.state_at(t)).collect();
    let spoof: Option<Vec<KinematicState>> = spec
        .spoof_trajectory
        .as_ref()
        .map(|s| times.iter().map(|&t| s.state_at(t)).collect());

    let steps = times.len();
    let mut stats = (
        Vec::with_capacity(steps),
        Vec::with_capacity(steps),
        Vec::with_capacity(steps),
        Vec::with_capacity(steps),
        Vec::with_capacity(steps),
    );
    for k in 0..steps {
        let ms: Vec<&Measurement> = trials
            .iter()
            .filter_map(|t| t.get(k).and_then(|r| r.measurement.as_ref()))
            .collect();
        let ranges: Vec<f64> = ms.iter().map(|m| m.range_m).collect();
        let vels: Vec<f64> = ms.iter().map(|m| m.velocity_mps).collect();
        let (mr, sr) = mean_std(&ranges);
        let (mv, sv) = mean_std(&vels);
        stats.0.push(mr);
        stats.1.push(sr);
        stats.2.push(mv);
        stats.3.push(sv);
        stats.4.push(trials.len() - ms.len());
    }

    ScenarioResult {
        name: spec.name.clone(),
        seed,
        truth_range_m: truth.iter().map(|s| s.distance_m).collect(),
        truth_velocity_mps: truth.iter().map(|s| s.velocity_mps).collect(),
        spoof_range_m: spoof.as_ref().map(|v| v.iter().map(|s| s.distance_m).collect()),
        spoof_velocity_mps: spoof.as_ref().map(|v| v.iter().map(|s| s.velocity_mps).collect()),
        times_s: times,
        trials,
        mean_range_m: stats.0,
        std_range_m: stats.1,
        mean_velocity_mps: stats.2,
        std_velocity_mps: stats.3,
        dropout_count: stats.4,
    }
}
