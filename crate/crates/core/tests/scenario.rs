//! Scenario engine: trajectories, built-ins and seeded runs.

mod common;

use common::*;
use fmcw_spoof::scenario::{
    baseline_spec, builtin_spec, emergency_brake_spec, phantom_acceleration_spec, run_scenario,
    Segment, Trajectory, BUILTIN_SCENARIOS,
};
use proptest::prelude::*;

/// A few cheap frames of a phantom pulling away from a car 60 m ahead.
fn small_attack(chirps: usize, trials: usize) -> fmcw_spoof::scenario::ScenarioSpec {
    let mut spec = phantom_acceleration_spec();
    spec.name = "small".into();
    spec.radar = short_config(chirps);
    spec.duration_s = 0.5;
    spec.trials = trials;
    spec.spoof_trajectory = Some(Trajectory {
        initial_distance_m: 90.0,
        initial_velocity_mps: 20.0,
        segments: vec![Segment {
            duration_s: 0.5,
            acceleration_mps2: 8.0,
        }],
    });
    spec
}

#[test]
fn built_in_timelines() {
    let brake = emergency_brake_spec();
    assert_eq!(brake.step_count(), 14);
    let phantom = phantom_acceleration_spec();
    assert_eq!(phantom.step_count(), 15);
    assert_eq!(phantom.times_s().last().copied(), Some(3.5));
    let spoof = phantom.spoof_trajectory.unwrap();
    assert!((spoof.state_at(3.5).distance_m - (60.0 + 5.0 * 3.5 * 3.5)).abs() < 1e-9);
    assert!((spoof.state_at(3.5).velocity_mps - 35.0).abs() < 1e-9);
    assert!(baseline_spec().spoof_trajectory.is_none());
    for name in BUILTIN_SCENARIOS {
        let spec = builtin_spec(name).unwrap();
        assert_eq!(spec.name, name);
        assert!(spec.violations().is_empty(), "{name}");
    }
    assert!(builtin_spec("nosuch").is_none());
}

#[test]
fn phantom_reaches_the_bumper_after_three_and_a_half_seconds() {
    let spoof = emergency_brake_spec().spoof_trajectory.unwrap();
    let t = spoof.time_to_reach_zero(10.0).unwrap();
    // 60 - 5 t^2 = 0
    assert!((t - (60.0f64 / 5.0).sqrt()).abs() < 1e-9);
    assert!((t - 3.46).abs() < 0.005);
}

#[test]
fn runs_are_reproducible_and_trials_independent() {
    let spec = small_attack(16, 3);
    let a = run_scenario(&spec, 11).unwrap();
    let b = run_scenario(&spec, 11).unwrap();
    assert_eq!(a, b);
    let c = run_scenario(&spec, 12).unwrap();
    assert_ne!(a.mean_range_m, c.mean_range_m);
    // Each trial has its own stream: adding trials does not disturb earlier ones.
    let mut more = spec.clone();
    more.trials = 4;
    let d = run_scenario(&more, 11).unwrap();
    assert_eq!(a.trials[..], d.trials[..3]);
}

#[test]
fn attacked_run_follows_the_phantom() {
    let spec = small_attack(128, 2);
    let r = run_scenario(&spec, 5).unwrap();
    assert_eq!(r.dropout_total(), 0);
    assert_eq!(r.frame_count(), 6);
    let target_r = r.spoof_range_m.as_ref().unwrap();
    let target_v = r.spoof_velocity_mps.as_ref().unwrap();
    for k in 0..r.times_s.len() {
        assert!((r.mean_range_m[k] - target_r[k]).abs() <= range_bin(28.0e6));
        assert!((r.mean_velocity_mps[k] - target_v[k]).abs() <= 0.05);
        assert_eq!(r.truth_range_m[k], 60.0);
    }
    for rec in r.trials.iter().flatten() {
        assert!(rec.attack_error.is_none());
        assert!(rec.phase_alarm.is_none() && rec.rssi_flag.is_none());
    }
}

#[test]
fn baseline_measures_the_real_car() {
    let mut spec = baseline_spec();
    spec.radar = short_config(16);
    spec.duration_s = 0.5;
    spec.trials = 2;
    let r = run_scenario(&spec, 0).unwrap();
    assert!(r.spoof_range_m.is_none());
    for k in 0..r.times_s.len() {
        assert!((r.mean_range_m[k] - 60.0).abs() < 0.1);
        assert!(r.mean_velocity_mps[k].abs() < 0.05);
    }
}

#[test]
fn unrepresentable_or_colliding_scenarios_are_rejected() {
    let mut spec = emergency_brake_spec();
    spec.duration_s = 4.0;
    assert!(spec.violations().iter().any(|v| v.contains("negative")));
    let mut spec = emergency_brake_spec();
    spec.radar.chirp_duration_s = 3.0e-3;
    spec.radar.chirps_per_frame = 64;
    // lambda / (4 T_c) = 25 m/s, below the 34.6 m/s the phantom reaches.
    assert!(v_max(1e9, 3e-3) < 33.3);
    assert!(spec.violations().iter().any(|v| v.contains("not representable")));
    let mut spec = baseline_spec();
    spec.radar.sync_chirps = spec.radar.chirps_per_frame;
    assert!(spec.violations().iter().any(|v| v.contains("0 < n < N")));
    assert!(run_scenario(&spec, 0).is_err());
}

proptest! {
    /// Piecewise constant acceleration integrates like the textbook
    /// formulas, and position and velocity are continuous at the joints.
    #[test]
    fn trajectory_kinematics(
        d0 in 0.0f64..200.0,
        v0 in -30.0f64..30.0,
        segs in prop::collection::vec((0.1f64..2.0, -10.0f64..10.0), 0..4),
        t in 0.0f64..8.0,
    ) {
        let traj = Trajectory {
            initial_distance_m: d0,
            initial_velocity_mps: v0,
            segments: segs.iter().map(|&(duration_s, acceleration_mps2)| Segment { duration_s, acceleration_mps2 }).collect(),
        };
        // Oracle: step through the segments in closed form.
        let (mut d, mut v, mut left) = (d0, v0, t);
        for &(dur, a) in &segs {
            let dt = left.min(dur);
            d += v * dt + 0.5 * a * dt * dt;
            v += a * dt;
            left -= dt;
        }
        d += v * left;
        let s = traj.state_at(t);
        prop_assert!((s.distance_m - d).abs() < 1e-9 * (1.0 + d.abs()));
        prop_assert!((s.velocity_mps - v).abs() < 1e-9 * (1.0 + v.abs()));

        let h = 1e-7;
        let (a, b) = (traj.state_at(t), traj.state_at(t + h));
        prop_assert!((b.distance_m - a.distance_m).abs() < 1e-4);
        prop_assert!((b.velocity_mps - a.velocity_mps).abs() < 1e-4);
    }
}
