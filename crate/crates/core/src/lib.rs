//! Discrete-time complex-baseband simulation of FMCW radar spoofing.
//!
//! The crate models a fast-chirp victim radar, the propagation path between
//! the victim and an adversarial radar, an attacker that spoofs range through
//! delay control and velocity through per-chirp phase control, a set of
//! countermeasures, and a scenario engine that replays multi-frame attacks
//! over seeded Monte Carlo trials.
//!
//! ```no_run
//! use fmcw_spoof::scenario::{emergency_brake_spec, run_scenario};
//!
//! let result = run_scenario(&emergency_brake_spec(), 7).unwrap();
//! for (t, r) in result.times_s.iter().zip(&result.mean_range_m) {
//!     println!("{t:.2} s  {r:.2} m");
//! }
//! ```

pub mod attacker;
mod buffer;
pub mod channel;
pub mod cli;
pub mod countermeasures;
pub mod dsp;
pub mod error;
pub mod scenario;
pub mod signal;
pub mod victim;
pub mod waveform;

pub use error::{Error, Result};
pub use signal::ComplexSignal;
pub use waveform::RadarConfig;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
