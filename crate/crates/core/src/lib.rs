//! Deterministic, batched quadcopter drone-racing environment.
//!
//! The simulator models a racing quadcopter driven directly by normalized
//! motor commands, a track of upright square gates, and a forward camera,
//! tilted upward, whose view is rendered as a 64×64 binary gate mask. An
//! episode exposes two views of the world:
//!
//! - [`env::Observation`]: what the vehicle can sense (mask, measured body
//!   rates and motor speeds, flight-plan vector)
//! - [`env::PrivilegedObservation`]: ground truth for training-time use
//!
//! Everything is seeded from a single `u64` per episode, so a seed and an
//! action sequence fully determine the replay byte stream.
//!
//! ```
//! use gaterace::env::{Env, EnvConfig};
//! use gaterace::dynamics::Action;
//!
//! let mut env = Env::new(EnvConfig::default()).unwrap();
//! let (_obs, _priv) = env.reset(7);
//! let step = env.step(Action::uniform(0.5)).unwrap();
//! assert_eq!(step.obs.mask.width(), 64);
//! ```

pub mod batch;
pub mod camera;
pub mod dynamics;
pub mod env;
pub mod flat;
pub mod flightplan;
pub mod randomize;
pub mod replay;
pub mod reward;
pub mod rng;
pub mod track;

pub use dynamics::{Action, DisturbanceSample, DroneState, DynamicsParams};
pub use env::{Env, EnvConfig, EnvError, StepResult};
pub use track::{GateSpec, Track};
