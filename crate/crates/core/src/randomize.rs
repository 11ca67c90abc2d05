//! Episode-level domain randomization and the in-episode disturbance
//! processes.
//!
//! Defaults reproduce the training and evaluation columns of the reference
//! setup. "Slow" processes change with probability 1/100 per control step,
//! "fast" processes are redrawn every step.

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraExtrinsics;
use crate::dynamics::{DisturbanceSample, DroneState, DynamicsParams};
use crate::rng::{stream, SimRng, Stream};
use crate::track::Track;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

/// Sampling ranges for one column of the randomization table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ranges {
    pub camera_roll_deg: [f64; 2],
    pub camera_pitch_deg: [f64; 2],
    pub camera_yaw_deg: [f64; 2],
    /// Relative band for ω_min and ω_max.
    pub motor_bound_band: f64,
    /// Relative band for every other dynamics parameter.
    pub param_band: f64,
    pub accel_slow: [f64; 2],
    pub moment_slow: [f64; 2],
    pub moment_fast: [f64; 2],
    pub action_fast: [f64; 2],
    /// Effective gate half-extent d_g, m.
    pub gate_half_extent: f64,
    /// Pre/post tunnel thickness t_g, m.
    pub tunnel_thickness: f64,
    pub init_x_g: [f64; 2],
    pub init_y_g: [f64; 2],
    pub init_z_g: [f64; 2],
    pub init_rates: [f64; 2],
    /// Initial motor speed as a fraction of ω_max.
    pub init_motor_fraction: [f64; 2],
    /// Initial roll, pitch and gate-relative yaw, rad.
    pub init_angles: [f64; 2],
}

impl Ranges {
    pub fn train() -> Self {
        Self {
            camera_roll_deg: [-5.0, 5.0],
            camera_pitch_deg: [45.0, 55.0],
            camera_yaw_deg: [-5.0, 5.0],
            motor_bound_band: 0.2,
            param_band: 0.3,
            accel_slow: [-3.0, 3.0],
            moment_slow: [-3.0, 3.0],
            moment_fast: [-125.0, 125.0],
            action_fast: [-0.2, 0.2],
            gate_half_extent: 0.8,
            tunnel_thickness: 0.8,
            init_x_g: [-4.0, -2.0],
            init_y_g: [-1.0, 1.0],
            init_z_g: [0.0, 1.3],
            init_rates: [-0.1, 0.1],
            init_motor_fraction: [0.25, 0.5],
            init_angles: [-PI / 9.0, PI / 9.0],
        }
    }

    pub fn eval() -> Self {
        Self {
            param_band: 0.2,
            accel_slow: [-2.0, 2.0],
            moment_slow: [-2.0, 2.0],
            moment_fast: [-100.0, 100.0],
            gate_half_extent: 1.0,
            init_z_g: [0.7, 1.3],
            ..Self::train()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub train: Ranges,
    pub eval: Ranges,
    /// In train mode, share of episodes drawn from the train column and
    /// spawned in front of a random gate; the rest use the eval column at
    /// the start gate.
    pub train_any_gate_fraction: f64,
    /// Per-step change probability of the slow processes.
    pub slow_change_probability: f64,
    pub erosion_probability: f64,
    pub erosion_change_probability: f64,
    pub shutter_max: f64,
    pub randomize_params: bool,
    pub randomize_extrinsics: bool,
    pub randomize_initial_state: bool,
    pub disturbances: bool,
    pub augmentations: bool,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            train: Ranges::train(),
            eval: Ranges::eval(),
            train_any_gate_fraction: 0.7,
            slow_change_probability: 0.01,
            erosion_probability: 0.5,
            erosion_change_probability: 0.01,
            shutter_max: 0.02,
            randomize_params: true,
            randomize_extrinsics: true,
            randomize_initial_state: true,
            disturbances: true,
            augmentations: true,
        }
    }
}

impl RandomizationConfig {
    /// Nominal dynamics, fixed mid-range extrinsics, no disturbances and no
    /// mask augmentation. Initial states are still drawn.
    pub fn nominal() -> Self {
        Self {
            randomize_params: false,
            randomize_extrinsics: false,
            disturbances: false,
            augmentations: false,
            ..Self::default()
        }
    }

    pub fn ranges(&self, mode: Mode) -> &Ranges {
        match mode {
            Mode::Train => &self.train,
            Mode::Eval => &self.eval,
        }
    }
}

fn uniform(rng: &mut SimRng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

fn uniform3(rng: &mut SimRng, r: [f64; 2]) -> Vector3<f64> {
    Vector3::new(uniform(rng, r), uniform(rng, r), uniform(rng, r))
}

fn uniform4(rng: &mut SimRng, r: [f64; 2]) -> [f64; 4] {
    [uniform(rng, r), uniform(rng, r), uniform(rng, r), uniform(rng, r)]
}

fn band(rng: &mut SimRng, nominal: f64, band: f64) -> f64 {
    nominal * uniform(rng, [1.0 - band, 1.0 + band])
}

/// Scales every randomized parameter of `nominal` by an independent factor.
pub fn sample_params(nominal: &DynamicsParams, ranges: &Ranges, rng: &mut SimRng) -> DynamicsParams {
    let mut d = nominal.to_vec();
    for (i, x) in d.iter_mut().enumerate() {
        // indices 11 and 12 hold ω_min and ω_max
        let b = if i == 11 || i == 12 {
            ranges.motor_bound_band
        } else {
            ranges.param_band
        };
        *x = band(rng, *x, b);
    }
    let mut p = nominal.with_vec(&d).expect("length preserved");
    p.k = p.k.clamp(0.0, 1.0);
    p
}

/// State of the four disturbance processes.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DisturbanceState {
    pub accel_slow: Vector3<f64>,
    pub moment_slow: Vector3<f64>,
    pub moment_fast: Vector3<f64>,
    pub action_fast: [f64; 4],
}

impl DisturbanceState {
    pub fn draw(ranges: &Ranges, rng: &mut SimRng) -> Self {
        Self {
            accel_slow: uniform3(rng, ranges.accel_slow),
            moment_slow: uniform3(rng, ranges.moment_slow),
            moment_fast: uniform3(rng, ranges.moment_fast),
            action_fast: uniform4(rng, ranges.action_fast),
        }
    }

    /// Disturbance fed to the dynamics; slow and fast moments add.
    pub fn sample(&self) -> DisturbanceSample {
        DisturbanceSample {
            accel: self.accel_slow,
            moment: self.moment_slow + self.moment_fast,
            action: self.action_fast,
        }
    }
}

/// Which slow processes changed during an update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Resampled {
    pub accel_slow: bool,
    pub moment_slow: bool,
}

/// Advances the disturbance processes by one control step.
pub fn update_disturbances(
    dist: &DisturbanceState,
    ranges: &Ranges,
    slow_change_probability: f64,
    rng: &mut SimRng,
) -> (DisturbanceState, Resampled) {
    let mut next = *dist;
    let mut changed = Resampled::default();
    if rng.random_bool(slow_change_probability) {
        next.accel_slow = uniform3(rng, ranges.accel_slow);
        changed.accel_slow = true;
    }
    if rng.random_bool(slow_change_probability) {
        next.moment_slow = uniform3(rng, ranges.moment_slow);
        changed.moment_slow = true;
    }
    next.moment_fast = uniform3(rng, ranges.moment_fast);
    next.action_fast = uniform4(rng, ranges.action_fast);
    (next, changed)
}

/// Holds the erosion flag for a geometric number of steps (mean
/// `1 / change_probability`), redrawing it as a fair-ish coin.
pub fn update_erosion(active: bool, config: &RandomizationConfig, rng: &mut SimRng) -> bool {
    if rng.random_bool(config.erosion_change_probability) {
        rng.random_bool(config.erosion_probability)
    } else {
        active
    }
}

/// One realization of everything that is fixed for an episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeDraw {
    pub params: DynamicsParams,
    pub extrinsics: CameraExtrinsics,
    pub initial: DroneState,
    /// Gate the vehicle spawns in front of.
    pub start_gate: u64,
    /// Column the initial state came from.
    pub initial_column: Mode,
    pub erosion_active: bool,
    pub shutter: f64,
    pub disturbance: DisturbanceState,
}

/// Gate-relative spawn offset and attitude, before conversion to the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpawnSample {
    pub offset_g: Vector3<f64>,
    pub roll: f64,
    pub pitch: f64,
    pub yaw_g: f64,
    pub rates: Vector3<f64>,
    pub motor_fraction: [f64; 4],
}

pub fn sample_spawn(ranges: &Ranges, rng: &mut SimRng) -> SpawnSample {
    SpawnSample {
        offset_g: Vector3::new(
            uniform(rng, ranges.init_x_g),
            uniform(rng, ranges.init_y_g),
            uniform(rng, ranges.init_z_g),
        ),
        roll: uniform(rng, ranges.init_angles),
        pitch: uniform(rng, ranges.init_angles),
        yaw_g: uniform(rng, ranges.init_angles),
        rates: uniform3(rng, ranges.init_rates),
        motor_fraction: uniform4(rng, ranges.init_motor_fraction),
    }
}

/// Draws an episode. `nominal` supplies the center of every parameter band.
pub fn sample_episode(
    config: &RandomizationConfig,
    mode: Mode,
    nominal: &DynamicsParams,
    track: &Track,
    rng: &mut SimRng,
) -> EpisodeDraw {
    let ranges = config.ranges(mode);

    let params = if config.randomize_params {
        sample_params(nominal, ranges, rng)
    } else {
        *nominal
    };

    let extrinsics = if config.randomize_extrinsics {
        CameraExtrinsics::new(
            uniform(rng, ranges.camera_roll_deg).to_radians(),
            uniform(rng, ranges.camera_pitch_deg).to_radians(),
            uniform(rng, ranges.camera_yaw_deg).to_radians(),
        )
    } else {
        let mid = |r: [f64; 2]| (0.5 * (r[0] + r[1])).to_radians();
        CameraExtrinsics::new(
            mid(ranges.camera_roll_deg),
            mid(ranges.camera_pitch_deg),
            mid(ranges.camera_yaw_deg),
        )
    };

    let (initial_column, start_gate) = match mode {
        Mode::Eval => (Mode::Eval, 0),
        Mode::Train => {
            if rng.random_bool(config.train_any_gate_fraction) {
                (Mode::Train, rng.random_range(0..track.len() as u64))
            } else {
                (Mode::Eval, 0)
            }
        }
    };
    let spawn_ranges = config.ranges(initial_column);
    let spawn = if config.randomize_initial_state {
        sample_spawn(spawn_ranges, rng)
    } else {
        let mid = |r: [f64; 2]| 0.5 * (r[0] + r[1]);
        SpawnSample {
            offset_g: Vector3::new(
                mid(spawn_ranges.init_x_g),
                mid(spawn_ranges.init_y_g),
                mid(spawn_ranges.init_z_g),
            ),
            roll: 0.0,
            pitch: 0.0,
            yaw_g: 0.0,
            rates: Vector3::zeros(),
            motor_fraction: [mid(spawn_ranges.init_motor_fraction); 4],
        }
    };
    let gate = track.gate(start_gate);
    let attitude = UnitQuaternion::from_euler_angles(spawn.roll, spawn.pitch, gate.yaw + spawn.yaw_g);
    let initial = DroneState {
        position: gate.gate_to_world(&spawn.offset_g),
        attitude: *attitude.quaternion(),
        velocity: Vector3::zeros(),
        body_rates: spawn.rates,
        motor_speeds: spawn.motor_fraction.map(|f| f * params.omega_max),
    };

    let erosion_active = config.augmentations && rng.random_bool(config.erosion_probability);
    let shutter = if config.augmentations {
        uniform(rng, [0.0, config.shutter_max])
    } else {
        0.0
    };
    let disturbance = if config.disturbances {
        DisturbanceState::draw(ranges, rng)
    } else {
        DisturbanceState::default()
    };

    EpisodeDraw {
        params,
        extrinsics,
        initial,
        start_gate,
        initial_column,
        erosion_active,
        shutter,
        disturbance,
    }
}

/// Convenience wrapper drawing from the episode stream of `seed`.
pub fn sample_episode_seeded(
    config: &RandomizationConfig,
    mode: Mode,
    nominal: &DynamicsParams,
    track: &Track,
    seed: u64,
) -> EpisodeDraw {
    sample_episode(config, mode, nominal, track, &mut stream(seed, Stream::Episode))
}

/// Scripted linear decay of ω_max within an episode, used to emulate a
/// draining battery.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaMaxDecay {
    pub from: f64,
    pub to: f64,
    pub start_step: u64,
    pub end_step: u64,
}

impl OmegaMaxDecay {
    pub fn omega_max_at(&self, step: u64) -> f64 {
        if step <= self.start_step {
            self.from
        } else if step >= self.end_step {
            self.to
        } else {
            let t = (step - self.start_step) as f64 / (self.end_step - self.start_step) as f64;
            self.from + (self.to - self.from) * t
        }
    }
}
