//! Episode orchestration: delays, observation assembly, privileged
//! information, reward and termination.
//!
//! One control step at `control_hz` runs `substeps` RK4 steps with the
//! delayed action held constant. The mask in the observation is rendered
//! from the pose `image_delay_steps` control steps in the past.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{
    body_rates_to_camera, erode_mask, render_mask, rolling_shutter_warp, CameraExtrinsics, CameraIntrinsics, MaskImage,
};
use crate::dynamics::{
    command_for_speed, hover_motor_speeds, motor_targets, rk4_step_with_targets, Action, DroneState, DynamicsParams,
};
use crate::flightplan::{tunnel_progress, FlightPlan, FlightPlanState, IndexRule, PlanIndexing};
use crate::randomize::{
    sample_episode, update_disturbances, update_erosion, DisturbanceState, EpisodeDraw, Mode, OmegaMaxDecay,
    RandomizationConfig,
};
use crate::replay::{ReplayHeader, ReplayRecord};
use crate::reward::{step_reward, GateProgress, RewardBreakdown, Termination};
use crate::rng::{stream, SimRng, Stream};
use crate::track::{wrap_angle, GateCrossing, Track, TrackError, DEFAULT_TRACK};

/// Weight of the action-smoothness regularizer.
pub const SMOOTHNESS_WEIGHT: f64 = 0.002;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("step called on a finished episode; call reset first")]
    Finished,
    #[error("step called before reset")]
    NotReset,
    #[error("non-finite action component {index}: {value}")]
    NonFiniteAction { index: usize, value: f64 },
    #[error("batch size mismatch: {envs} environments, {actions} actions")]
    BatchSize { envs: usize, actions: usize },
}

/// Additive zero-mean uniform noise on the measured rates and motor speeds.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorNoise {
    /// Half-width on each body rate, rad/s.
    pub rates: f64,
    /// Half-width on each motor speed, rad/s.
    pub motor_speeds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub control_hz: f64,
    pub substeps: u32,
    /// Carried for consumers; the environment never discounts.
    pub discount: f64,
    pub image_delay_steps: usize,
    pub action_delay_steps: usize,
    pub mode: Mode,
    /// Emit privileged observations.
    pub informed: bool,
    pub image_width: usize,
    pub image_height: usize,
    pub max_steps: u64,
    /// Track file; the built-in circuit when absent.
    pub track: Option<PathBuf>,
    pub seed: u64,
    /// Skip mask rendering (observations carry an empty mask).
    pub render: bool,
    pub flight_plan_indexing: PlanIndexing,
    /// Defaults to the train rule in train mode and the deploy rule in eval.
    pub flight_plan_rule: Option<IndexRule>,
    pub dynamics: DynamicsParams,
    pub randomization: RandomizationConfig,
    pub sensor_noise: SensorNoise,
    pub omega_max_decay: Option<OmegaMaxDecay>,
    /// Keep a replay record of every reset and step; see [`Env::take_log`].
    pub logging: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            control_hz: 90.0,
            substeps: 5,
            discount: 0.997,
            image_delay_steps: 3,
            action_delay_steps: 1,
            mode: Mode::Train,
            informed: true,
            image_width: 64,
            image_height: 64,
            max_steps: 2000,
            track: None,
            seed: 0,
            render: true,
            flight_plan_indexing: PlanIndexing::Formula,
            flight_plan_rule: None,
            dynamics: DynamicsParams::nominal(),
            randomization: RandomizationConfig::default(),
            sensor_noise: SensorNoise::default(),
            omega_max_decay: None,
            logging: false,
        }
    }
}

impl EnvConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, EnvError> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            EnvError::Config(format!("line {line}: {}", e.message()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Config(format!("failed to read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if !(self.control_hz > 0.0) {
            return bad(format!("control_hz must be positive, got {}", self.control_hz));
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1".into());
        }
        let side = 1..=u16::MAX as usize;
        if !side.contains(&self.image_width) || !side.contains(&self.image_height) {
            return bad(format!(
                "image size must lie in 1..=65535, got {}x{}",
                self.image_width, self.image_height
            ));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        self.dynamics.validate().map_err(EnvError::Config)?;
        let r = &self.randomization;
        for (name, p) in [
            ("train_any_gate_fraction", r.train_any_gate_fraction),
            ("slow_change_probability", r.slow_change_probability),
            ("erosion_probability", r.erosion_probability),
            ("erosion_change_probability", r.erosion_change_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("randomization.{name} must lie in [0, 1], got {p}"));
            }
        }
        if let Some(d) = &self.omega_max_decay {
            if d.end_step < d.start_step || !(d.to > self.dynamics.omega_min) {
                return bad("omega_max_decay must end after it starts and stay above omega_min".into());
            }
        }
        Ok(())
    }

    pub fn plan_rule(&self) -> IndexRule {
        self.flight_plan_rule.unwrap_or(match self.mode {
            Mode::Train => IndexRule::Train,
            Mode::Eval => IndexRule::Deploy,
        })
    }

    /// Loads the configured track, filling unspecified gate sizes and tunnel
    /// thickness from the mode's randomization column.
    pub fn load_track(&self) -> Result<Track, EnvError> {
        let ranges = self.randomization.ranges(self.mode);
        let (d_g, t_g) = (ranges.gate_half_extent, ranges.tunnel_thickness);
        Ok(match &self.track {
            Some(path) => Track::load(path, d_g, t_g)?,
            None => Track::from_toml_str(DEFAULT_TRACK, d_g, t_g)?,
        })
    }
}

/// What the vehicle can sense.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub mask: MaskImage,
    /// Measured body rates, rad/s.
    pub rates: [f64; 3],
    /// Measured motor speeds, rad/s.
    pub motor_speeds: [f64; 4],
    pub flight_plan: FlightPlan,
}

/// Ground truth exposed only by informed environments.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivilegedObservation {
    pub position_w: [f64; 3],
    /// Position in the frame of the current target gate.
    pub position_g: [f64; 3],
    pub velocity_w: [f64; 3],
    pub velocity_g: [f64; 3],
    /// Roll, pitch, world yaw, gate-relative yaw.
    pub attitude: [f64; 4],
    pub rates: [f64; 3],
    pub motor_speeds: [f64; 4],
    pub extrinsics: [f64; 3],
    pub params: Vec<f64>,
}

impl PrivilegedObservation {
    pub const LEN: usize = 3 + 3 + 3 + 3 + 4 + 3 + 4 + 3 + DynamicsParams::LEN;

    /// Flat vector in field order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::LEN);
        v.extend_from_slice(&self.position_w);
        v.extend_from_slice(&self.position_g);
        v.extend_from_slice(&self.velocity_w);
        v.extend_from_slice(&self.velocity_g);
        v.extend_from_slice(&self.attitude);
        v.extend_from_slice(&self.rates);
        v.extend_from_slice(&self.motor_speeds);
        v.extend_from_slice(&self.extrinsics);
        v.extend_from_slice(&self.params);
        v
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != Self::LEN {
            return None;
        }
        let a3 = |o: usize| [v[o], v[o + 1], v[o + 2]];
        let a4 = |o: usize| [v[o], v[o + 1], v[o + 2], v[o + 3]];
        Some(Self {
            position_w: a3(0),
            position_g: a3(3),
            velocity_w: a3(6),
            velocity_g: a3(9),
            attitude: a4(12),
            rates: a3(16),
            motor_speeds: a4(19),
            extrinsics: a3(23),
            params: v[26..].to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct StepInfo {
    /// Number of completed control steps in the episode.
    pub step: u64,
    pub crossings: Vec<GateCrossing>,
    /// Unwrapped index of the gate targeted by the reward.
    pub target_gate: u64,
    pub laps: u64,
    pub plan_index: u64,
    pub plan_changed: bool,
    pub speed: f64,
    /// Rotor thrust per unit mass `k_w·Σω²` at the end of the step, m/s².
    /// Excludes drag and inflow corrections.
    pub specific_thrust: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub privileged: Option<PrivilegedObservation>,
    pub reward: RewardBreakdown,
    pub termination: Termination,
    /// Episode hit `max_steps` without terminating.
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.truncated || self.termination.is_terminal()
    }
}

/// Pose and rates a mask is rendered from.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Frame {
    position: Vector3<f64>,
    attitude: UnitQuaternion<f64>,
    rates: Vector3<f64>,
}

impl Frame {
    fn of(state: &DroneState) -> Self {
        Self {
            position: state.position,
            attitude: state.unit_attitude(),
            rates: state.body_rates,
        }
    }
}

#[derive(Clone, Debug)]
struct Episode {
    draw: EpisodeDraw,
    params: DynamicsParams,
    state: DroneState,
    disturbance: DisturbanceState,
    erosion: bool,
    disturbance_rng: SimRng,
    erosion_rng: SimRng,
    plan_rng: SimRng,
    sensor_rng: SimRng,
    actions: VecDeque<Action>,
    frames: VecDeque<Frame>,
    progress: GateProgress,
    plan: FlightPlanState,
    step: u64,
    done: bool,
}

/// A single environment instance. Not shared between threads while
/// stepping; move it to the worker that drives it.
#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    track: Arc<Track>,
    intrinsics: CameraIntrinsics,
    episode: Option<Episode>,
    log: Vec<ReplayRecord>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        let track = Arc::new(config.load_track()?);
        Self::with_track(config, track)
    }

    pub fn with_track(config: EnvConfig, track: Arc<Track>) -> Result<Self, EnvError> {
        config.validate()?;
        let intrinsics = CameraIntrinsics::nominal(config.image_width, config.image_height);
        Ok(Self {
            config,
            track,
            intrinsics,
            episode: None,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn track(&self) -> &Arc<Track> {
        &self.track
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    /// Ground-truth state of the running episode.
    pub fn state(&self) -> Option<&DroneState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn draw(&self) -> Option<&EpisodeDraw> {
        self.episode.as_ref().map(|e| &e.draw)
    }

    pub fn params(&self) -> Option<&DynamicsParams> {
        self.episode.as_ref().map(|e| &e.params)
    }

    pub fn extrinsics(&self) -> Option<&CameraExtrinsics> {
        self.episode.as_ref().map(|e| &e.draw.extrinsics)
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.config.control_hz
    }

    pub fn reset(&mut self, seed: u64) -> (Observation, Option<PrivilegedObservation>) {
        self.reset_with(seed, |_| None)
    }

    /// Resets and replaces the drawn initial state with a level, stationary
    /// hover trim at the drawn spawn position.
    pub fn reset_hover(&mut self, seed: u64) -> (Observation, Option<PrivilegedObservation>) {
        self.reset_with(seed, |draw| {
            let trim = hover_motor_speeds(&draw.params)?;
            let mut s = DroneState::at_rest(draw.initial.position, trim);
            let yaw = draw.initial.euler().2;
            s.attitude = *UnitQuaternion::from_euler_angles(0.0, 0.0, yaw).quaternion();
            Some(s)
        })
    }

    /// Resets, optionally overriding the drawn initial state. The override
    /// sees the episode draw and returns `None` to keep it.
    pub fn reset_with(
        &mut self,
        seed: u64,
        initial: impl FnOnce(&EpisodeDraw) -> Option<DroneState>,
    ) -> (Observation, Option<PrivilegedObservation>) {
        let cfg = &self.config;
        let mut draw = sample_episode(
            &cfg.randomization,
            cfg.mode,
            &cfg.dynamics,
            &self.track,
            &mut stream(seed, Stream::Episode),
        );
        if let Some(state) = initial(&draw) {
            draw.initial = state;
        }
        let mut params = draw.params;
        if let Some(decay) = &cfg.omega_max_decay {
            params.omega_max = decay.omega_max_at(0);
        }

        let state = draw.initial;
        let hold = Action::new(state.motor_speeds.map(|w| command_for_speed(w, &params)));
        let episode = Episode {
            draw,
            params,
            state,
            disturbance: draw.disturbance,
            erosion: draw.erosion_active,
            disturbance_rng: stream(seed, Stream::Disturbance),
            erosion_rng: stream(seed, Stream::Erosion),
            plan_rng: stream(seed, Stream::FlightPlan),
            sensor_rng: stream(seed, Stream::Sensor),
            actions: std::iter::repeat_n(hold, cfg.action_delay_steps).collect(),
            frames: std::iter::repeat_n(Frame::of(&state), cfg.image_delay_steps + 1).collect(),
            progress: GateProgress::new(draw.start_gate),
            plan: FlightPlanState::new(&self.track, draw.start_gate, cfg.flight_plan_indexing),
            step: 0,
            done: false,
        };
        self.episode = Some(episode);
        let obs = self.observe();
        let privileged = self.privileged();
        if self.config.logging {
            self.log.push(ReplayRecord::reset(obs.clone(), privileged.clone()));
        }
        (obs, privileged)
    }

    /// Header describing this environment's replay records.
    pub fn replay_header(&self, seed: u64) -> ReplayHeader {
        ReplayHeader {
            width: self.config.image_width as u16,
            height: self.config.image_height as u16,
            informed: self.config.informed,
            seed,
        }
    }

    /// Records logged since the last call, in order. Empty unless
    /// `logging` is enabled.
    pub fn take_log(&mut self) -> Vec<ReplayRecord> {
        std::mem::take(&mut self.log)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        for (index, &value) in action.0.iter().enumerate() {
            if !value.is_finite() {
                return Err(EnvError::NonFiniteAction { index, value });
            }
        }
        let action = Action::new(action.0);
        let cfg = &self.config;
        let track = &*self.track;
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::Finished);
        }

        ep.actions.push_back(action);
        let applied = ep.actions.pop_front().expect("queue holds the new action");

        if let Some(decay) = &cfg.omega_max_decay {
            ep.params.omega_max = decay.omega_max_at(ep.step + 1);
        }

        let dist = ep.disturbance.sample();
        let omega_c = motor_targets(&applied, &dist.action, &ep.params);
        let dt = 1.0 / (cfg.control_hz * cfg.substeps as f64);
        let prev = ep.state;
        for _ in 0..cfg.substeps {
            ep.state = rk4_step_with_targets(&ep.state, &omega_c, &dist, &ep.params, dt);
        }

        let ranges = cfg.randomization.ranges(cfg.mode);
        if cfg.randomization.disturbances {
            ep.disturbance = update_disturbances(
                &ep.disturbance,
                ranges,
                cfg.randomization.slow_change_probability,
                &mut ep.disturbance_rng,
            )
            .0;
        }
        if cfg.randomization.augmentations {
            ep.erosion = update_erosion(ep.erosion, &cfg.randomization, &mut ep.erosion_rng);
        }

        let outcome = ep.progress.advance(track, &prev.position, &ep.state.position);
        let half_extent = track.gate(outcome.target).half_extent;
        let (reward, termination) = step_reward(
            outcome.progress,
            &ep.state.body_rates,
            cfg.control_hz,
            &outcome.crossings,
            half_extent,
            &ep.state,
        );

        ep.frames.push_back(Frame::of(&ep.state));
        ep.frames.pop_front();

        let plan_index = ep.plan.index();
        let x_g = track.gate(plan_index).world_to_gate(&ep.state.position).x;
        let tunnel = tunnel_progress(track, plan_index, &ep.progress, &outcome.crossings, &ep.state.position);
        let plan_changed = ep.plan.update(track, x_g, tunnel, cfg.plan_rule(), &mut ep.plan_rng);

        ep.step += 1;
        let terminated = termination.is_terminal();
        let truncated = !terminated && ep.step >= cfg.max_steps;
        ep.done = terminated || truncated;

        let info = StepInfo {
            step: ep.step,
            crossings: outcome.crossings,
            target_gate: ep.progress.target(),
            laps: ep.progress.target() / track.len() as u64,
            plan_index: ep.plan.index(),
            plan_changed,
            speed: ep.state.velocity.norm(),
            specific_thrust: ep.params.k_w * ep.state.motor_speeds.iter().map(|w| w * w).sum::<f64>(),
        };

        let result = StepResult {
            obs: self.observe(),
            privileged: self.privileged(),
            reward,
            termination,
            truncated,
            info,
        };
        if self.config.logging {
            self.log.push(ReplayRecord::step(action, &result));
        }
        Ok(result)
    }

    fn observe(&mut self) -> Observation {
        let cfg = &self.config;
        let ep = self.episode.as_mut().expect("episode running");
        let frame = ep.frames[0];

        let mask = if cfg.render {
            let ext = &ep.draw.extrinsics;
            let mut mask = render_mask(&frame.position, &frame.attitude, ext, &self.intrinsics, &self.track);
            if cfg.randomization.augmentations {
                if ep.erosion {
                    mask = erode_mask(&mask);
                }
                if ep.draw.shutter > 0.0 {
                    let cam = body_rates_to_camera(&frame.rates, ext);
                    mask = rolling_shutter_warp(&mask, ep.draw.shutter, cam.y, cam.z);
                }
            }
            mask
        } else {
            MaskImage::zeros(cfg.image_width, cfg.image_height)
        };

        let noise = cfg.sensor_noise;
        let mut rates: [f64; 3] = ep.state.body_rates.into();
        let mut motor_speeds = ep.state.motor_speeds;
        if noise.rates > 0.0 {
            for r in &mut rates {
                *r += ep.sensor_rng.random_range(-noise.rates..=noise.rates);
            }
        }
        if noise.motor_speeds > 0.0 {
            for w in &mut motor_speeds {
                *w += ep.sensor_rng.random_range(-noise.motor_speeds..=noise.motor_speeds);
            }
        }

        Observation {
            mask,
            rates,
            motor_speeds,
            flight_plan: *ep.plan.vector(),
        }
    }

    fn privileged(&self) -> Option<PrivilegedObservation> {
        if !self.config.informed {
            return None;
        }
        let ep = self.episode.as_ref()?;
        let s = &ep.state;
        let gate = self.track.gate(ep.progress.target());
        let (roll, pitch, yaw) = s.euler();
        Some(PrivilegedObservation {
            position_w: s.position.into(),
            position_g: gate.world_to_gate(&s.position).into(),
            velocity_w: s.velocity.into(),
            velocity_g: gate.vector_to_gate(&s.velocity).into(),
            attitude: [roll, pitch, yaw, wrap_angle(yaw - gate.yaw)],
            rates: s.body_rates.into(),
            motor_speeds: s.motor_speeds,
            extrinsics: ep.draw.extrinsics.to_array(),
            params: ep.params.to_vec(),
        })
    }
}

/// `λ · mean_t ‖μ_t − μ_{t−1}‖²` over a trace of policy means; `None` for
/// traces shorter than two.
pub fn smoothness_metric(trace: &[[f64; 4]]) -> Option<f64> {
    if trace.len() < 2 {
        return None;
    }
    let sum: f64 = trace
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    Some(SMOOTHNESS_WEIGHT * sum / (trace.len() - 1) as f64)
}
