//! Per-step reward and episode termination.
//!
//! `r = 5·r_prog − r_rate + 30·r_gate`, with a total of zero on any terminal
//! step. Progress is measured toward the pre-gate of the current target and
//! is suspended while the vehicle is inside the pre/post tunnel.

use std::f64::consts::FRAC_PI_3;

use nalgebra::Vector3;

use crate::dynamics::DroneState;
use crate::track::{detect_crossing, CrossingKind, GateCrossing, Track};

pub const PROGRESS_WEIGHT: f64 = 5.0;
pub const GATE_WEIGHT: f64 = 30.0;
const RATE_CLAMP: f64 = 17.0;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RewardBreakdown {
    pub progress: f64,
    pub rate_penalty: f64,
    pub gate: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(progress: f64, rate_penalty: f64, gate: f64) -> Self {
        Self {
            progress,
            rate_penalty,
            gate,
            total: PROGRESS_WEIGHT * progress - rate_penalty + GATE_WEIGHT * gate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroundCause {
    VerticalSpeed,
    Roll,
    Pitch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Termination {
    #[default]
    None,
    GateCollision {
        gate_index: u64,
        kind: CrossingKind,
    },
    GroundCollision(GroundCause),
}

impl Termination {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Termination::None)
    }
}

/// `(exp(min(‖Ω‖₁, 17)) − 1) / (2 f_c 10⁵)`.
pub fn rate_penalty(rates: &Vector3<f64>, control_hz: f64) -> f64 {
    let l1 = rates.abs().sum();
    (l1.min(RATE_CLAMP).exp() - 1.0) / (2.0 * control_hz * 1e5)
}

/// Decrease in distance to the target; zero inside the tunnel.
pub fn progress_reward(prev_rel: &Vector3<f64>, curr_rel: &Vector3<f64>, in_tunnel: bool) -> f64 {
    if in_tunnel {
        0.0
    } else {
        prev_rel.norm() - curr_rel.norm()
    }
}

/// `1 − max(|y|, |z|) / d_g`. Negative values mean the crossing missed the
/// opening and are treated as collisions by [`check_termination`].
pub fn gate_reward(crossing: &GateCrossing, half_extent: f64) -> f64 {
    1.0 - crossing.offset_ratio(half_extent)
}

/// The shaped ground predicate: below 0.5 m altitude while descending faster
/// than 1 m/s or banked beyond 60°.
pub fn ground_collision(state: &DroneState) -> Option<GroundCause> {
    if !(state.position.z > -0.5) {
        return None;
    }
    let (roll, pitch, _) = state.euler();
    if state.velocity.z > 1.0 {
        Some(GroundCause::VerticalSpeed)
    } else if roll.abs() > FRAC_PI_3 {
        Some(GroundCause::Roll)
    } else if pitch.abs() > FRAC_PI_3 {
        Some(GroundCause::Pitch)
    } else {
        None
    }
}

pub fn check_termination(state: &DroneState, crossings: &[GateCrossing], half_extent: f64) -> Termination {
    if let Some(c) = crossings.iter().find(|c| c.offset_ratio(half_extent) > 1.0) {
        return Termination::GateCollision {
            gate_index: c.gate_index,
            kind: c.kind,
        };
    }
    match ground_collision(state) {
        Some(cause) => Termination::GroundCollision(cause),
        None => Termination::None,
    }
}

/// Combines the reward terms for one control step. Crossings that did not
/// collide each add their gate reward.
pub fn step_reward(
    progress: f64,
    rates: &Vector3<f64>,
    control_hz: f64,
    crossings: &[GateCrossing],
    half_extent: f64,
    state: &DroneState,
) -> (RewardBreakdown, Termination) {
    let gate: f64 = crossings.iter().map(|c| gate_reward(c, half_extent)).sum();
    let mut reward = RewardBreakdown::new(progress, rate_penalty(rates, control_hz), gate);
    let termination = check_termination(state, crossings, half_extent);
    if termination.is_terminal() {
        reward.total = 0.0;
    }
    (reward, termination)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Approach,
    PrePassed,
    MainPassed,
}

/// Result of moving the vehicle along one control-step segment.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SegmentOutcome {
    pub progress: f64,
    pub crossings: Vec<GateCrossing>,
    /// Target gate (unwrapped) at the start of the segment.
    pub target: u64,
    pub was_in_tunnel: bool,
}

/// Tracks the ground-truth target gate and where the vehicle is relative to
/// its pre/main/post checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateProgress {
    target: u64,
    stage: Stage,
}

impl GateProgress {
    pub fn new(target: u64) -> Self {
        Self {
            target,
            stage: Stage::Approach,
        }
    }

    /// Unwrapped index of the gate currently targeted.
    pub fn target(&self) -> u64 {
        self.target
    }

    /// Pre-gate crossed, post-gate not yet.
    pub fn in_tunnel(&self) -> bool {
        self.stage != Stage::Approach
    }

    pub fn advance(&mut self, track: &Track, prev_w: &Vector3<f64>, curr_w: &Vector3<f64>) -> SegmentOutcome {
        let target = self.target;
        let was_in_tunnel = self.in_tunnel();
        let main = track.gate(target);
        let (pre, post) = track.virtual_gates(target);

        let progress = progress_reward(&(prev_w - pre.position), &(curr_w - pre.position), was_in_tunnel);

        let mut crossings = Vec::new();
        loop {
            let (kind, gate) = match self.stage {
                Stage::Approach => (CrossingKind::Pre, &pre),
                Stage::PrePassed => (CrossingKind::Main, main),
                Stage::MainPassed => (CrossingKind::Post, &post),
            };
            let Some((y, z)) = detect_crossing(&gate.world_to_gate(prev_w), &gate.world_to_gate(curr_w)) else {
                break;
            };
            crossings.push(GateCrossing {
                gate_index: target,
                kind,
                y,
                z,
            });
            self.stage = match self.stage {
                Stage::Approach => Stage::PrePassed,
                Stage::PrePassed => Stage::MainPassed,
                Stage::MainPassed => {
                    self.target += 1;
                    Stage::Approach
                }
            };
            if self.stage == Stage::Approach {
                break;
            }
        }

        SegmentOutcome {
            progress,
            crossings,
            target,
            was_in_tunnel,
        }
    }
}
