//! Flight-plan vector and the gate-index bookkeeping that drives it.
//!
//! The vector carries only track geometry: three gate-to-gate difference
//! blocks `(Δp, Δψ)` followed by three absolute blocks `(p, ψ)` for gates
//! `i..=i+2`, all in the world frame. It never contains vehicle state.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::reward::GateProgress;
use crate::rng::SimRng;
use crate::track::{wrap_angle, CrossingKind, GateCrossing, Track};

pub const FLIGHT_PLAN_LEN: usize = 24;

/// Deployment rule: the index advances once the estimated gate-frame `x`
/// exceeds this value.
pub const DEPLOY_THRESHOLD: f64 = -0.15;

/// Alignment of the difference blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanIndexing {
    /// Blocks `(i) − (i−1)`, `(i+1) − (i)`, `(i+2) − (i+1)`.
    #[default]
    Formula,
    /// Blocks `(i+1) − (i)`, `(i+2) − (i+1)`, `(i+3) − (i+2)`.
    Prose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexRule {
    /// Advance when the gate-frame position estimate passes [`DEPLOY_THRESHOLD`].
    Deploy,
    /// Advance at a uniformly random point between pre- and post-gate.
    Train,
}

pub type FlightPlan = [f64; FLIGHT_PLAN_LEN];

pub fn flight_plan_vector(track: &Track, index: u64, indexing: PlanIndexing) -> FlightPlan {
    let n = track.len() as i64;
    let gate = |k: i64| track.gate(k.rem_euclid(n) as u64);
    let i = (index % track.len() as u64) as i64;
    let first = match indexing {
        PlanIndexing::Formula => i,
        PlanIndexing::Prose => i + 1,
    };

    let mut f = [0.0; FLIGHT_PLAN_LEN];
    for b in 0..3usize {
        let k = first + b as i64;
        let (cur, prev) = (gate(k), gate(k - 1));
        let dp = cur.position - prev.position;
        f[4 * b..4 * b + 3].copy_from_slice(dp.as_slice());
        f[4 * b + 3] = wrap_angle(cur.yaw - prev.yaw);
    }
    for b in 0..3usize {
        let g = gate(i + b as i64);
        let o = 12 + 4 * b;
        f[o..o + 3].copy_from_slice(g.position.as_slice());
        f[o + 3] = g.yaw;
    }
    f
}

/// Fraction of the pre→post tunnel of flight-plan gate `plan_index` covered
/// at `position`, as fed to the train rule. `Some(1.0)` once this step's
/// crossings include that gate's post-gate, `None` outside its tunnel.
pub fn tunnel_progress(
    track: &Track,
    plan_index: u64,
    progress: &GateProgress,
    crossings: &[GateCrossing],
    position: &Vector3<f64>,
) -> Option<f64> {
    let post_crossed = crossings
        .iter()
        .any(|c| c.gate_index == plan_index && c.kind == CrossingKind::Post);
    if post_crossed {
        return Some(1.0);
    }
    if progress.target() != plan_index || !progress.in_tunnel() {
        return None;
    }
    let t_g = track.tunnel_thickness;
    if t_g <= 0.0 {
        return Some(1.0);
    }
    let x_g = track.gate(plan_index).world_to_gate(position).x;
    Some(((x_g + 0.5 * t_g) / t_g).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlightPlanState {
    index: u64,
    vector: FlightPlan,
    indexing: PlanIndexing,
    /// Train rule: increment point drawn for the current index.
    threshold: Option<f64>,
}

impl FlightPlanState {
    pub fn new(track: &Track, index: u64, indexing: PlanIndexing) -> Self {
        Self {
            index,
            vector: flight_plan_vector(track, index, indexing),
            indexing,
            threshold: None,
        }
    }

    /// Unwrapped gate index.
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn vector(&self) -> &FlightPlan {
        &self.vector
    }

    /// Advances the index by at most one gate. `x_hat_g` is the estimated
    /// gate-frame `x` of the current gate; `tunnel_progress` is the fraction
    /// of the pre→post tunnel covered (`Some` only while inside it, `1.0`
    /// once the post-gate is passed). Returns whether the index changed.
    pub fn update(
        &mut self,
        track: &Track,
        x_hat_g: f64,
        tunnel_progress: Option<f64>,
        rule: IndexRule,
        rng: &mut SimRng,
    ) -> bool {
        let fire = match rule {
            IndexRule::Deploy => x_hat_g > DEPLOY_THRESHOLD,
            IndexRule::Train => match tunnel_progress {
                Some(progress) => {
                    let threshold = *self.threshold.get_or_insert_with(|| rng.random::<f64>());
                    progress >= threshold
                }
                None => false,
            },
        };
        if fire {
            self.index += 1;
            self.vector = flight_plan_vector(track, self.index, self.indexing);
            self.threshold = None;
        }
        fire
    }
}
