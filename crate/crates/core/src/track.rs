//! Gate geometry and the track file format.
//!
//! Gates are upright squares parameterized by center and yaw. The gate frame
//! is the world frame translated to the gate center and rotated by the gate
//! yaw, so `x` is the signed distance along the gate normal (negative before
//! the gate), `y` is lateral and `z` points down.
//!
//! Track file (TOML):
//!
//! ```toml
//! # optional, falls back to the environment's tunnel thickness
//! tunnel_thickness = 0.8
//!
//! [[gate]]
//! position = [4.0, 0.0, -1.5]   # world NED, m
//! yaw = 1.5707963               # rad, direction of travel through the gate
//! d_g = 1.0                     # optional effective half-extent, m
//! inner_size = 1.5              # optional, m (default 1.5)
//! outer_size = 2.7              # optional, m (default 2.7)
//! visible = true                # optional (default true)
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_INNER_SIZE: f64 = 1.5;
pub const DEFAULT_OUTER_SIZE: f64 = 2.7;

/// Built-in four-gate circuit used when no track file is configured.
pub const DEFAULT_TRACK: &str = include_str!("../tracks/circle.toml");

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("failed to read track file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("track parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("track gate {gate}: invalid `{field}`: {message}")]
    Field {
        gate: usize,
        field: &'static str,
        message: String,
    },
    #[error("track needs at least 2 gates, found {0}")]
    TooFewGates(usize),
    #[error("invalid `tunnel_thickness`: {0}")]
    Thickness(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSpec {
    /// Gate center in the world frame, m.
    pub position: Vector3<f64>,
    /// Yaw of the gate normal, rad.
    pub yaw: f64,
    /// Effective half-extent used for reward and collision, m.
    pub half_extent: f64,
    /// Full edge length of the rendered opening, m.
    pub inner_size: f64,
    /// Full edge length of the rendered frame, m.
    pub outer_size: f64,
    pub visible: bool,
}

impl GateSpec {
    pub fn new(position: Vector3<f64>, yaw: f64, half_extent: f64) -> Self {
        Self {
            position,
            yaw,
            half_extent,
            inner_size: DEFAULT_INNER_SIZE,
            outer_size: DEFAULT_OUTER_SIZE,
            visible: true,
        }
    }

    /// Rotation taking gate-frame vectors to the world frame.
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw)
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    pub fn world_to_gate(&self, p_w: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse_transform_vector(&(p_w - self.position))
    }

    pub fn gate_to_world(&self, p_g: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p_g + self.position
    }

    /// Rotates a free vector (velocity) into the gate frame.
    pub fn vector_to_gate(&self, v_w: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse_transform_vector(v_w)
    }

    /// Copy of this gate shifted along its normal.
    pub fn offset_along_normal(&self, distance: f64) -> Self {
        Self {
            position: self.position + self.normal() * distance,
            visible: false,
            ..*self
        }
    }
}

/// Non-rendered checkpoints `t_g / 2` before and after `gate`.
pub fn virtual_gates(gate: &GateSpec, tunnel_thickness: f64) -> (GateSpec, GateSpec) {
    let half = 0.5 * tunnel_thickness;
    (gate.offset_along_normal(-half), gate.offset_along_normal(half))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CrossingKind {
    Pre,
    Main,
    Post,
}

impl CrossingKind {
    pub fn code(self) -> u8 {
        match self {
            CrossingKind::Pre => 0,
            CrossingKind::Main => 1,
            CrossingKind::Post => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CrossingKind::Pre),
            1 => Some(CrossingKind::Main),
            2 => Some(CrossingKind::Post),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateCrossing {
    /// Unwrapped gate index (increases across laps).
    pub gate_index: u64,
    pub kind: CrossingKind,
    pub y: f64,
    pub z: f64,
}

impl GateCrossing {
    /// `max(|y|, |z|) / d_g`: below 1 inside the opening.
    pub fn offset_ratio(&self, half_extent: f64) -> f64 {
        self.y.abs().max(self.z.abs()) / half_extent
    }
}

/// Lateral and vertical offset where the segment `prev → curr` pierces the
/// gate plane in the forward direction, or `None` without a `- → +` sign
/// change of `x`.
pub fn detect_crossing(prev_g: &Vector3<f64>, curr_g: &Vector3<f64>) -> Option<(f64, f64)> {
    if !(prev_g.x < 0.0 && curr_g.x >= 0.0) {
        return None;
    }
    let t = -prev_g.x / (curr_g.x - prev_g.x);
    let hit = prev_g + (curr_g - prev_g) * t;
    Some((hit.y, hit.z))
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub gates: Vec<GateSpec>,
    /// Distance between pre- and post-gate, m.
    pub tunnel_thickness: f64,
}

impl Track {
    pub fn new(gates: Vec<GateSpec>, tunnel_thickness: f64) -> Result<Self, TrackError> {
        if gates.len() < 2 {
            return Err(TrackError::TooFewGates(gates.len()));
        }
        if !(tunnel_thickness >= 0.0) || !tunnel_thickness.is_finite() {
            return Err(TrackError::Thickness(tunnel_thickness));
        }
        for (i, g) in gates.iter().enumerate() {
            validate_gate(i, g)?;
        }
        Ok(Self {
            gates,
            tunnel_thickness,
        })
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Cyclic gate lookup; index `i + len` is the same gate one lap later.
    pub fn gate(&self, index: u64) -> &GateSpec {
        &self.gates[(index % self.gates.len() as u64) as usize]
    }

    pub fn virtual_gates(&self, index: u64) -> (GateSpec, GateSpec) {
        virtual_gates(self.gate(index), self.tunnel_thickness)
    }

    /// Replaces every gate's effective half-extent.
    pub fn with_half_extent(mut self, half_extent: f64) -> Self {
        for g in &mut self.gates {
            g.half_extent = half_extent;
        }
        self
    }

    /// Parses a track document. Gates without `d_g` get `default_half_extent`;
    /// a missing `tunnel_thickness` falls back to `default_thickness`.
    pub fn from_toml_str(text: &str, default_half_extent: f64, default_thickness: f64) -> Result<Self, TrackError> {
        let file: TrackFile = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            TrackError::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        let gates = file
            .gate
            .into_iter()
            .map(|g| GateSpec {
                position: Vector3::from(g.position),
                yaw: g.yaw,
                half_extent: g.d_g.unwrap_or(default_half_extent),
                inner_size: g.inner_size,
                outer_size: g.outer_size,
                visible: g.visible,
            })
            .collect();
        Self::new(gates, file.tunnel_thickness.unwrap_or(default_thickness))
    }

    pub fn load(path: &Path, default_half_extent: f64, default_thickness: f64) -> Result<Self, TrackError> {
        let text = std::fs::read_to_string(path).map_err(|source| TrackError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, default_half_extent, default_thickness)
    }
}

fn validate_gate(i: usize, g: &GateSpec) -> Result<(), TrackError> {
    let field = |field, message: String| TrackError::Field {
        gate: i,
        field,
        message,
    };
    if g.position.iter().any(|x| !x.is_finite()) {
        return Err(field("position", "must be finite".into()));
    }
    if !g.yaw.is_finite() {
        return Err(field("yaw", "must be finite".into()));
    }
    if !(g.half_extent > 0.0) {
        return Err(field("d_g", format!("must be positive, got {}", g.half_extent)));
    }
    if g.visible {
        if !(g.inner_size > 0.0) {
            return Err(field("inner_size", format!("must be positive, got {}", g.inner_size)));
        }
        if !(g.outer_size > g.inner_size) {
            return Err(field(
                "outer_size",
                format!("must exceed inner_size ({}), got {}", g.inner_size, g.outer_size),
            ));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackFile {
    tunnel_thickness: Option<f64>,
    #[serde(default)]
    gate: Vec<GateEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GateEntry {
    position: [f64; 3],
    yaw: f64,
    d_g: Option<f64>,
    #[serde(default = "default_inner")]
    inner_size: f64,
    #[serde(default = "default_outer")]
    outer_size: f64,
    #[serde(default = "default_visible")]
    visible: bool,
}

fn default_inner() -> f64 {
    DEFAULT_INNER_SIZE
}

fn default_outer() -> f64 {
    DEFAULT_OUTER_SIZE
}

fn default_visible() -> bool {
    true
}
