//! Quadcopter dynamics: specific-force and moment model, first-order motor
//! lag, quaternion kinematics and a fixed-step RK4 integrator.
//!
//! Frames follow NED. `DroneState::attitude` rotates body-frame vectors into
//! the world frame, so `v_world = R(q) v_body` and `q̇ = ½ q ⊗ [0, Ω]`.
//! All forces are specific (per unit mass), so there is no mass or inertia
//! tensor anywhere in the model.

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

/// Motor sign pattern of the roll moment (`-k_p1 ω1² - k_p2 ω2² + k_p3 ω3² + k_p4 ω4²`).
const ROLL_SIGNS: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
const PITCH_SIGNS: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
const YAW_SIGNS: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];

/// Full continuous simulation state of one vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DroneState {
    /// World-frame position, m (NED, altitude is `-z`).
    pub position: Vector3<f64>,
    /// Unit quaternion `(w, x, y, z)`, body to world.
    pub attitude: Quaternion<f64>,
    /// World-frame velocity, m/s.
    pub velocity: Vector3<f64>,
    /// Body rates `(p, q, r)`, rad/s.
    pub body_rates: Vector3<f64>,
    /// Propeller angular speeds, rad/s.
    pub motor_speeds: [f64; 4],
}

impl DroneState {
    pub fn at_rest(position: Vector3<f64>, motor_speeds: [f64; 4]) -> Self {
        Self {
            position,
            attitude: Quaternion::identity(),
            velocity: Vector3::zeros(),
            body_rates: Vector3::zeros(),
            motor_speeds,
        }
    }

    pub fn unit_attitude(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::new_unchecked(self.attitude)
    }

    /// Roll, pitch and yaw in ψ→θ→φ order.
    pub fn euler(&self) -> (f64, f64, f64) {
        self.unit_attitude().euler_angles()
    }

    pub fn body_velocity(&self) -> Vector3<f64> {
        self.unit_attitude().inverse_transform_vector(&self.velocity)
    }

    fn add_scaled(&self, d: &StateDerivative, h: f64) -> Self {
        let mut motor_speeds = self.motor_speeds;
        for (w, dw) in motor_speeds.iter_mut().zip(d.motor_speeds) {
            *w += h * dw;
        }
        Self {
            position: self.position + d.position * h,
            attitude: self.attitude + d.attitude * h,
            velocity: self.velocity + d.velocity * h,
            body_rates: self.body_rates + d.body_rates * h,
            motor_speeds,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.attitude.coords.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.body_rates.iter().all(|x| x.is_finite())
            && self.motor_speeds.iter().all(|x| x.is_finite())
    }
}

/// Time derivative of every [`DroneState`] field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub attitude: Quaternion<f64>,
    pub velocity: Vector3<f64>,
    pub body_rates: Vector3<f64>,
    pub motor_speeds: [f64; 4],
}

impl StateDerivative {
    /// Euclidean norm over every component.
    pub fn norm(&self) -> f64 {
        (self.position.norm_squared()
            + self.attitude.norm_squared()
            + self.velocity.norm_squared()
            + self.body_rates.norm_squared()
            + self.motor_speeds.iter().map(|x| x * x).sum::<f64>())
        .sqrt()
    }
}

/// Dynamics coefficients. Nominal values reproduce the racing quadcopter the
/// environment is tuned for; every field except `rotor_radius` takes part in
/// domain randomization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    pub k_w: f64,
    pub k_x: f64,
    pub k_y: f64,
    pub k_x2: f64,
    pub k_y2: f64,
    pub k_angle: f64,
    pub k_hor: f64,
    pub k_v2: f64,
    pub j_x: f64,
    pub j_y: f64,
    pub j_z: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Motor curve shape.
    pub k: f64,
    /// Motor time constant, s.
    pub tau: f64,
    pub k_p: [f64; 4],
    pub k_q: [f64; 4],
    /// Yaw moment coefficients on motor speed.
    pub k_r: [f64; 4],
    /// Yaw moment coefficients on motor acceleration (`k_r5..k_r8`).
    pub k_r_dot: [f64; 4],
    /// Rotor radius used in the inflow angle terms, m.
    pub rotor_radius: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self::nominal()
    }
}

impl DynamicsParams {
    pub const fn nominal() -> Self {
        Self {
            k_w: 1.55e-6,
            k_x: 5.37e-5,
            k_y: 5.37e-5,
            k_x2: 4.10e-3,
            k_y2: 1.51e-2,
            k_angle: 3.145,
            k_hor: 7.245,
            k_v2: 0.0,
            j_x: -0.89,
            j_y: 0.96,
            j_z: -0.34,
            omega_min: 341.75,
            omega_max: 3100.0,
            k: 0.50,
            tau: 0.03,
            k_p: [4.99e-5, 3.78e-5, 4.82e-5, 3.83e-5],
            k_q: [2.05e-5, 2.46e-5, 2.02e-5, 2.57e-5],
            k_r: [3.38e-3; 4],
            k_r_dot: [3.24e-4; 4],
            rotor_radius: 0.0635,
        }
    }

    /// Number of entries in [`Self::to_vec`].
    pub const LEN: usize = 31;

    /// Randomized parameter vector in fixed order:
    /// `k_w, k_x, k_y, k_x2, k_y2, k_angle, k_hor, k_v2, J_x, J_y, J_z,
    /// ω_min, ω_max, k, τ, k_p1..4, k_q1..4, k_r1..4, k_r5..8`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = vec![
            self.k_w,
            self.k_x,
            self.k_y,
            self.k_x2,
            self.k_y2,
            self.k_angle,
            self.k_hor,
            self.k_v2,
            self.j_x,
            self.j_y,
            self.j_z,
            self.omega_min,
            self.omega_max,
            self.k,
            self.tau,
        ];
        out.extend_from_slice(&self.k_p);
        out.extend_from_slice(&self.k_q);
        out.extend_from_slice(&self.k_r);
        out.extend_from_slice(&self.k_r_dot);
        out
    }

    /// Inverse of [`Self::to_vec`]; `rotor_radius` is taken from `self`.
    pub fn with_vec(&self, d: &[f64]) -> Option<Self> {
        if d.len() != Self::LEN {
            return None;
        }
        let four = |o: usize| [d[o], d[o + 1], d[o + 2], d[o + 3]];
        Some(Self {
            k_w: d[0],
            k_x: d[1],
            k_y: d[2],
            k_x2: d[3],
            k_y2: d[4],
            k_angle: d[5],
            k_hor: d[6],
            k_v2: d[7],
            j_x: d[8],
            j_y: d[9],
            j_z: d[10],
            omega_min: d[11],
            omega_max: d[12],
            k: d[13],
            tau: d[14],
            k_p: four(15),
            k_q: four(19),
            k_r: four(23),
            k_r_dot: four(27),
            rotor_radius: self.rotor_radius,
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.omega_min < self.omega_max) {
            return Err(format!(
                "omega_min ({}) must be below omega_max ({})",
                self.omega_min, self.omega_max
            ));
        }
        if !(self.tau > 0.0) {
            return Err(format!("tau must be positive, got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.k) {
            return Err(format!("motor curve k must lie in [0, 1], got {}", self.k));
        }
        if !(self.rotor_radius > 0.0) {
            return Err(format!("rotor_radius must be positive, got {}", self.rotor_radius));
        }
        if self.to_vec().iter().any(|x| !x.is_finite()) {
            return Err("dynamics parameters must be finite".into());
        }
        Ok(())
    }

    /// `4 k_w ω_max²`: the specific thrust at full command and zero airspeed.
    pub fn max_specific_thrust(&self) -> f64 {
        4.0 * self.k_w * self.omega_max * self.omega_max
    }
}

/// Normalized motor commands, clamped to `[0, 1]` on construction.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Action(pub [f64; 4]);

impl Action {
    pub fn new(u: [f64; 4]) -> Self {
        Self(u.map(|x| x.clamp(0.0, 1.0)))
    }

    pub fn uniform(u: f64) -> Self {
        Self::new([u; 4])
    }
}

/// Disturbances applied to one control step.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DisturbanceSample {
    /// World-frame acceleration disturbance, m/s².
    pub accel: Vector3<f64>,
    /// Body angular-acceleration disturbance, rad/s².
    pub moment: Vector3<f64>,
    /// Additive per-motor command disturbance.
    pub action: [f64; 4],
}

/// Steady-state propeller speed for one motor command.
pub fn motor_steady_speed(u: f64, eps_u: f64, params: &DynamicsParams) -> f64 {
    let u = (u + eps_u).clamp(0.0, 1.0);
    let k = params.k;
    (params.omega_max - params.omega_min) * (k * u * u + (1.0 - k) * u).sqrt() + params.omega_min
}

/// Command that makes [`motor_steady_speed`] return `speed` (with no
/// disturbance). Speeds outside `[ω_min, ω_max]` saturate.
pub fn command_for_speed(speed: f64, params: &DynamicsParams) -> f64 {
    let y = ((speed - params.omega_min) / (params.omega_max - params.omega_min)).clamp(0.0, 1.0);
    let target = y * y;
    let k = params.k;
    let u = if k.abs() < 1e-12 {
        target
    } else {
        let b = 1.0 - k;
        (-b + (b * b + 4.0 * k * target).sqrt()) / (2.0 * k)
    };
    u.clamp(0.0, 1.0)
}

/// Body-frame specific force (m/s²) from thrust and aerodynamic drag.
pub fn specific_force(v_body: &Vector3<f64>, omega: &[f64; 4], params: &DynamicsParams) -> Vector3<f64> {
    let omega_sum: f64 = omega.iter().sum();
    let omega_sq: f64 = omega.iter().map(|w| w * w).sum();
    let (vx, vy, vz) = (v_body.x, v_body.y, v_body.z);

    let inflow = params.rotor_radius * omega_sum;
    // ω_min > 0 keeps the inflow strictly positive for physical states
    let (alpha, mu) = if inflow > 0.0 {
        ((vz / inflow).atan(), ((vx * vx + vy * vy) / inflow).atan())
    } else {
        (0.0, 0.0)
    };

    Vector3::new(
        -params.k_x * vx * omega_sum - params.k_x2 * vx * vx.abs(),
        -params.k_y * vy * omega_sum - params.k_y2 * vy * vy.abs(),
        -params.k_w * (1.0 + params.k_angle * alpha + params.k_hor * mu) * omega_sq - params.k_v2 * vz * vz.abs(),
    )
}

/// Body angular acceleration (rad/s²) from motor speeds, motor accelerations
/// and gyroscopic coupling.
pub fn angular_accel(
    omega: &[f64; 4],
    omega_dot: &[f64; 4],
    rates: &Vector3<f64>,
    params: &DynamicsParams,
) -> Vector3<f64> {
    let (p, q, r) = (rates.x, rates.y, rates.z);
    let mut m = Vector3::new(params.j_x * q * r, params.j_y * p * r, params.j_z * p * q);
    for i in 0..4 {
        let sq = omega[i] * omega[i];
        m.x += ROLL_SIGNS[i] * params.k_p[i] * sq;
        m.y += PITCH_SIGNS[i] * params.k_q[i] * sq;
        m.z += YAW_SIGNS[i] * (params.k_r[i] * omega[i] + params.k_r_dot[i] * omega_dot[i]);
    }
    m
}

/// Right-hand side of the vehicle ODE for fixed steady motor targets.
pub fn state_derivative(
    state: &DroneState,
    omega_c: &[f64; 4],
    dist: &DisturbanceSample,
    params: &DynamicsParams,
) -> StateDerivative {
    let rot = UnitQuaternion::new_unchecked(state.attitude);
    let v_body = rot.inverse_transform_vector(&state.velocity);

    let mut omega_dot = [0.0; 4];
    for i in 0..4 {
        omega_dot[i] = (omega_c[i] - state.motor_speeds[i]) / params.tau;
    }

    let force = specific_force(&v_body, &state.motor_speeds, params);
    let accel = Vector3::new(0.0, 0.0, GRAVITY) + rot.transform_vector(&force) + dist.accel;
    let rates_dot = angular_accel(&state.motor_speeds, &omega_dot, &state.body_rates, params) + dist.moment;
    let rates = state.body_rates;
    let attitude_dot = state.attitude * Quaternion::new(0.0, rates.x, rates.y, rates.z) * 0.5;

    StateDerivative {
        position: state.velocity,
        attitude: attitude_dot,
        velocity: accel,
        body_rates: rates_dot,
        motor_speeds: omega_dot,
    }
}

/// Steady motor targets for an action under the given command disturbance.
pub fn motor_targets(action: &Action, eps_u: &[f64; 4], params: &DynamicsParams) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = motor_steady_speed(action.0[i], eps_u[i], params);
    }
    out
}

/// One classic fourth-order Runge-Kutta step with zero-order-hold action.
/// The attitude is renormalized and motor speeds clamped to be non-negative.
pub fn rk4_step(
    state: &DroneState,
    action: &Action,
    dist: &DisturbanceSample,
    params: &DynamicsParams,
    dt: f64,
) -> DroneState {
    debug_assert!(dt > 0.0);
    let omega_c = motor_targets(action, &dist.action, params);
    rk4_step_with_targets(state, &omega_c, dist, params, dt)
}

pub(crate) fn rk4_step_with_targets(
    state: &DroneState,
    omega_c: &[f64; 4],
    dist: &DisturbanceSample,
    params: &DynamicsParams,
    dt: f64,
) -> DroneState {
    let f = |s: &DroneState| state_derivative(s, omega_c, dist, params);
    let k1 = f(state);
    let k2 = f(&state.add_scaled(&k1, 0.5 * dt));
    let k3 = f(&state.add_scaled(&k2, 0.5 * dt));
    let k4 = f(&state.add_scaled(&k3, dt));

    let mut next = *state;
    let w = dt / 6.0;
    for (k, c) in [(&k1, w), (&k2, 2.0 * w), (&k3, 2.0 * w), (&k4, w)] {
        next = next.add_scaled(k, c);
    }
    next.attitude = next.attitude.normalize();
    for w in next.motor_speeds.iter_mut() {
        *w = w.max(0.0);
    }
    next
}

/// Motor speeds that hold a level, stationary vehicle in equilibrium: total
/// thrust balances gravity and all three moments vanish. The root mean
/// square of the result equals `√(g / 4k_w)`; individual speeds differ when
/// the moment coefficients are asymmetric. Returns `None` if Newton's method
/// fails to converge.
pub fn hover_motor_speeds(params: &DynamicsParams) -> Option<[f64; 4]> {
    let uniform = (GRAVITY / (4.0 * params.k_w)).sqrt();
    let mut w = Vector4::repeat(uniform);
    let residual = |w: &Vector4<f64>| {
        let mut r = Vector4::new(-GRAVITY, 0.0, 0.0, 0.0);
        for i in 0..4 {
            let sq = w[i] * w[i];
            r[0] += params.k_w * sq;
            r[1] += ROLL_SIGNS[i] * params.k_p[i] * sq;
            r[2] += PITCH_SIGNS[i] * params.k_q[i] * sq;
            r[3] += YAW_SIGNS[i] * params.k_r[i] * w[i];
        }
        r
    };
    for _ in 0..50 {
        let r = residual(&w);
        let mut jac = Matrix4::zeros();
        for i in 0..4 {
            jac[(0, i)] = 2.0 * params.k_w * w[i];
            jac[(1, i)] = 2.0 * ROLL_SIGNS[i] * params.k_p[i] * w[i];
            jac[(2, i)] = 2.0 * PITCH_SIGNS[i] * params.k_q[i] * w[i];
            jac[(3, i)] = YAW_SIGNS[i] * params.k_r[i];
        }
        let step = jac.lu().solve(&r)?;
        w -= step;
        if step.amax() <= 1e-12 * uniform {
            let w = [w[0], w[1], w[2], w[3]];
            return w.iter().all(|x| *x > 0.0).then_some(w);
        }
    }
    None
}
