//! Double integrator with linear drag, sampled at `dt`.
//!
//! ```text
//! p' = p + dt * v
//! v' = (1 - drag) * v + (dt / mass) * u
//! ```

use nalgebra::{Matrix3x6, Matrix6, Matrix6x3};
use serde::{Deserialize, Serialize};

use crate::geometry::Aabb;
use crate::{Error, Result, Vec3};

/// Tolerance of [`check_bounds`].
pub const BOUND_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Sampling interval (s).
    pub dt: f64,
    /// Mass (kg).
    pub mass: f64,
    /// Air-resistance coefficient in `[0, 1)`.
    pub drag: f64,
    /// Per-axis force bound (N).
    pub u_max: f64,
    /// Per-axis speed bound (m/s).
    pub v_max: f64,
    /// Full camera opening angle (rad).
    pub fov_angle: f64,
}

impl AgentParams {
    /// Platform used throughout the reference experiments.
    pub fn reference() -> Self {
        Self {
            dt: 1.0,
            mass: 3.35,
            drag: 0.2,
            u_max: 20.0,
            v_max: 15.0,
            fov_angle: 60f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            bad.push(format!("mass must be positive (got {})", self.mass));
        }
        if !(self.drag >= 0.0 && self.drag < 1.0) {
            bad.push(format!("drag must lie in [0, 1) (got {})", self.drag));
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            bad.push(format!("u_max must be positive (got {})", self.u_max));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            bad.push(format!("v_max must be positive (got {})", self.v_max));
        }
        if !(self.fov_angle > 0.0 && self.fov_angle < std::f64::consts::PI) {
            bad.push(format!(
                "fov_angle must lie in (0, pi) (got {})",
                self.fov_angle
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Params(bad.join("; ")))
        }
    }

    /// Velocity retention per step, `1 - drag`.
    pub fn drag_factor(&self) -> f64 {
        1.0 - self.drag
    }

    /// Velocity gained per unit force per step, `dt / mass`.
    pub fn control_gain(&self) -> f64 {
        self.dt / self.mass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl AgentState {
    pub fn new(position: Vec3, velocity: Vec3) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
        }
    }

    pub fn to_vector(&self) -> nalgebra::Vector6<f64> {
        let p = &self.position;
        let v = &self.velocity;
        nalgebra::Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z)
    }

    pub fn from_vector(x: &nalgebra::Vector6<f64>) -> Self {
        Self {
            position: Vec3::new(x[0], x[1], x[2]),
            velocity: Vec3::new(x[3], x[4], x[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub force: Vec3,
}

impl ControlInput {
    pub fn new(force: Vec3) -> Self {
        Self { force }
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

/// Initial state plus `(control, resulting state)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub initial: AgentState,
    pub steps: Vec<(ControlInput, AgentState)>,
}

impl Plan {
    pub fn new(initial: AgentState) -> Self {
        Self {
            initial,
            steps: Vec::new(),
        }
    }

    /// Number of applied controls.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// States `x_0 .. x_T`.
    pub fn states(&self) -> Vec<AgentState> {
        std::iter::once(self.initial)
            .chain(self.steps.iter().map(|(_, s)| *s))
            .collect()
    }

    pub fn controls(&self) -> Vec<ControlInput> {
        self.steps.iter().map(|(u, _)| *u).collect()
    }

    pub fn final_state(&self) -> AgentState {
        self.steps.last().map(|(_, s)| *s).unwrap_or(self.initial)
    }

    /// Applies `u` to the final state and records the result.
    pub fn push(&mut self, u: ControlInput, params: &AgentParams) -> AgentState {
        let next = step(&self.final_state(), &u, params);
        self.steps.push((u, next));
        next
    }
}

/// `(Phi, Gamma)` of the discrete-time model.
pub fn transition_matrices(params: &AgentParams) -> Result<(Matrix6<f64>, Matrix6x3<f64>)> {
    params.validate()?;
    let mut phi = Matrix6::identity();
    let mut gamma = Matrix6x3::zeros();
    for k in 0..3 {
        phi[(k, k + 3)] = params.dt;
        phi[(k + 3, k + 3)] = params.drag_factor();
        gamma[(k + 3, k)] = params.control_gain();
    }
    Ok((phi, gamma))
}

/// Selection map `H` extracting the position from a 6-dim state.
pub fn position_selector() -> Matrix3x6<f64> {
    let mut h = Matrix3x6::zeros();
    for k in 0..3 {
        h[(k, k)] = 1.0;
    }
    h
}

/// One exact affine update; bounds are not enforced here.
pub fn step(state: &AgentState, u: &ControlInput, params: &AgentParams) -> AgentState {
    AgentState {
        position: state.position + state.velocity * params.dt,
        velocity: state.velocity * params.drag_factor() + u.force * params.control_gain(),
    }
}

/// Applies `controls` in order starting from `x0`.
pub fn rollout(x0: &AgentState, controls: &[ControlInput], params: &AgentParams) -> Plan {
    let mut plan = Plan::new(*x0);
    for u in controls {
        plan.push(*u, params);
    }
    plan
}

/// `x_t = Phi^t x_0 + sum_{tau < t} Phi^tau Gamma u_{t - tau - 1}`.
pub fn closed_form_state(
    x0: &AgentState,
    controls: &[ControlInput],
    t: usize,
    params: &AgentParams,
) -> Result<AgentState> {
    if t > controls.len() {
        return Err(Error::Problem(format!(
            "state {t} needs {t} controls, got {}",
            controls.len()
        )));
    }
    let (phi, gamma) = transition_matrices(params)?;
    let mut x = phi.pow(t as u32) * x0.to_vector();
    let mut phi_tau = Matrix6::identity();
    for tau in 0..t {
        x += phi_tau * gamma * controls[t - tau - 1].force;
        phi_tau *= phi;
    }
    Ok(AgentState::from_vector(&x))
}

/// Response coefficients of `H x_t` and of the velocity to a force applied
/// `lag` steps earlier (`lag = t - s - 1` for the control `u_s`).
///
/// Both blocks of `Phi^lag Gamma` are multiples of `I_3`; the scalars are
/// returned as `(position, velocity)`.
pub fn impulse_response(params: &AgentParams, lag: usize) -> Result<(f64, f64)> {
    let (phi, gamma) = transition_matrices(params)?;
    let m = phi.pow(lag as u32) * gamma;
    Ok((m[(0, 0)], m[(3, 0)]))
}

/// Free response of position and velocity after `t` steps (per axis).
pub fn free_response(params: &AgentParams, t: usize) -> Result<Matrix6<f64>> {
    let (phi, _) = transition_matrices(params)?;
    Ok(phi.pow(t as u32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundedQuantity {
    Velocity,
    Force,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    /// Step index: controls are `u_t` for `t` in `0..T`, velocities belong to `x_t`
    /// for `t` in `1..=T`.
    pub t: usize,
    pub quantity: BoundedQuantity,
    pub axis: usize,
    pub value: f64,
}

/// Every component-wise excess of `|v| <= v_max` or `|u| <= u_max` beyond
/// [`BOUND_TOL`].
pub fn check_bounds(plan: &Plan, params: &AgentParams) -> Vec<BoundViolation> {
    let mut out = Vec::new();
    for (t, (u, x)) in plan.steps.iter().enumerate() {
        for axis in 0..3 {
            if u.force[axis].abs() > params.u_max + BOUND_TOL {
                out.push(BoundViolation {
                    t,
                    quantity: BoundedQuantity::Force,
                    axis,
                    value: u.force[axis],
                });
            }
        }
        for axis in 0..3 {
            if x.velocity[axis].abs() > params.v_max + BOUND_TOL {
                out.push(BoundViolation {
                    t: t + 1,
                    quantity: BoundedQuantity::Velocity,
                    axis,
                    value: x.velocity[axis],
                });
            }
        }
    }
    out
}

/// Outer bound on the positions reachable after `1..=steps` steps from `state`
/// under the speed and force limits, intersected with `region`.
///
/// Entry `k` bounds `H x_{k+1}`.
pub fn reachable_boxes(
    state: &AgentState,
    params: &AgentParams,
    steps: usize,
    region: &Aabb,
) -> Vec<Aabb> {
    let (phi, gain) = (params.drag_factor(), params.control_gain());
    let mut out = Vec::with_capacity(steps);
    let mut lo_p = state.position;
    let mut hi_p = state.position;
    let mut lo_v = state.velocity;
    let mut hi_v = state.velocity;
    for _ in 0..steps {
        lo_p += lo_v * params.dt;
        hi_p += hi_v * params.dt;
        for k in 0..3 {
            lo_v[k] = (phi * lo_v[k] - gain * params.u_max).max(-params.v_max);
            hi_v[k] = (phi * hi_v[k] + gain * params.u_max).min(params.v_max);
        }
        let pad = Vec3::repeat(1e-6);
        let reach = Aabb::new(lo_p - pad, hi_p + pad);
        out.push(reach.intersection(region));
    }
    out
}
