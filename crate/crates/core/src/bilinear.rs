//! The 2x2 bilinear reference system
//!
//! ```text
//! dx1/dt = u1 v1
//! dx2/dt = max(0, x1) u2 v2,     u ∈ [-1, 1]^2,  v ∈ {-1, 1}^2,  t ∈ [0, 1]
//! ```
//!
//! with cost `x2(1)` and start `(0, 0)`. A controller that sees the current
//! disturbance can always make `x1` grow at unit speed and `x2` decrease at
//! speed `x1`, giving `x2(1) = -1/2`; this is the lower game value and, for
//! this system, also the optimal guaranteed result of full-memory strategies
//! against open-loop and compactly constrained disturbances.
//!
//! The system fails the pointwise saddle condition: with `s = (0, 1)` and
//! `x1 > 0` the min-max of `<s, f>` is 0 while the max-min is `-x1`.

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::signal::Signal;
use crate::strategies::FullMemoryFeedback;
use crate::system::{BoundingBox, CompactSet, Dynamics};
use crate::trajectory::Trajectory;

/// Registry id of the system.
pub const SYSTEM_ID: &str = "bilinear-2x2";

/// Default control grid resolution used where the control set is enumerated.
pub const CONTROL_RESOLUTION: usize = 9;

pub fn rhs(_t: f64, x: &[f64], u: &[f64], v: &[f64], dx: &mut [f64]) {
    dx[0] = u[0] * v[0];
    dx[1] = x[0].max(0.0) * u[1] * v[1];
}

/// The system on `[0, 1]` with control grid `resolution x resolution` and
/// bounding box `[-1.5, 1.5]^2` plus margin.
pub fn system_with_resolution(resolution: usize) -> Dynamics {
    Dynamics::new(
        2,
        rhs,
        CompactSet::Box {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
            resolution,
        },
        CompactSet::signs(2),
        (0.0, 1.0),
    )
    .and_then(|d| d.with_bounds(BoundingBox::with_margin(vec![-1.5, -1.5], vec![1.5, 1.5])?))
    .expect("bilinear system definition is valid")
    .with_constants(1.0, 1.0)
}

pub fn system() -> Dynamics {
    system_with_resolution(CONTROL_RESOLUTION)
}

pub fn z0() -> Vec<f64> {
    vec![0.0, 0.0]
}

/// `γ(x(·)) = x2(1)`.
pub fn cost(traj: &Trajectory) -> f64 {
    traj.last_state()[1]
}

pub fn terminal_cost(x: &[f64]) -> f64 {
    x[1]
}

/// The reference value `-0.5` at `(0, 0)`.
pub fn analytic_quasi_value() -> f64 {
    -0.5
}

/// Lower value at an arbitrary position: the controller keeps `x1` growing
/// at unit speed and drains `x2` at rate `max(0, x1)`, so
/// `V(t, x) = x2 - ∫_t^1 max(0, x1 + s - t) ds`.
pub fn analytic_value(t: f64, x: &[f64]) -> f64 {
    let r = (1.0 - t).max(0.0);
    let a = x[0];
    let drain = if a >= 0.0 {
        a * r + 0.5 * r * r
    } else if a + r > 0.0 {
        0.5 * (a + r) * (a + r)
    } else {
        0.0
    };
    x[1] - drain
}

/// Initial action of the explicit feedback; nonzero components keep the
/// later quotients well defined.
pub const U_STAR: [f64; 2] = [1.0, 1.0];

/// Explicit single-test feedback for block `i >= 1`:
///
/// ```text
/// u1 ∈ argmax_{±1} u1 · Δx1 / u1_prev,   u2 ∈ argmin_{±1} u2 · Δx2 / u2_prev
/// ```
///
/// with `Δx = x(τ_i) - x(τ_{i-1})`. Ties resolve to `+1`.
pub fn explicit_feedback_block(
    history: &Trajectory,
    part: &Partition,
    u_prev: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    if i == 0 || i >= part.steps() {
        return Err(Error::Invalid(format!(
            "explicit feedback is defined for blocks 1..{}, got {i}",
            part.steps() - 1
        )));
    }
    if u_prev.len() != 2 || u_prev.iter().any(|&c| c == 0.0) {
        return Err(Error::Invalid(format!(
            "previous control {u_prev:?} must have nonzero components"
        )));
    }
    let now = history.require_sample(part.time(i))?;
    let before = history.require_sample(part.time(i - 1))?;
    let q1 = (now[0] - before[0]) / u_prev[0];
    let q2 = (now[1] - before[1]) / u_prev[1];
    // argmax_{±1} u q is sign(q); argmin is -sign(q).
    let u1 = if q1 < 0.0 { -1.0 } else { 1.0 };
    let u2 = if q2 > 0.0 { -1.0 } else { 1.0 };
    Ok(vec![u1, u2])
}

/// Full-memory feedback built from [`explicit_feedback_block`], starting
/// from [`U_STAR`] on the first block.
#[derive(Debug, Clone)]
pub struct ExplicitFeedback {
    u_prev: Vec<f64>,
}

impl Default for ExplicitFeedback {
    fn default() -> Self {
        Self {
            u_prev: U_STAR.to_vec(),
        }
    }
}

impl ExplicitFeedback {
    pub fn new() -> Self {
        Self::default()
    }
}

impl FullMemoryFeedback for ExplicitFeedback {
    fn control_block(&mut self, part: &Partition, history: &Trajectory, i: usize) -> Result<Signal> {
        let u = if i == 0 {
            U_STAR.to_vec()
        } else {
            explicit_feedback_block(history, part, &self.u_prev, i)?
        };
        self.u_prev = u.clone();
        Signal::constant(part.time(i), part.time(i + 1), u)
    }

    fn name(&self) -> &str {
        "explicit"
    }
}
