//! Target-direction oracles for extremal shift.
//!
//! A strategy steers its model motion `y(·)` toward the target set of
//! near-optimal motions. What it needs at a node `τ` is the shift vector
//! `y(τ) - w(τ | τ, y(·))`, where `w` is a projection of the model history
//! onto the target set. Oracles supply that vector, either from a
//! closed-form description of the target set or from the gradient of a
//! grid approximation of the lower game value.

mod value_table;

use std::sync::Arc;

pub use value_table::{dp_quasi_value, dp_upper_value, value_shift_vector, GridSpec, ValueTable};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use crate::vecmath::sub;

pub trait TargetOracle: Send + Sync {
    /// Shift vector at node `tau` for the model history `y` on `[t0, tau]`.
    fn shift_vector(&self, tau: f64, y: &Trajectory) -> Result<Vec<f64>>;

    fn describe(&self) -> String;
}

/// Uses `∇V(τ, y(τ))` of a lower-value table as the shift direction.
#[derive(Debug, Clone)]
pub struct ValueGradientOracle {
    table: Arc<ValueTable>,
}

impl ValueGradientOracle {
    pub fn new(table: Arc<ValueTable>) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }
}

impl TargetOracle for ValueGradientOracle {
    fn shift_vector(&self, tau: f64, y: &Trajectory) -> Result<Vec<f64>> {
        value_shift_vector(&self.table, tau, y.last_state())
    }

    fn describe(&self) -> String {
        let s = self.table.spec();
        format!(
            "value-gradient; time_steps={} nodes={:?}",
            s.time_steps, s.nodes
        )
    }
}

/// Closed-form target sets.
#[derive(Debug, Clone, PartialEq)]
pub enum ClosedFormTarget {
    /// Every motion belongs to the target set (e.g. `f ≡ 0`), so `w = y`.
    WholeSpace,
    /// Target motions are the straight line from the start point `y(t0)` to
    /// `end`, reached at `theta`.
    LineTo { end: Vec<f64>, t0: f64, theta: f64 },
    /// The system ships an explicit optimal feedback; no projection is ever
    /// computed.
    ExplicitFeedback { system_id: String },
}

#[derive(Debug, Clone)]
pub struct ExactProjectionOracle {
    rule: ClosedFormTarget,
}

pub fn exact_projection_oracle(rule: ClosedFormTarget) -> ExactProjectionOracle {
    ExactProjectionOracle { rule }
}

/// Closed-form oracle registered for a built-in system id.
pub fn exact_projection_oracle_for(system_id: &str) -> Result<ExactProjectionOracle> {
    match system_id {
        crate::bilinear::SYSTEM_ID => Ok(exact_projection_oracle(ClosedFormTarget::ExplicitFeedback {
            system_id: system_id.to_string(),
        })),
        "zero-2d" | "zero" => Ok(exact_projection_oracle(ClosedFormTarget::WholeSpace)),
        other => Err(Error::Oracle(format!(
            "no closed-form target set is registered for system `{other}`"
        ))),
    }
}

impl ExactProjectionOracle {
    pub fn rule(&self) -> &ClosedFormTarget {
        &self.rule
    }

    /// Whether [`TargetOracle::shift_vector`] is meaningful for this rule.
    pub fn uses_projection(&self) -> bool {
        !matches!(self.rule, ClosedFormTarget::ExplicitFeedback { .. })
    }

    /// Projection `w(· | τ, y(·))`, sampled on the sample times of `y`.
    pub fn projection(&self, y: &Trajectory) -> Result<Trajectory> {
        match &self.rule {
            ClosedFormTarget::WholeSpace => Ok(y.clone()),
            ClosedFormTarget::LineTo { end, t0, theta } => {
                if end.len() != y.dim() {
                    return Err(Error::Dimension {
                        what: "line end point",
                        expected: y.dim(),
                        got: end.len(),
                    });
                }
                let start = y.first_state();
                let states = y
                    .times()
                    .iter()
                    .map(|&t| {
                        let w = (t - t0) / (theta - t0);
                        start.iter().zip(end).map(|(a, b)| a + w * (b - a)).collect()
                    })
                    .collect();
                Trajectory::from_samples(y.times().to_vec(), states)
            }
            ClosedFormTarget::ExplicitFeedback { .. } => Err(Error::Oracle(self.describe())),
        }
    }
}

impl TargetOracle for ExactProjectionOracle {
    fn shift_vector(&self, _tau: f64, y: &Trajectory) -> Result<Vec<f64>> {
        let w = self.projection(y)?;
        Ok(sub(y.last_state(), w.last_state()))
    }

    fn describe(&self) -> String {
        match &self.rule {
            ClosedFormTarget::WholeSpace => "exact; whole space".into(),
            ClosedFormTarget::LineTo { end, .. } => format!("exact; line to {end:?}"),
            ClosedFormTarget::ExplicitFeedback { .. } => "explicit-feedback; projection unused".into(),
        }
    }
}
