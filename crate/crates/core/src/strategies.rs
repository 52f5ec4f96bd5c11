//! Full-memory feedbacks and the closed-loop driver.
//!
//! A full-memory feedback is called once per partition step. At node `τ_i`
//! it sees the realized motion on `[t0, τ_i]` and returns the control for
//! `[τ_i, τ_{i+1})`. The strategies here keep a *model* motion `y(·)`,
//! driven by the useful controls and by surrogate disturbances identified
//! from observed increments, and pick each useful control by extremal shift
//! of the model toward the target direction supplied by a
//! [`TargetOracle`]:
//!
//! - [`EpsilonFeedback`] ends every step with a short window of test
//!   actions and identifies the surrogate from the divided differences
//!   observed in that window. With the test actions set to an ε-net of the
//!   control set this is the general strategy; with a fixed finite test set
//!   it is the finite-test variant.
//! - [`UStarFeedback`] has no test window: the previous useful control is
//!   the only test action, and the surrogate comes from the increment over
//!   the whole previous step.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrate::integrate_span;
use crate::inversion::{divided_differences, identify_surrogate_multi, identify_surrogate_single, improves};
use crate::oracle::TargetOracle;
use crate::partition::{Partition, TestSchedule};
use crate::signal::Signal;
use crate::system::{axis_points, lex_grid, CompactSet, Dynamics};
use crate::trajectory::Trajectory;
use crate::vecmath::dot;

/// Surrogate disturbance identified at a partition node.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateRecord {
    pub block: usize,
    pub t: f64,
    pub v_bar: Vec<f64>,
}

pub trait FullMemoryFeedback: Send {
    /// Control on `[τ_i, τ_{i+1})` given the realized motion on `[t0, τ_i]`.
    fn control_block(&mut self, part: &Partition, history: &Trajectory, i: usize) -> Result<Signal>;

    /// Surrogates identified so far, one per block `i >= 1`.
    fn surrogates(&self) -> &[SurrogateRecord] {
        &[]
    }

    fn name(&self) -> &str;
}

/// Applies the same control on every block.
#[derive(Debug, Clone)]
pub struct ConstantFeedback {
    pub u: Vec<f64>,
}

impl FullMemoryFeedback for ConstantFeedback {
    fn control_block(&mut self, part: &Partition, _history: &Trajectory, i: usize) -> Result<Signal> {
        Signal::constant(part.time(i), part.time(i + 1), self.u.clone())
    }

    fn name(&self) -> &str {
        "constant"
    }
}

/// Uniform grid with per-coordinate spacing at most `eps`; a finite set is
/// returned as listed. For a box in R^p the covering radius is at most
/// `eps * sqrt(p) / 2`.
pub fn epsilon_net(set: &CompactSet, eps: f64) -> Result<Vec<Vec<f64>>> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("net spacing must be positive, got {eps}")));
    }
    match set {
        CompactSet::Finite(points) => {
            set.validate()?;
            Ok(points.clone())
        }
        CompactSet::Box { lower, upper, .. } => {
            if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                return Err(Error::Invalid(format!(
                    "degenerate box {lower:?} / {upper:?}"
                )));
            }
            let axes: Vec<Vec<f64>> = lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| {
                    let count = ((u - l) / eps - 1e-12).ceil().max(0.0) as usize + 1;
                    axis_points(l, u, count)
                })
                .collect();
            Ok(lex_grid(&axes))
        }
    }
}

/// `argmin_{u ∈ shift_set} <s, f(t, y, u, v̄)>`, lowest index on ties.
pub fn extremal_shift(
    dyn_: &Dynamics,
    t: f64,
    y: &[f64],
    v_bar: &[f64],
    s: &[f64],
    shift_set: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut best: Option<(usize, f64)> = None;
    for (k, u) in shift_set.iter().enumerate() {
        let val = dot(s, &dyn_.f(t, y, u, v_bar));
        if !val.is_finite() {
            return Err(Error::NonFinite { t, x: y.to_vec() });
        }
        match best {
            Some((_, b)) if !improves(val, b) => {}
            _ => best = Some((k, val)),
        }
    }
    best.map(|(k, _)| shift_set[k].clone())
        .ok_or_else(|| Error::Invalid("the shift set is empty".into()))
}

/// Per-run memory of a model-based feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyState {
    /// Model motion on `[t0, τ_i]`.
    pub y_traj: Trajectory,
    pub v_bar_prev: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub u_star: Vec<f64>,
    pub v_star: Vec<f64>,
    /// Useful controls `u_0, u_1, ...`.
    pub useful: Vec<Vec<f64>>,
    /// `v̄_0, v̄_1, ...` as used by the model.
    pub model_disturbances: Vec<Vec<f64>>,
    pub surrogates: Vec<SurrogateRecord>,
}

impl StrategyState {
    pub fn new(t0: f64, z0: Vec<f64>, u_star: Vec<f64>, v_star: Vec<f64>) -> Self {
        Self {
            y_traj: Trajectory::new(t0, z0),
            v_bar_prev: v_star.clone(),
            u_prev: u_star.clone(),
            useful: vec![u_star.clone()],
            model_disturbances: vec![v_star.clone()],
            u_star,
            v_star,
            surrogates: Vec::new(),
        }
    }

    /// Extends the model over `[τ_{i-1}, τ_i]` with `(u_{i-1}, v̄_{i-1})`.
    fn extend_model(&mut self, dyn_: &Dynamics, part: &Partition, i: usize, substeps: usize) -> Result<()> {
        let (a, b) = (part.time(i - 1), part.time(i));
        let u = Signal::constant(a, b, self.u_prev.clone())?;
        let v = Signal::constant(a, b, self.v_bar_prev.clone())?;
        let seg = integrate_span(dyn_, a, b, self.y_traj.last_state(), &u, &v, substeps)?;
        self.y_traj.extend(&seg)
    }

    fn record(&mut self, i: usize, t: f64, v_bar: Vec<f64>, u: Vec<f64>) {
        self.surrogates.push(SurrogateRecord {
            block: i,
            t,
            v_bar: v_bar.clone(),
        });
        self.model_disturbances.push(v_bar.clone());
        self.useful.push(u.clone());
        self.v_bar_prev = v_bar;
        self.u_prev = u;
    }
}

/// Settings of the test-window strategy.
#[derive(Clone)]
pub struct EpsilonStrategyConfig {
    pub eps: f64,
    pub test_controls: Vec<Vec<f64>>,
    pub shift_set: Vec<Vec<f64>>,
    pub oracle: Arc<dyn TargetOracle>,
    /// RK4 substeps for the model motion.
    pub substeps: usize,
    /// Initial control; defaults to the first enumerated control.
    pub u_star: Option<Vec<f64>>,
    /// Initial model disturbance; defaults to the first enumerated point.
    pub v_star: Option<Vec<f64>>,
}

impl EpsilonStrategyConfig {
    fn validate(&self, dyn_: &Dynamics) -> Result<()> {
        if self.test_controls.is_empty() {
            return Err(Error::Invalid("the test set is empty".into()));
        }
        if self.shift_set.is_empty() {
            return Err(Error::Invalid("the shift set is empty".into()));
        }
        let set = dyn_.control_set();
        if let Some(bad) = self
            .test_controls
            .iter()
            .chain(&self.shift_set)
            .find(|u| !set.contains(u, 1e-12))
        {
            return Err(Error::Invalid(format!("control {bad:?} lies outside the control set")));
        }
        Ok(())
    }
}

/// Control for `[τ_i, τ_{i+1})`: the useful control up to the next test
/// window, then the test actions in order. The last block has no window.
fn emit(part: &Partition, sched: &TestSchedule, i: usize, useful: &[f64], tests: &[Vec<f64>]) -> Result<Signal> {
    let (a, b) = (part.time(i), part.time(i + 1));
    match sched.instants(i + 1) {
        // Built piece by piece without merging: every test instant must stay
        // a breakpoint so that the motion is sampled there.
        Some(w) => {
            let mut breaks = vec![a];
            breaks.extend_from_slice(w);
            let mut values = vec![useful.to_vec()];
            values.extend(tests.iter().cloned());
            Signal::from_pieces(breaks, values)
        }
        None => Signal::constant(a, b, useful.to_vec()),
    }
}

/// One block of the test-window strategy. For `i = 0` the state must be
/// freshly initialized; for `i >= 1` the history must be sampled at the
/// test instants of block `i`.
#[allow(clippy::too_many_arguments)]
pub fn ue_feedback_block(
    dyn_: &Dynamics,
    cfg: &EpsilonStrategyConfig,
    state: &mut StrategyState,
    history: &Trajectory,
    part: &Partition,
    sched: &TestSchedule,
    i: usize,
) -> Result<Signal> {
    if i >= part.steps() {
        return Err(Error::Invalid(format!("block {i} is past the last step")));
    }
    if i == 0 {
        return emit(part, sched, 0, &state.u_star.clone(), &cfg.test_controls);
    }
    let tau = part.time(i);
    state.extend_model(dyn_, part, i, cfg.substeps)?;
    let d = divided_differences(history, sched, i)?;
    let x_now = history.require_sample(tau)?;
    let v_bar = identify_surrogate_multi(dyn_, tau, x_now, &cfg.test_controls, &d)?.point;
    let s = cfg.oracle.shift_vector(tau, &state.y_traj)?;
    let u = extremal_shift(dyn_, tau, state.y_traj.last_state(), &v_bar, &s, &cfg.shift_set)?;
    state.record(i, tau, v_bar, u.clone());
    emit(part, sched, i, &u, &cfg.test_controls)
}

/// Test-window strategy as a [`FullMemoryFeedback`].
pub struct EpsilonFeedback {
    dyn_: Dynamics,
    cfg: EpsilonStrategyConfig,
    state: Option<StrategyState>,
    sched: Option<(Partition, TestSchedule)>,
    name: String,
}

impl EpsilonFeedback {
    pub fn new(dyn_: Dynamics, cfg: EpsilonStrategyConfig) -> Result<Self> {
        cfg.validate(&dyn_)?;
        Ok(Self {
            dyn_,
            cfg,
            state: None,
            sched: None,
            name: "ue".into(),
        })
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn state(&self) -> Option<&StrategyState> {
        self.state.as_ref()
    }

    fn schedule(&mut self, part: &Partition) -> Result<TestSchedule> {
        match &self.sched {
            Some((p, s)) if p == part => Ok(s.clone()),
            _ => {
                let s = TestSchedule::new(part, self.cfg.eps, self.cfg.test_controls.len())?;
                self.sched = Some((part.clone(), s.clone()));
                Ok(s)
            }
        }
    }
}

impl FullMemoryFeedback for EpsilonFeedback {
    fn control_block(&mut self, part: &Partition, history: &Trajectory, i: usize) -> Result<Signal> {
        let sched = self.schedule(part)?;
        if i == 0 {
            self.state = Some(StrategyState::new(
                history.start_time(),
                history.first_state().to_vec(),
                self.cfg.u_star.clone().unwrap_or_else(|| self.dyn_.controls()[0].clone()),
                self.cfg.v_star.clone().unwrap_or_else(|| self.dyn_.disturbances()[0].clone()),
            ));
        }
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Invalid("block 0 must be requested first".into()))?;
        ue_feedback_block(&self.dyn_, &self.cfg, state, history, part, &sched, i)
    }

    fn surrogates(&self) -> &[SurrogateRecord] {
        self.state.as_ref().map_or(&[], |s| &s.surrogates)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Settings of the single-test strategy.
#[derive(Clone)]
pub struct UStarConfig {
    /// Restricted control set the useful controls are chosen from.
    pub shift_set: Vec<Vec<f64>>,
    pub oracle: Arc<dyn TargetOracle>,
    pub substeps: usize,
    pub u_star: Option<Vec<f64>>,
    pub v_star: Option<Vec<f64>>,
}

/// One block of the single-test strategy: constant control over the whole
/// step, surrogate identified from the increment over the previous step
/// under the previous control.
pub fn ustar_feedback_block(
    dyn_: &Dynamics,
    cfg: &UStarConfig,
    state: &mut StrategyState,
    history: &Trajectory,
    part: &Partition,
    i: usize,
) -> Result<Signal> {
    if i >= part.steps() {
        return Err(Error::Invalid(format!("block {i} is past the last step")));
    }
    let (a, b) = (part.time(i), part.time(i + 1));
    if i == 0 {
        return Signal::constant(a, b, state.u_star.clone());
    }
    let prev = part.time(i - 1);
    state.extend_model(dyn_, part, i, cfg.substeps)?;
    let x_prev = history.require_sample(prev)?;
    let x_now = history.require_sample(a)?;
    let v_bar = identify_surrogate_single(dyn_, prev, a, x_prev, x_now, &state.u_prev)?.point;
    let s = cfg.oracle.shift_vector(a, &state.y_traj)?;
    let u = extremal_shift(dyn_, a, state.y_traj.last_state(), &v_bar, &s, &cfg.shift_set)?;
    state.record(i, a, v_bar, u.clone());
    Signal::constant(a, b, u)
}

/// Single-test strategy as a [`FullMemoryFeedback`].
pub struct UStarFeedback {
    dyn_: Dynamics,
    cfg: UStarConfig,
    state: Option<StrategyState>,
}

impl UStarFeedback {
    pub fn new(dyn_: Dynamics, cfg: UStarConfig) -> Result<Self> {
        if cfg.shift_set.is_empty() {
            return Err(Error::Invalid("the shift set is empty".into()));
        }
        if let Some(bad) = cfg.shift_set.iter().find(|u| !dyn_.control_set().contains(u, 1e-12)) {
            return Err(Error::Invalid(format!("control {bad:?} lies outside the control set")));
        }
        Ok(Self {
            dyn_,
            cfg,
            state: None,
        })
    }

    pub fn state(&self) -> Option<&StrategyState> {
        self.state.as_ref()
    }
}

impl FullMemoryFeedback for UStarFeedback {
    fn control_block(&mut self, part: &Partition, history: &Trajectory, i: usize) -> Result<Signal> {
        if i == 0 {
            self.state = Some(StrategyState::new(
                history.start_time(),
                history.first_state().to_vec(),
                self.cfg.u_star.clone().unwrap_or_else(|| self.dyn_.controls()[0].clone()),
                self.cfg.v_star.clone().unwrap_or_else(|| self.dyn_.disturbances()[0].clone()),
            ));
        }
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Invalid("block 0 must be requested first".into()))?;
        ustar_feedback_block(&self.dyn_, &self.cfg, state, history, part, i)
    }

    fn surrogates(&self) -> &[SurrogateRecord] {
        self.state.as_ref().map_or(&[], |s| &s.surrogates)
    }

    fn name(&self) -> &str {
        "ustar"
    }
}

/// Source of the disturbance, one partition step at a time. Open-loop
/// signals ignore the history; feedback adversaries may read it.
pub trait DisturbanceProcess {
    /// Disturbance on `[τ_i, τ_{i+1})` given the motion on `[t0, τ_i]` and
    /// the control applied before `τ_i` (`None` at `i = 0`).
    fn disturbance_block(
        &mut self,
        part: &Partition,
        history: &Trajectory,
        applied: Option<&Signal>,
        i: usize,
    ) -> Result<Signal>;
}

/// An open-loop disturbance.
pub struct OpenLoop<'a>(pub &'a Signal);

impl DisturbanceProcess for OpenLoop<'_> {
    fn disturbance_block(&mut self, part: &Partition, _h: &Trajectory, _a: Option<&Signal>, i: usize) -> Result<Signal> {
        self.0.restrict(part.time(i), part.time(i + 1))
    }
}

/// Realized motion, control and disturbance of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    pub control: Signal,
    pub disturbance: Signal,
    pub surrogates: Vec<SurrogateRecord>,
}

/// Motion generated by `feedback` against the open-loop disturbance `v`.
pub fn simulate_closed_loop(
    dyn_: &Dynamics,
    part: &Partition,
    feedback: &mut dyn FullMemoryFeedback,
    v: &Signal,
    z0: &[f64],
    substeps: usize,
) -> Result<ClosedLoopRun> {
    v.validate_in(dyn_.disturbance_set(), part.t0(), part.theta())?;
    simulate_with_process(dyn_, part, feedback, &mut OpenLoop(v), z0, substeps)
}

/// Alternates feedback blocks, disturbance blocks and integration.
pub fn simulate_with_process(
    dyn_: &Dynamics,
    part: &Partition,
    feedback: &mut dyn FullMemoryFeedback,
    disturbance: &mut dyn DisturbanceProcess,
    z0: &[f64],
    substeps: usize,
) -> Result<ClosedLoopRun> {
    if z0.len() != dyn_.n() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: dyn_.n(),
            got: z0.len(),
        });
    }
    let tol = 1e-12 * (1.0 + dyn_.theta().abs());
    if (part.t0() - dyn_.t0()).abs() > tol || (part.theta() - dyn_.theta()).abs() > tol {
        return Err(Error::Invalid(format!(
            "partition spans [{}, {}] but the horizon is [{}, {}]",
            part.t0(),
            part.theta(),
            dyn_.t0(),
            dyn_.theta()
        )));
    }
    let mut history = Trajectory::new(part.t0(), z0.to_vec());
    let mut control: Option<Signal> = None;
    let mut realized: Option<Signal> = None;
    for i in 0..part.steps() {
        let (a, b) = (part.time(i), part.time(i + 1));
        let u = feedback.control_block(part, &history, i)?;
        if (u.start() - a).abs() > tol || (u.end() - b).abs() > tol {
            return Err(Error::Invalid(format!(
                "feedback returned a control on [{}, {}] for block [{a}, {b}]",
                u.start(),
                u.end()
            )));
        }
        if let Some(bad) = u.values().iter().find(|c| !dyn_.control_set().contains(c, 1e-9)) {
            return Err(Error::Invalid(format!("feedback emitted inadmissible control {bad:?}")));
        }
        let v = disturbance.disturbance_block(part, &history, control.as_ref(), i)?;
        let seg = integrate_span(dyn_, a, b, history.last_state(), &u, &v, substeps)?;
        history.extend(&seg)?;
        match control.as_mut() {
            Some(c) => c.append(&u)?,
            None => control = Some(u),
        }
        match realized.as_mut() {
            Some(r) => r.append(&v)?,
            None => realized = Some(v),
        }
    }
    Ok(ClosedLoopRun {
        trajectory: history,
        control: control.expect("partition has at least one step"),
        disturbance: realized.expect("partition has at least one step"),
        surrogates: feedback.surrogates().to_vec(),
    })
}
