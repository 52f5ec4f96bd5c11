use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::{Adversary, DisturbanceEnsemble, Member};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::strategies::{simulate_closed_loop, simulate_with_process, ClosedLoopRun, FullMemoryFeedback};
use crate::system::Dynamics;
use crate::trajectory::Trajectory;

pub type CostFn<'a> = &'a (dyn Fn(&Trajectory) -> f64 + Sync);
pub type FeedbackFactory<'a> = &'a (dyn Fn() -> Result<Box<dyn FullMemoryFeedback>> + Sync);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberCost {
    pub id: String,
    /// `None` when the run failed.
    pub cost: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultEstimate {
    pub strategy: String,
    pub ensemble: String,
    pub diam: f64,
    pub eps: Option<f64>,
    pub sup_cost: f64,
    pub argmax: String,
    pub members: Vec<MemberCost>,
    /// Set when some members failed and were left out of the sup.
    pub partial: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions<'a> {
    pub strategy: &'a str,
    pub eps: Option<f64>,
    pub substeps: usize,
}

/// Runs one member to completion.
pub fn run_member(
    dyn_: &Dynamics,
    member: &Member,
    feedback: &mut dyn FullMemoryFeedback,
    part: &Partition,
    z0: &[f64],
    substeps: usize,
) -> Result<ClosedLoopRun> {
    match member {
        Member::OpenLoop(v) => simulate_closed_loop(dyn_, part, feedback, v, z0, substeps),
        Member::Adversary { table, mode } => {
            let mut adv = Adversary {
                dyn_,
                table,
                mode: *mode,
            };
            simulate_with_process(dyn_, part, feedback, &mut adv, z0, substeps)
        }
    }
}

/// Sup of the cost over the ensemble, each member played against a fresh
/// feedback. Members run in parallel; the maximum goes to the first member
/// in ensemble order on exact ties. Failed members are recorded and
/// skipped; if all fail the first error is returned.
pub fn estimate_guaranteed_result(
    dyn_: &Dynamics,
    cost: CostFn,
    factory: FeedbackFactory,
    ensemble: &DisturbanceEnsemble,
    part: &Partition,
    z0: &[f64],
    opts: EstimateOptions,
) -> Result<ResultEstimate> {
    let members = ensemble.members(dyn_)?;
    if members.is_empty() {
        return Err(Error::Invalid(format!("ensemble `{}` has no members", ensemble.id)));
    }
    let outcomes: Vec<Result<f64>> = members
        .par_iter()
        .map(|(_, m)| {
            let mut fb = factory()?;
            let run = run_member(dyn_, m, fb.as_mut(), part, z0, opts.substeps)?;
            let c = cost(&run.trajectory);
            if c.is_finite() {
                Ok(c)
            } else {
                Err(Error::NonFinite {
                    t: run.trajectory.end_time(),
                    x: run.trajectory.last_state().to_vec(),
                })
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut first_err = None;
    let mut records = Vec::with_capacity(members.len());
    for (k, ((id, _), out)) in members.iter().zip(outcomes).enumerate() {
        match out {
            Ok(c) => {
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((k, c));
                }
                records.push(MemberCost {
                    id: id.clone(),
                    cost: Some(c),
                    error: None,
                });
            }
            Err(e) => {
                warn!("member {id} of `{}` failed: {e}", ensemble.id);
                records.push(MemberCost {
                    id: id.clone(),
                    cost: None,
                    error: Some(e.to_string()),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((k, sup_cost)) = best else {
        return Err(first_err.expect("no successes implies an error"));
    };
    Ok(ResultEstimate {
        strategy: opts.strategy.to_string(),
        ensemble: ensemble.id.clone(),
        diam: part.diam(),
        eps: opts.eps,
        sup_cost,
        argmax: members[k].0.clone(),
        partial: first_err.is_some(),
        members: records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainViolation {
    /// 1 for `gq <= gp`, 2 for `gp <= gc`, 3 for `gc <= gs`.
    pub link: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub values: [f64; 4],
    pub tol: f64,
    pub passed: bool,
    pub violations: Vec<ChainViolation>,
}

/// Checks `gq <= gp <= gc <= gs`, each link up to `tol`.
pub fn chain_check(gq: f64, gp: f64, gc: f64, gs: f64, tol: f64) -> ChainReport {
    let values = [gq, gp, gc, gs];
    let violations: Vec<ChainViolation> = values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !(w[0] <= w[1] + tol))
        .map(|(k, w)| ChainViolation {
            link: k + 1,
            lhs: w[0],
            rhs: w[1],
            magnitude: w[0] - w[1],
        })
        .collect();
    ChainReport {
        values,
        tol,
        passed: violations.is_empty(),
        violations,
    }
}
