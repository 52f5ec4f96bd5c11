//! Dynamic inversion: recovering a surrogate disturbance from observed state
//! increments, and the sampled structural checks that make the recovery
//! sufficient for control.
//!
//! All searches run over the deterministic enumeration of the disturbance
//! set held by [`Dynamics`]; ties resolve to the lowest enumeration index.
//! The checkers sample `(t, x)` (and shift directions `s`) and report the
//! first counterexample they meet; a pass is evidence over the sampled grid,
//! not a proof.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::partition::TestSchedule;
use crate::system::{axis_points, lex_grid, Dynamics};
use crate::trajectory::Trajectory;
use crate::vecmath::{dist, dot, norm};

/// Relative slack used to decide that two objective values tie.
const TIE_TOL: f64 = 1e-12;

pub(crate) fn improves(candidate: f64, best: f64) -> bool {
    candidate < best - TIE_TOL * (1.0 + best.abs())
}

/// Divided differences `d_ij` of one test window, `j = 1..n_tests`.
#[derive(Debug, Clone, PartialEq)]
pub struct DividedDifferences(pub Vec<Vec<f64>>);

impl DividedDifferences {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `d_ij = (x(τ'_ij) - x(τ'_i(j-1))) / (τ'_ij - τ'_i(j-1))` for block `i`.
pub fn divided_differences(x: &Trajectory, sched: &TestSchedule, i: usize) -> Result<DividedDifferences> {
    let instants = sched
        .instants(i)
        .ok_or_else(|| Error::Invalid(format!("block {i} has no test window")))?;
    let samples = instants
        .iter()
        .map(|&t| x.require_sample(t))
        .collect::<Result<Vec<_>>>()?;
    let diffs = instants
        .windows(2)
        .zip(samples.windows(2))
        .map(|(t, s)| {
            let dt = t[1] - t[0];
            s[1].iter().zip(s[0]).map(|(b, a)| (b - a) / dt).collect()
        })
        .collect();
    Ok(DividedDifferences(diffs))
}

/// An identified disturbance point and its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    /// Index in the disturbance enumeration.
    pub index: usize,
    pub point: Vec<f64>,
    pub residual: f64,
}

/// `v̄ ∈ argmin_v max_j |d_j - f(t, x, u_j, v)|` over the enumerated
/// disturbance set.
pub fn identify_surrogate_multi(
    dyn_: &Dynamics,
    t: f64,
    x: &[f64],
    test_controls: &[Vec<f64>],
    d: &DividedDifferences,
) -> Result<Surrogate> {
    if test_controls.len() != d.len() {
        return Err(Error::Invalid(format!(
            "{} test controls for {} divided differences",
            test_controls.len(),
            d.len()
        )));
    }
    argmin_disturbance(dyn_, |v| {
        test_controls
            .iter()
            .zip(&d.0)
            .map(|(u, dj)| dist(dj, &dyn_.f(t, x, u, v)))
            .fold(0.0, f64::max)
    })
}

/// `v̄ ∈ argmin_v |(x - x_prev) / (t - t_prev) - f(t, x, u_prev, v)|`.
pub fn identify_surrogate_single(
    dyn_: &Dynamics,
    t_prev: f64,
    t: f64,
    x_prev: &[f64],
    x: &[f64],
    u_prev: &[f64],
) -> Result<Surrogate> {
    let dt = t - t_prev;
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!(
            "identification needs t > t_prev, got {t_prev} -> {t}"
        )));
    }
    let slope: Vec<f64> = x.iter().zip(x_prev).map(|(b, a)| (b - a) / dt).collect();
    argmin_disturbance(dyn_, |v| dist(&slope, &dyn_.f(t, x, u_prev, v)))
}

fn argmin_disturbance(dyn_: &Dynamics, objective: impl Fn(&[f64]) -> f64) -> Result<Surrogate> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in dyn_.disturbances().iter().enumerate() {
        let r = objective(v);
        match best {
            Some((_, b)) if !improves(r, b) => {}
            _ => best = Some((k, r)),
        }
    }
    let (index, residual) = best.ok_or(Error::EmptyEnumeration)?;
    Ok(Surrogate {
        index,
        point: dyn_.disturbances()[index].clone(),
        residual,
    })
}

/// Partition of the enumerated disturbance set by the image
/// `v -> f(t, x, u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientClasses {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub tol_f: f64,
    /// Class label of each enumerated disturbance; labels are numbered in
    /// order of first appearance, so two partitions are equal iff their
    /// label vectors are.
    pub labels: Vec<usize>,
    /// Enumeration indices of each class.
    pub classes: Vec<Vec<usize>>,
}

impl QuotientClasses {
    pub fn class_of(&self, v_index: usize) -> &[usize] {
        &self.classes[self.labels[v_index]]
    }
}

/// Greedy clustering of the disturbance enumeration: each point joins the
/// first class whose members all have an f-image within `tol_f` of its own,
/// and opens a new class otherwise.
pub fn quotient_classes(dyn_: &Dynamics, t: f64, x: &[f64], u: &[f64], tol_f: f64) -> Result<QuotientClasses> {
    let vs = dyn_.disturbances();
    if vs.is_empty() {
        return Err(Error::EmptyEnumeration);
    }
    let images: Vec<Vec<f64>> = vs.iter().map(|v| dyn_.f(t, x, u, v)).collect();
    let mut labels = Vec::with_capacity(vs.len());
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (k, img) in images.iter().enumerate() {
        let found = classes
            .iter()
            .position(|members| members.iter().all(|&m| dist(&images[m], img) <= tol_f));
        match found {
            Some(c) => {
                classes[c].push(k);
                labels.push(c);
            }
            None => {
                labels.push(classes.len());
                classes.push(vec![k]);
            }
        }
    }
    Ok(QuotientClasses {
        t,
        x: x.to_vec(),
        u: u.to_vec(),
        tol_f,
        labels,
        classes,
    })
}

/// `1e-9 (1 + max |f|)` over the samples and both enumerations.
pub fn default_tol_f(dyn_: &Dynamics, samples: &[(f64, Vec<f64>)]) -> f64 {
    let mut biggest: f64 = 0.0;
    for (t, x) in samples {
        for u in dyn_.controls() {
            for v in dyn_.disturbances() {
                biggest = biggest.max(norm(&dyn_.f(*t, x, u, v)));
            }
        }
    }
    1e-9 * (1.0 + biggest)
}

/// Uniform grid over a box, `per_axis` points per coordinate.
pub fn state_grid(lower: &[f64], upper: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| axis_points(l, u, per_axis))
        .collect();
    lex_grid(&axes)
}

/// Normalized nonzero vectors of `{-1, 0, 1}^n`: all axis and diagonal
/// directions.
pub fn unit_directions(n: usize) -> Vec<Vec<f64>> {
    lex_grid(&vec![vec![-1.0, 0.0, 1.0]; n])
        .into_iter()
        .filter(|s| s.iter().any(|&c| c != 0.0))
        .map(|s| {
            let len = norm(&s);
            s.into_iter().map(|c| c / len).collect()
        })
        .collect()
}

/// Counterexample or worst point found by a checker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_alt: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    /// Which clause failed, when a check has several.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clause: Option<String>,
}

impl Witness {
    fn at(t: f64, x: &[f64]) -> Self {
        Self {
            t,
            x: x.to_vec(),
            u: None,
            v: None,
            v_alt: None,
            s: None,
            clause: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub passed: bool,
    pub samples: usize,
    pub worst_gap: Option<f64>,
    pub witness: Option<Witness>,
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(",")
}

impl CheckReport {
    /// Line-oriented `key=value` rendering.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "check={}", self.check);
        let _ = writeln!(out, "result={}", if self.passed { "pass" } else { "fail" });
        let _ = writeln!(out, "samples={}", self.samples);
        if let Some(g) = self.worst_gap {
            let _ = writeln!(out, "worst_gap={g}");
        }
        if let Some(w) = &self.witness {
            let _ = writeln!(out, "witness_t={}", w.t);
            let _ = writeln!(out, "witness_x={}", fmt_vec(&w.x));
            for (key, val) in [("u", &w.u), ("v", &w.v), ("v_alt", &w.v_alt), ("s", &w.s)] {
                if let Some(val) = val {
                    let _ = writeln!(out, "witness_{key}={}", fmt_vec(val));
                }
            }
            if let Some(c) = &w.clause {
                let _ = writeln!(out, "witness_clause={c}");
            }
        }
        out
    }
}

/// Checks, at every sample and every probe control `u`, that the classes of
/// the test set refine those of `u`:
/// `∩_j q_{t x ū_j}(v) ⊆ q_{t x u}(v)` for every enumerated `v`.
pub fn check_assumption1(
    dyn_: &Dynamics,
    test_set: &[Vec<f64>],
    samples: &[(f64, Vec<f64>)],
    probe_controls: &[Vec<f64>],
    tol_f: f64,
) -> Result<CheckReport> {
    if test_set.is_empty() {
        return Err(Error::Invalid("the test set is empty".into()));
    }
    let per_sample: Vec<Result<Option<Witness>>> = samples
        .par_iter()
        .map(|(t, x)| {
            let tests = test_set
                .iter()
                .map(|u| quotient_classes(dyn_, *t, x, u, tol_f).map(|q| q.labels))
                .collect::<Result<Vec<_>>>()?;
            let m = dyn_.disturbances().len();
            for u in probe_controls {
                let probe = quotient_classes(dyn_, *t, x, u, tol_f)?.labels;
                for a in 0..m {
                    for b in 0..m {
                        let together = tests.iter().all(|l| l[a] == l[b]);
                        if together && probe[a] != probe[b] {
                            let mut w = Witness::at(*t, x);
                            w.u = Some(u.clone());
                            w.v = Some(dyn_.disturbances()[a].clone());
                            w.v_alt = Some(dyn_.disturbances()[b].clone());
                            return Ok(Some(w));
                        }
                    }
                }
            }
            Ok(None)
        })
        .collect();
    let mut witness = None;
    for r in per_sample {
        if let Some(w) = r? {
            witness = Some(w);
            break;
        }
    }
    Ok(CheckReport {
        check: "assumption1".into(),
        passed: witness.is_none(),
        samples: samples.len(),
        worst_gap: None,
        witness,
    })
}

/// Checks over samples `(t, x, s)`:
/// (a) for every `v`, some `ū ∈ p_bar` attains `min_{u ∈ P} <s, f(t,x,u,v)>`
///     within tolerance;
/// (b) the quotient classes at `(t, x, ū)` are the same for all `ū ∈ p_bar`.
///
/// `worst_gap` is the largest excess of the best `p_bar` value over the
/// minimum in clause (a).
pub fn check_assumption2(
    dyn_: &Dynamics,
    p_bar: &[Vec<f64>],
    samples: &[(f64, Vec<f64>, Vec<f64>)],
    tol_f: f64,
) -> Result<CheckReport> {
    if p_bar.is_empty() {
        return Err(Error::Invalid("the restricted control set is empty".into()));
    }
    let per_sample: Vec<Result<(f64, Option<Witness>)>> = samples
        .par_iter()
        .map(|(t, x, s)| {
            let tol = tol_f * (1.0 + norm(s));
            let mut worst: f64 = 0.0;
            let mut witness = None;
            for v in dyn_.disturbances() {
                let full = dyn_
                    .controls()
                    .iter()
                    .map(|u| dot(s, &dyn_.f(*t, x, u, v)))
                    .fold(f64::INFINITY, f64::min);
                let restricted = p_bar
                    .iter()
                    .map(|u| dot(s, &dyn_.f(*t, x, u, v)))
                    .fold(f64::INFINITY, f64::min);
                let gap = restricted - full;
                worst = worst.max(gap);
                if gap > tol && witness.is_none() {
                    let mut w = Witness::at(*t, x);
                    w.v = Some(v.clone());
                    w.s = Some(s.clone());
                    w.clause = Some("a".into());
                    witness = Some(w);
                }
            }
            if witness.is_none() {
                let first = quotient_classes(dyn_, *t, x, &p_bar[0], tol_f)?.labels;
                for u in &p_bar[1..] {
                    if quotient_classes(dyn_, *t, x, u, tol_f)?.labels != first {
                        let mut w = Witness::at(*t, x);
                        w.u = Some(u.clone());
                        w.v_alt = None;
                        w.clause = Some("b".into());
                        witness = Some(w);
                        break;
                    }
                }
            }
            Ok((worst, witness))
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut witness = None;
    for r in per_sample {
        let (g, w) = r?;
        worst = worst.max(g);
        if witness.is_none() {
            witness = w;
        }
    }
    Ok(CheckReport {
        check: "assumption2".into(),
        passed: witness.is_none(),
        samples: samples.len(),
        worst_gap: Some(worst),
        witness,
    })
}

/// `min_u max_v <s, f>` and `max_v min_u <s, f>` over the enumerations.
pub fn minmax_maxmin(dyn_: &Dynamics, t: f64, x: &[f64], s: &[f64]) -> (f64, f64) {
    let table: Vec<Vec<f64>> = dyn_
        .controls()
        .iter()
        .map(|u| {
            dyn_.disturbances()
                .iter()
                .map(|v| dot(s, &dyn_.f(t, x, u, v)))
                .collect()
        })
        .collect();
    let minmax = table
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    let maxmin = (0..dyn_.disturbances().len())
        .map(|j| table.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    (minmax, maxmin)
}

/// Pointwise saddle condition `min_u max_v <s,f> = max_v min_u <s,f>`,
/// within `tol`, at every sample. Reports the largest gap and where it
/// occurs (lowest sample index on ties).
pub fn check_saddle(dyn_: &Dynamics, samples: &[(f64, Vec<f64>, Vec<f64>)], tol: f64) -> CheckReport {
    let gaps: Vec<f64> = samples
        .par_iter()
        .map(|(t, x, s)| {
            let (minmax, maxmin) = minmax_maxmin(dyn_, *t, x, s);
            minmax - maxmin
        })
        .collect();
    let mut worst: Option<(usize, f64)> = None;
    for (k, &g) in gaps.iter().enumerate() {
        if worst.is_none_or(|(_, w)| g > w) {
            worst = Some((k, g));
        }
    }
    let worst_gap = worst.map(|(_, g)| g);
    let witness = worst.map(|(k, _)| {
        let (t, x, s) = &samples[k];
        let mut w = Witness::at(*t, x);
        w.s = Some(s.clone());
        w
    });
    CheckReport {
        check: "saddle".into(),
        passed: worst_gap.is_none_or(|g| g <= tol),
        samples: samples.len(),
        worst_gap,
        witness,
    }
}
