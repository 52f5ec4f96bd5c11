//! Grid approximation of the lower (max-min) game value.
//!
//! The table is built by backward recursion on a uniform time grid:
//!
//! ```text
//! V(t_N, x) = γ(x)
//! V(t_k, x) = max_v min_u V(t_{k+1}, x + f(t_k, x, u, v) Δt)
//! ```
//!
//! with multilinear interpolation between state nodes and clamping to the
//! grid box. The disturbance moves first and the control answers it, which
//! is the information pattern of a quasi-strategy. Swapping the order gives
//! the upper value, available through [`dp_upper_value`] for comparison.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{axis_points, Dynamics};

/// Relative position tolerance under which a coordinate counts as a node.
const SNAP: f64 = 1e-9;

/// Geometry of a value table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of time steps `N_t`; the table has `N_t + 1` levels.
    pub time_steps: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Nodes per state axis.
    pub nodes: Vec<usize>,
}

impl GridSpec {
    /// 100 time steps and 41 nodes per axis over the given box.
    pub fn with_defaults(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = lower.len();
        Self {
            time_steps: 100,
            lower,
            upper,
            nodes: vec![41; n],
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.lower.len();
        if n == 0 || n > 3 {
            return Err(Error::Invalid(format!(
                "value tables support 1 to 3 state dimensions, got {n}"
            )));
        }
        if self.upper.len() != n || self.nodes.len() != n {
            return Err(Error::Invalid("grid bounds and node counts differ in length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Invalid("grid box needs lower < upper".into()));
        }
        if self.nodes.iter().any(|&m| m < 3) {
            return Err(Error::Invalid("at least 3 nodes per axis are required".into()));
        }
        if self.time_steps == 0 {
            return Err(Error::Invalid("at least one time step is required".into()));
        }
        Ok(())
    }
}

/// Time-indexed grid of game values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    t0: f64,
    theta: f64,
    spec: GridSpec,
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    node_count: usize,
    /// `values[k * node_count + flat]`, flat index row-major (last axis fastest).
    values: Vec<f64>,
}

impl ValueTable {
    fn empty(t0: f64, theta: f64, spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let axes: Vec<Vec<f64>> = spec
            .lower
            .iter()
            .zip(&spec.upper)
            .zip(&spec.nodes)
            .map(|((&l, &u), &m)| axis_points(l, u, m))
            .collect();
        let n = axes.len();
        let mut strides = vec![1; n];
        for a in (0..n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * spec.nodes[a + 1];
        }
        let node_count = spec.nodes.iter().product();
        Ok(Self {
            t0,
            theta,
            values: vec![0.0; (spec.time_steps + 1) * node_count],
            spec,
            axes,
            strides,
            node_count,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.spec.time_steps {
            self.theta
        } else {
            self.t0 + (self.theta - self.t0) * k as f64 / self.spec.time_steps as f64
        }
    }

    pub fn cell(&self, axis: usize) -> f64 {
        (self.spec.upper[axis] - self.spec.lower[axis]) / (self.spec.nodes[axis] - 1) as f64
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.axes[a][(flat / self.strides[a]) % self.spec.nodes[a]])
            .collect()
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.values[k * self.node_count..(k + 1) * self.node_count]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(a, &c)| {
                let slack = SNAP * self.cell(a);
                c >= self.spec.lower[a] - slack && c <= self.spec.upper[a] + slack
            })
    }

    /// Continuous grid index of `c` on `axis`, clamped, snapped to nodes.
    fn position(&self, axis: usize, c: f64) -> (usize, f64) {
        let m = self.spec.nodes[axis];
        let pos = ((c - self.spec.lower[axis]) / self.cell(axis)).clamp(0.0, (m - 1) as f64);
        let pos = if (pos - pos.round()).abs() < SNAP { pos.round() } else { pos };
        let i0 = (pos.floor() as usize).min(m - 2);
        (i0, pos - i0 as f64)
    }

    /// Multilinear interpolation on level `k`, clamped to the box.
    pub fn interpolate_level(&self, k: usize, x: &[f64]) -> f64 {
        let n = self.dim();
        let level = self.level(k);
        let mut base = 0;
        let mut weights = [0.0; 3];
        for a in 0..n {
            let (i0, w) = self.position(a, x[a]);
            base += i0 * self.strides[a];
            weights[a] = w;
        }
        // Gather the 2^n corners (bit a set = upper neighbour on axis a),
        // then collapse one axis at a time, last axis first.
        let mut corners = [0.0; 8];
        for (mask, slot) in corners.iter_mut().enumerate().take(1 << n) {
            let mut flat = base;
            for a in 0..n {
                if mask & (1 << (n - 1 - a)) != 0 {
                    flat += self.strides[a];
                }
            }
            *slot = level[flat];
        }
        let mut len = 1 << n;
        for a in (0..n).rev() {
            len /= 2;
            for c in 0..len {
                corners[c] = lerp(corners[2 * c], corners[2 * c + 1], weights[a]);
            }
        }
        corners[0]
    }

    /// Value at `(t, x)`, linear in time between levels.
    pub fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OutsideTable { x: x.to_vec() });
        }
        let (k, w) = self.time_position(t)?;
        let a = self.interpolate_level(k, x);
        if w == 0.0 {
            return Ok(a);
        }
        Ok(lerp(a, self.interpolate_level(k + 1, x), w))
    }

    fn time_position(&self, t: f64) -> Result<(usize, f64)> {
        let span = self.theta - self.t0;
        let steps = self.spec.time_steps;
        let pos = (t - self.t0) / span * steps as f64;
        if !(pos >= -SNAP && pos <= steps as f64 + SNAP) {
            return Err(Error::OutsideHorizon {
                t,
                t0: self.t0,
                theta: self.theta,
            });
        }
        let pos = pos.clamp(0.0, steps as f64);
        let pos = if (pos - pos.round()).abs() < SNAP { pos.round() } else { pos };
        let k = (pos.floor() as usize).min(steps);
        if k == steps {
            return Ok((k, 0.0));
        }
        Ok((k, pos - k as f64))
    }

    /// Writes the table as text: a geometry header followed by one
    /// comma-separated row of node values per time level.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let join = |v: &[f64]| v.iter().map(|c| format!("{c:.16e}")).collect::<Vec<_>>().join(",");
        writeln!(out, "value_table,1")?;
        writeln!(out, "t0,{:.16e}", self.t0)?;
        writeln!(out, "theta,{:.16e}", self.theta)?;
        writeln!(out, "time_steps,{}", self.spec.time_steps)?;
        writeln!(out, "dims,{}", self.dim())?;
        writeln!(out, "lower,{}", join(&self.spec.lower))?;
        writeln!(out, "upper,{}", join(&self.spec.upper))?;
        writeln!(
            out,
            "nodes,{}",
            self.spec.nodes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        )?;
        writeln!(out, "values")?;
        for k in 0..=self.spec.time_steps {
            writeln!(out, "{}", join(self.level(k)))?;
        }
        Ok(())
    }

    /// Reads what [`ValueTable::write_csv`] wrote; lines starting with `#`
    /// are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.starts_with('#')));
        let mut next = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Invalid(format!("value table truncated before `{key}`")))?
                .map_err(|e| Error::Invalid(e.to_string()))?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::Invalid(format!("expected `{key}`, found `{line}`")))?;
            Ok(rest.trim_start_matches(',').to_string())
        };
        let floats = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Invalid(format!("{c}: {e}"))))
                .collect()
        };
        let usize_of = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Invalid(e.to_string()));
        if next("value_table")? != "1" {
            return Err(Error::Invalid("unsupported value table version".into()));
        }
        let t0 = floats(&next("t0")?)?[0];
        let theta = floats(&next("theta")?)?[0];
        let time_steps = usize_of(&next("time_steps")?)?;
        let dims = usize_of(&next("dims")?)?;
        let lower = floats(&next("lower")?)?;
        let upper = floats(&next("upper")?)?;
        let nodes = next("nodes")?
            .split(',')
            .map(usize_of)
            .collect::<Result<Vec<_>>>()?;
        next("values")?;
        if lower.len() != dims {
            return Err(Error::Invalid("value table header is inconsistent".into()));
        }
        let mut table = ValueTable::empty(
            t0,
            theta,
            GridSpec {
                time_steps,
                lower,
                upper,
                nodes,
            },
        )?;
        for k in 0..=time_steps {
            let row = floats(&next("")?)?;
            if row.len() != table.node_count {
                return Err(Error::Invalid(format!(
                    "level {k} has {} values, expected {}",
                    row.len(),
                    table.node_count
                )));
            }
            let nc = table.node_count;
            table.values[k * nc..(k + 1) * nc].copy_from_slice(&row);
        }
        Ok(table)
    }

    /// Table whose every level equals `f` at the nodes; handy for synthetic
    /// oracles.
    pub fn from_fn(t0: f64, theta: f64, spec: GridSpec, f: impl Fn(f64, &[f64]) -> f64) -> Result<Self> {
        let mut table = ValueTable::empty(t0, theta, spec)?;
        let nc = table.node_count;
        for k in 0..=table.spec.time_steps {
            let t = table.time(k);
            for flat in 0..nc {
                table.values[k * nc + flat] = f(t, &table.node(flat));
            }
        }
        Ok(table)
    }
}

#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    if w == 0.0 {
        a
    } else if w == 1.0 {
        b
    } else {
        a + w * (b - a)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Order {
    /// Disturbance first: `max_v min_u`.
    Lower,
    /// Control first: `min_u max_v`.
    Upper,
}

/// Lower (max-min) value table for a terminal cost.
pub fn dp_quasi_value(
    dyn_: &Dynamics,
    terminal_cost: &(dyn Fn(&[f64]) -> f64 + Sync),
    grid: &GridSpec,
) -> Result<ValueTable> {
    dp(dyn_, terminal_cost, grid, Order::Lower)
}

/// Upper (min-max) value table; dominates [`dp_quasi_value`] pointwise.
pub fn dp_upper_value(
    dyn_: &Dynamics,
    terminal_cost: &(dyn Fn(&[f64]) -> f64 + Sync),
    grid: &GridSpec,
) -> Result<ValueTable> {
    dp(dyn_, terminal_cost, grid, Order::Upper)
}

fn dp(
    dyn_: &Dynamics,
    terminal_cost: &(dyn Fn(&[f64]) -> f64 + Sync),
    grid: &GridSpec,
    order: Order,
) -> Result<ValueTable> {
    if grid.lower.len() != dyn_.n() {
        return Err(Error::Dimension {
            what: "value grid",
            expected: dyn_.n(),
            got: grid.lower.len(),
        });
    }
    let mut table = ValueTable::empty(dyn_.t0(), dyn_.theta(), grid.clone())?;
    if dyn_.disturbances().is_empty() || dyn_.controls().is_empty() {
        return Err(Error::EmptyEnumeration);
    }
    let nc = table.node_count;
    let last = grid.time_steps;
    for flat in 0..nc {
        table.values[last * nc + flat] = terminal_cost(&table.node(flat));
    }
    let dt = (dyn_.theta() - dyn_.t0()) / grid.time_steps as f64;
    let n = dyn_.n();
    let us = dyn_.controls();
    let vs = dyn_.disturbances();
    let cells: Vec<f64> = (0..n).map(|a| table.cell(a)).collect();

    for k in (0..last).rev() {
        let t = table.time(k);
        let tref = &table;
        let level: Vec<f64> = (0..nc)
            .into_par_iter()
            .map(|flat| -> Result<f64> {
                let x = tref.node(flat);
                let mut dx = vec![0.0; n];
                let mut next = vec![0.0; n];
                // payoff[u][v]
                let mut payoff = vec![0.0; us.len() * vs.len()];
                for (iu, u) in us.iter().enumerate() {
                    for (iv, v) in vs.iter().enumerate() {
                        dyn_.eval_into(t, &x, u, v, &mut dx);
                        for a in 0..n {
                            next[a] = x[a] + dx[a] * dt;
                            let over = (grid.lower[a] - next[a]).max(next[a] - grid.upper[a]);
                            if over > cells[a] * (1.0 + SNAP) || !next[a].is_finite() {
                                return Err(Error::GridTooCoarse { x: x.clone() });
                            }
                        }
                        payoff[iu * vs.len() + iv] = tref.interpolate_level(k + 1, &next);
                    }
                }
                let m = vs.len();
                Ok(match order {
                    Order::Lower => (0..m)
                        .map(|iv| (0..us.len()).map(|iu| payoff[iu * m + iv]).fold(f64::INFINITY, f64::min))
                        .fold(f64::NEG_INFINITY, f64::max),
                    Order::Upper => (0..us.len())
                        .map(|iu| payoff[iu * m..(iu + 1) * m].iter().copied().fold(f64::NEG_INFINITY, f64::max))
                        .fold(f64::INFINITY, f64::min),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        table.values[k * nc..(k + 1) * nc].copy_from_slice(&level);
    }
    Ok(table)
}

/// Central-difference gradient of `V(t, ·)` at `y`, one cell per axis
/// (one-sided at the box faces). At nodes the probes are the neighbouring
/// nodes themselves.
pub fn value_shift_vector(table: &ValueTable, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    if !table.contains(y) {
        return Err(Error::OutsideTable { x: y.to_vec() });
    }
    let mut grad = Vec::with_capacity(table.dim());
    for a in 0..table.dim() {
        let h = table.cell(a);
        let (lo, hi) = (table.spec.lower[a], table.spec.upper[a]);
        let (i0, w) = table.position(a, y[a]);
        let (left, right) = if w == 0.0 || w == 1.0 {
            let k = if w == 0.0 { i0 } else { i0 + 1 };
            let l = k.saturating_sub(1);
            let r = (k + 1).min(table.spec.nodes[a] - 1);
            (table.axes[a][l], table.axes[a][r])
        } else {
            ((y[a] - h).max(lo), (y[a] + h).min(hi))
        };
        let mut pl = y.to_vec();
        let mut pr = y.to_vec();
        pl[a] = left;
        pr[a] = right;
        grad.push((table.value(t, &pr)? - table.value(t, &pl)?) / (right - left));
    }
    Ok(grad)
}
