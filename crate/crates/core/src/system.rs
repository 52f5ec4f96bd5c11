//! The controlled system `dx/dt = f(t, x, u, v)` with compact control and
//! disturbance sets.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{dist, norm};

/// Right-hand side of the system. Implementations write `f(t, x, u, v)`
/// into `dx`, which has length `n`.
pub trait RightHandSide: Send + Sync {
    fn eval(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], dx: &mut [f64]);
}

impl<F> RightHandSide for F
where
    F: Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], dx: &mut [f64]) {
        self(t, x, u, v, dx)
    }
}

/// A compact subset of R^d, either listed point by point or given as a box
/// that is discretized when enumeration is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CompactSet {
    Finite(Vec<Vec<f64>>),
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        /// Grid points per coordinate used for enumeration.
        resolution: usize,
    },
}

impl CompactSet {
    pub fn finite(points: Vec<Vec<f64>>) -> Result<Self> {
        let set = CompactSet::Finite(points);
        set.validate()?;
        Ok(set)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>, resolution: usize) -> Result<Self> {
        let set = CompactSet::Box {
            lower,
            upper,
            resolution,
        };
        set.validate()?;
        Ok(set)
    }

    /// `{-1, 1}^dim`, listed lexicographically.
    pub fn signs(dim: usize) -> Self {
        CompactSet::Finite(lex_grid(&vec![vec![-1.0, 1.0]; dim]))
    }

    pub fn dim(&self) -> usize {
        match self {
            CompactSet::Finite(points) => points.first().map_or(0, Vec::len),
            CompactSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CompactSet::Finite(points) => {
                let Some(first) = points.first() else {
                    return Err(Error::Invalid("finite set is empty".into()));
                };
                if first.is_empty() {
                    return Err(Error::Invalid("finite set has zero-dimensional points".into()));
                }
                for p in points {
                    if p.len() != first.len() {
                        return Err(Error::Dimension {
                            what: "finite set point",
                            expected: first.len(),
                            got: p.len(),
                        });
                    }
                    if p.iter().any(|c| !c.is_finite()) {
                        return Err(Error::Invalid(format!("non-finite point {p:?}")));
                    }
                }
                Ok(())
            }
            CompactSet::Box {
                lower,
                upper,
                resolution,
            } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::Invalid(format!(
                        "box bounds have lengths {} and {}",
                        lower.len(),
                        upper.len()
                    )));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "box needs finite lower <= upper, got {lower:?} / {upper:?}"
                    )));
                }
                if *resolution < 2 {
                    return Err(Error::Invalid(format!(
                        "box resolution must be at least 2, got {resolution}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Deterministic enumeration: a finite set is returned in its listed
    /// order, a box as a uniform grid in lexicographic order (first
    /// coordinate varies slowest). Degenerate box coordinates contribute a
    /// single value.
    pub fn enumerate(&self) -> Vec<Vec<f64>> {
        match self {
            CompactSet::Finite(points) => points.clone(),
            CompactSet::Box {
                lower,
                upper,
                resolution,
            } => {
                let axes: Vec<Vec<f64>> = lower
                    .iter()
                    .zip(upper)
                    .map(|(&l, &u)| axis_points(l, u, *resolution))
                    .collect();
                lex_grid(&axes)
            }
        }
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        match self {
            CompactSet::Finite(points) => points.iter().any(|p| dist(p, point) <= tol),
            CompactSet::Box { lower, upper, .. } => {
                point.len() == lower.len()
                    && point
                        .iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(c, (l, u))| *c >= l - tol && *c <= u + tol)
            }
        }
    }
}

pub(crate) fn axis_points(lower: f64, upper: f64, count: usize) -> Vec<f64> {
    if lower == upper || count < 2 {
        return vec![lower];
    }
    let step = (upper - lower) / (count - 1) as f64;
    (0..count)
        .map(|k| if k + 1 == count { upper } else { lower + k as f64 * step })
        .collect()
}

/// Cartesian product of per-axis values, first axis slowest.
pub(crate) fn lex_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &c in axis {
                let mut p = prefix.clone();
                p.push(c);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Axis-aligned box the motions must stay in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundingBox {
    /// Box exactly as given.
    pub fn exact(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Invalid(format!(
                "bounding box needs lower < upper, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Configured box widened by 10% of its width on each side.
    pub fn with_margin(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self::exact(lower, upper)?;
        let (lower, upper) = b
            .lower
            .iter()
            .zip(&b.upper)
            .map(|(l, u)| {
                let m = 0.1 * (u - l);
                (l - m, u + m)
            })
            .unzip();
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(c, (l, u))| *c >= *l && *c <= *u)
    }
}

/// The controlled system together with its constraint sets and horizon.
#[derive(Clone)]
pub struct Dynamics {
    n: usize,
    p: usize,
    q: usize,
    rhs: Arc<dyn RightHandSide>,
    control_set: CompactSet,
    disturbance_set: CompactSet,
    controls: Arc<Vec<Vec<f64>>>,
    disturbances: Arc<Vec<Vec<f64>>>,
    pub growth_k: f64,
    pub lipschitz_l: f64,
    t0: f64,
    theta: f64,
    bounds: Option<BoundingBox>,
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dynamics")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("q", &self.q)
            .field("control_set", &self.control_set)
            .field("disturbance_set", &self.disturbance_set)
            .field("horizon", &(self.t0, self.theta))
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

impl Dynamics {
    pub fn new(
        n: usize,
        rhs: impl RightHandSide + 'static,
        control_set: CompactSet,
        disturbance_set: CompactSet,
        horizon: (f64, f64),
    ) -> Result<Self> {
        control_set.validate()?;
        disturbance_set.validate()?;
        if n == 0 {
            return Err(Error::Invalid("state dimension must be positive".into()));
        }
        let (t0, theta) = horizon;
        if !(t0 < theta) || !t0.is_finite() || !theta.is_finite() {
            return Err(Error::Invalid(format!("horizon [{t0}, {theta}] is empty")));
        }
        let controls = Arc::new(control_set.enumerate());
        let disturbances = Arc::new(disturbance_set.enumerate());
        Ok(Self {
            n,
            p: control_set.dim(),
            q: disturbance_set.dim(),
            rhs: Arc::new(rhs),
            control_set,
            disturbance_set,
            controls,
            disturbances,
            growth_k: f64::INFINITY,
            lipschitz_l: f64::INFINITY,
            t0,
            theta,
            bounds: None,
        })
    }

    pub fn with_constants(mut self, growth_k: f64, lipschitz_l: f64) -> Self {
        self.growth_k = growth_k;
        self.lipschitz_l = lipschitz_l;
        self
    }

    pub fn with_bounds(mut self, bounds: BoundingBox) -> Result<Self> {
        if bounds.lower.len() != self.n {
            return Err(Error::Dimension {
                what: "bounding box",
                expected: self.n,
                got: bounds.lower.len(),
            });
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    /// Same system with a different control set (e.g. a finer grid).
    pub fn with_control_set(mut self, set: CompactSet) -> Result<Self> {
        set.validate()?;
        if set.dim() != self.p {
            return Err(Error::Dimension {
                what: "control set",
                expected: self.p,
                got: set.dim(),
            });
        }
        self.controls = Arc::new(set.enumerate());
        self.control_set = set;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn bounds(&self) -> Option<&BoundingBox> {
        self.bounds.as_ref()
    }
    pub fn control_set(&self) -> &CompactSet {
        &self.control_set
    }
    pub fn disturbance_set(&self) -> &CompactSet {
        &self.disturbance_set
    }
    /// Enumerated control set, in the deterministic tie-break order.
    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }
    /// Enumerated disturbance set, in the deterministic tie-break order.
    pub fn disturbances(&self) -> &[Vec<f64>] {
        &self.disturbances
    }

    #[inline]
    pub fn eval_into(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], dx: &mut [f64]) {
        self.rhs.eval(t, x, u, v, dx)
    }

    pub fn f(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.n];
        self.rhs.eval(t, x, u, v, &mut dx);
        dx
    }

    /// First sampled violation of `|f| <= K (1 + |x|)` over the given
    /// (t, x) samples and the enumerated control and disturbance sets.
    pub fn growth_violation(&self, samples: &[(f64, Vec<f64>)]) -> Option<(f64, Vec<f64>)> {
        for (t, x) in samples {
            let bound = self.growth_k * (1.0 + norm(x)) * (1.0 + 1e-12);
            for u in self.controls.iter() {
                for v in self.disturbances.iter() {
                    if norm(&self.f(*t, x, u, v)) > bound {
                        return Some((*t, x.clone()));
                    }
                }
            }
        }
        None
    }

    /// Largest observed ratio `|f(t,x,u,v) - f(t,x',u,v)| / |x - x'|` over
    /// all sample pairs sharing the same time.
    pub fn sampled_lipschitz(&self, samples: &[(f64, Vec<f64>)]) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, (ta, xa)) in samples.iter().enumerate() {
            for (tb, xb) in &samples[a + 1..] {
                if ta != tb {
                    continue;
                }
                let dx = dist(xa, xb);
                if dx == 0.0 {
                    continue;
                }
                for u in self.controls.iter() {
                    for v in self.disturbances.iter() {
                        let df = dist(&self.f(*ta, xa, u, v), &self.f(*ta, xb, u, v));
                        worst = worst.max(df / dx);
                    }
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_enumeration_is_lexicographic() {
        let set = CompactSet::boxed(vec![-1.0, 0.0], vec![1.0, 1.0], 2).unwrap();
        assert_eq!(
            set.enumerate(),
            vec![
                vec![-1.0, 0.0],
                vec![-1.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
        assert_eq!(CompactSet::signs(2).enumerate(), set_signs());
    }

    fn set_signs() -> Vec<Vec<f64>> {
        vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
        ]
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(CompactSet::finite(vec![]).is_err());
        assert!(CompactSet::boxed(vec![1.0], vec![0.0], 3).is_err());
        assert!(CompactSet::boxed(vec![0.0], vec![1.0], 1).is_err());
        assert!(CompactSet::finite(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn margin_widens_by_ten_percent() {
        let b = BoundingBox::with_margin(vec![-1.0], vec![1.0]).unwrap();
        assert!((b.lower[0] + 1.2).abs() < 1e-15);
        assert!((b.upper[0] - 1.2).abs() < 1e-15);
        assert!(b.contains(&[1.1]));
        assert!(!b.contains(&[1.3]));
    }

    #[test]
    fn growth_and_lipschitz_sampling() {
        let dyn_ = Dynamics::new(
            1,
            |_t: f64, x: &[f64], u: &[f64], _v: &[f64], dx: &mut [f64]| dx[0] = u[0] * x[0],
            CompactSet::boxed(vec![-1.0], vec![1.0], 3).unwrap(),
            CompactSet::signs(1),
            (0.0, 1.0),
        )
        .unwrap()
        .with_constants(1.0, 1.0);
        let samples: Vec<_> = (-4..=4).map(|k| (0.0, vec![k as f64 * 0.25])).collect();
        assert!(dyn_.growth_violation(&samples).is_none());
        assert!((dyn_.sampled_lipschitz(&samples) - 1.0).abs() < 1e-12);
        let tight = dyn_.clone().with_constants(0.25, 1.0);
        assert!(tight.growth_violation(&samples).is_some());
    }
}
