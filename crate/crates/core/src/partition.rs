//! Time partitions of the horizon and the test-action sub-grid placed at the
//! end of each partition step.

use crate::error::{Error, Result};

/// Relative tolerance used when comparing partition nodes.
const NODE_TOL: f64 = 1e-12;

/// A strictly increasing grid `t0 = τ_0 < τ_1 < ... < τ_n = ϑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Invalid("a partition needs at least two nodes".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("partition nodes must be finite".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("partition nodes must increase strictly".into()));
        }
        Ok(Self { times })
    }

    /// `steps` equal steps on `[t0, theta]`. The last node is exactly `theta`.
    pub fn uniform(t0: f64, theta: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Invalid("a partition needs at least one step".into()));
        }
        if !(t0 < theta) {
            return Err(Error::Invalid(format!("empty horizon [{t0}, {theta}]")));
        }
        let span = theta - t0;
        let times = (0..=steps)
            .map(|i| {
                if i == steps {
                    theta
                } else {
                    t0 + span * i as f64 / steps as f64
                }
            })
            .collect();
        Self::from_times(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// Number of steps `n_Δ`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn theta(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn diam(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        let span = self.theta() - self.t0();
        let h = span / self.steps() as f64;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * span)
    }

    /// `i_t = max { i : τ_i <= t }`. Times within a relative `1e-12` of a
    /// node count as that node.
    pub fn locate(&self, t: f64) -> Result<usize> {
        let (t0, theta) = (self.t0(), self.theta());
        let tol = NODE_TOL * (1.0 + t0.abs().max(theta.abs()));
        if !(t >= t0 - tol && t <= theta + tol) {
            return Err(Error::OutsideHorizon { t, t0, theta });
        }
        let idx = self.times.partition_point(|&tau| tau <= t + tol);
        Ok(idx.saturating_sub(1))
    }
}

/// Test windows `[τ'_i, τ_i]` with `τ'_i = τ_i - ε diam` and sub-instants
/// `τ'_ij = τ'_i + j (τ_i - τ'_i) / n_tests`, for `i = 1..n_Δ-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSchedule {
    eps: f64,
    n_tests: usize,
    /// Indexed by partition node; `None` at `i = 0` and `i = n_Δ`.
    instants: Vec<Option<Vec<f64>>>,
}

impl TestSchedule {
    pub fn new(part: &Partition, eps: f64, n_tests: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Invalid(format!("eps must lie in (0, 1), got {eps}")));
        }
        if n_tests == 0 {
            return Err(Error::Invalid("at least one test action is required".into()));
        }
        if !part.is_uniform() {
            return Err(Error::Invalid(
                "test schedules are defined for uniform partitions only".into(),
            ));
        }
        let diam = part.diam();
        let n = part.steps();
        let instants = (0..=n)
            .map(|i| {
                if i == 0 || i == n {
                    return None;
                }
                let tau = part.time(i);
                let start = tau - eps * diam;
                let width = tau - start;
                Some(
                    (0..=n_tests)
                        .map(|j| {
                            if j == n_tests {
                                tau
                            } else {
                                start + j as f64 * width / n_tests as f64
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        Ok(Self {
            eps,
            n_tests,
            instants,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n_tests(&self) -> usize {
        self.n_tests
    }

    /// `τ'_i0, ..., τ'_i,n_tests` for block `i`, if the block has a window.
    pub fn instants(&self, i: usize) -> Option<&[f64]> {
        self.instants.get(i).and_then(|w| w.as_deref())
    }

    /// Window start `τ'_i`.
    pub fn window_start(&self, i: usize) -> Option<f64> {
        self.instants(i).map(|w| w[0])
    }
}

/// Builds the test schedule for a uniform partition.
pub fn build_test_schedule(part: &Partition, eps: f64, n_tests: usize) -> Result<TestSchedule> {
    TestSchedule::new(part, eps, n_tests)
}
