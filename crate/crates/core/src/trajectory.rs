use crate::error::{Error, Result};
use crate::vecmath::dist;

/// Sampled state path with linear interpolation between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

fn time_tol(t: f64) -> f64 {
    1e-12 * (1.0 + t.abs())
}

impl Trajectory {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self {
            times: vec![t],
            states: vec![x],
        }
    }

    pub fn from_samples(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::Invalid(format!(
                "{} sample times for {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("sample times must increase strictly".into()));
        }
        let n = states[0].len();
        if let Some(bad) = states.iter().find(|s| s.len() != n) {
            return Err(Error::Dimension {
                what: "trajectory state",
                expected: n,
                got: bad.len(),
            });
        }
        Ok(Self { times, states })
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn first_state(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn last_state(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    /// Appends a sample strictly after the current end.
    pub fn push(&mut self, t: f64, x: Vec<f64>) -> Result<()> {
        if !(t > self.end_time()) {
            return Err(Error::Invalid(format!(
                "sample at {t} does not extend trajectory ending at {}",
                self.end_time()
            )));
        }
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                what: "trajectory state",
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.times.push(t);
        self.states.push(x);
        Ok(())
    }

    /// Appends `next`, whose first sample must coincide with the current end.
    pub fn extend(&mut self, next: &Trajectory) -> Result<()> {
        if (next.start_time() - self.end_time()).abs() > time_tol(self.end_time()) {
            return Err(Error::Invalid(format!(
                "trajectory starting at {} does not continue one ending at {}",
                next.start_time(),
                self.end_time()
            )));
        }
        for (t, x) in next.times.iter().zip(&next.states).skip(1) {
            self.push(*t, x.clone())?;
        }
        Ok(())
    }

    /// Exact sample at `t` (up to a relative `1e-12` time tolerance).
    pub fn sample_at(&self, t: f64) -> Option<&[f64]> {
        let tol = time_tol(t);
        let idx = self.times.partition_point(|&s| s < t - tol);
        match self.times.get(idx) {
            Some(&s) if (s - t).abs() <= tol => Some(&self.states[idx]),
            _ => None,
        }
    }

    pub fn require_sample(&self, t: f64) -> Result<&[f64]> {
        self.sample_at(t).ok_or(Error::MissingSample { t })
    }

    /// Linear interpolation; constant extrapolation outside the samples.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.states[0].clone();
        }
        if k == self.times.len() {
            return self.states[k - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.states[k - 1]
            .iter()
            .zip(&self.states[k])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// Samples with `t <= t_end`, plus an interpolated endpoint if needed.
    pub fn truncated(&self, t_end: f64) -> Trajectory {
        let k = self.times.partition_point(|&s| s <= t_end + time_tol(t_end));
        let mut out = Trajectory {
            times: self.times[..k.max(1)].to_vec(),
            states: self.states[..k.max(1)].to_vec(),
        };
        if out.end_time() < t_end - time_tol(t_end) {
            out.times.push(t_end);
            out.states.push(self.at(t_end));
        }
        out
    }
}

/// `max_t |a(t) - b(t)|` over the union of both sample grids, with linear
/// interpolation in between.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            what: "trajectory",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let tol = time_tol(a.end_time().abs().max(a.start_time().abs()));
    if (a.start_time() - b.start_time()).abs() > tol || (a.end_time() - b.end_time()).abs() > tol {
        return Err(Error::Invalid(format!(
            "trajectories span [{}, {}] and [{}, {}]",
            a.start_time(),
            a.end_time(),
            b.start_time(),
            b.end_time()
        )));
    }
    let worst = a
        .times
        .iter()
        .chain(&b.times)
        .map(|&t| dist(&a.at(t), &b.at(t)))
        .fold(0.0, f64::max);
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(f: impl Fn(f64) -> f64, n: usize) -> Trajectory {
        let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let states = times.iter().map(|&t| vec![f(t)]).collect();
        Trajectory::from_samples(times, states).unwrap()
    }

    #[test]
    fn sup_distance_examples() {
        let a = line(|t| t, 10);
        assert_eq!(sup_distance(&a, &a).unwrap(), 0.0);

        let shifted = Trajectory::from_samples(
            a.times().to_vec(),
            a.states().iter().map(|s| vec![s[0] + 0.3]).collect(),
        )
        .unwrap();
        assert_abs_diff_eq!(sup_distance(&a, &shifted).unwrap(), 0.3, epsilon = 1e-15);

        let b = line(|t| t * t, 100);
        assert_abs_diff_eq!(sup_distance(&line(|t| t, 1), &b).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn sup_distance_rejects_mismatch() {
        let a = line(|t| t, 4);
        let b = Trajectory::new(0.0, vec![0.0, 0.0]);
        assert!(matches!(sup_distance(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn interpolation_and_samples() {
        let a = line(|t| 2.0 * t, 4);
        assert_abs_diff_eq!(a.at(0.3)[0], 0.6, epsilon = 1e-15);
        assert_eq!(a.at(5.0), vec![2.0]);
        assert_eq!(a.sample_at(0.5), Some(&[1.0][..]));
        assert!(a.sample_at(0.3).is_none());
        assert!(matches!(a.require_sample(0.3), Err(Error::MissingSample { .. })));
        let t = a.truncated(0.6);
        assert_eq!(t.end_time(), 0.6);
        assert_abs_diff_eq!(t.last_state()[0], 1.2, epsilon = 1e-15);
    }
}
