use crate::error::{Error, Result};
use crate::system::CompactSet;

/// Piecewise-constant signal on right-open intervals
/// `[b_0, b_1), [b_1, b_2), ..., [b_{m-1}, b_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Signal {
    pub fn constant(start: f64, end: f64, value: Vec<f64>) -> Result<Self> {
        Self::from_pieces(vec![start, end], vec![value])
    }

    pub fn from_pieces(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::Invalid(format!(
                "signal with {} breakpoints needs {} values, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("signal breakpoints must increase strictly".into()));
        }
        let dim = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(Error::Dimension {
                what: "signal value",
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(Self { breakpoints, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// Value on the interval containing `t`; the final endpoint takes the
    /// last value. Times outside the support are clamped.
    pub fn value_at(&self, t: f64) -> &[f64] {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        let piece = idx.saturating_sub(1).min(self.values.len() - 1);
        &self.values[piece]
    }

    /// Appends a piece `[self.end(), end)` with the given value. Adjacent
    /// equal values are merged.
    pub fn push(&mut self, end: f64, value: Vec<f64>) -> Result<()> {
        if !(end > self.end()) {
            return Err(Error::Invalid(format!(
                "piece end {end} does not extend signal ending at {}",
                self.end()
            )));
        }
        if value.len() != self.dim() {
            return Err(Error::Dimension {
                what: "signal value",
                expected: self.dim(),
                got: value.len(),
            });
        }
        if self.values.last() == Some(&value) {
            *self.breakpoints.last_mut().unwrap() = end;
        } else {
            self.breakpoints.push(end);
            self.values.push(value);
        }
        Ok(())
    }

    /// Concatenates `next`, which must start where `self` ends.
    pub fn append(&mut self, next: &Signal) -> Result<()> {
        let gap = (next.start() - self.end()).abs();
        if gap > 1e-12 * (1.0 + self.end().abs()) {
            return Err(Error::Invalid(format!(
                "cannot append signal starting at {} to one ending at {}",
                next.start(),
                self.end()
            )));
        }
        for (k, value) in next.values.iter().enumerate() {
            self.push(next.breakpoints[k + 1], value.clone())?;
        }
        Ok(())
    }

    /// Restriction to `[a, b]`, which must overlap the support.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Signal> {
        if !(a < b) {
            return Err(Error::Invalid(format!("empty restriction [{a}, {b}]")));
        }
        let mut breaks = vec![a];
        let mut values = vec![self.value_at(a).to_vec()];
        for (k, &bp) in self.breakpoints.iter().enumerate().skip(1) {
            if bp > a && bp < b && k < self.values.len() {
                breaks.push(bp);
                values.push(self.values[k].clone());
            }
        }
        breaks.push(b);
        Signal::from_pieces(breaks, values)
    }

    /// Replaces everything from `t` on with `value`.
    pub fn overwrite_from(&self, t: f64, value: Vec<f64>) -> Result<Signal> {
        let mut head = if t > self.start() {
            self.restrict(self.start(), t)?
        } else {
            return Signal::constant(self.start(), self.end(), value);
        };
        if self.end() > t {
            head.push(self.end(), value)?;
        }
        Ok(head)
    }

    /// Checks that every value lies in `set` and the support covers
    /// `[t0, theta]`.
    pub fn validate_in(&self, set: &CompactSet, t0: f64, theta: f64) -> Result<()> {
        let tol = 1e-12 * (1.0 + t0.abs().max(theta.abs()));
        if self.start() > t0 + tol || self.end() < theta - tol {
            return Err(Error::Invalid(format!(
                "signal support [{}, {}] does not cover [{t0}, {theta}]",
                self.start(),
                self.end()
            )));
        }
        if let Some(bad) = self.values.iter().find(|v| !set.contains(v, 1e-12)) {
            return Err(Error::Invalid(format!("signal value {bad:?} is outside its set")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_open_lookup() {
        let s = Signal::from_pieces(vec![0.0, 0.5, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(s.value_at(0.0), &[1.0]);
        assert_eq!(s.value_at(0.49), &[1.0]);
        assert_eq!(s.value_at(0.5), &[-1.0]);
        assert_eq!(s.value_at(1.0), &[-1.0]);
    }

    #[test]
    fn push_merges_equal_neighbours() {
        let mut s = Signal::constant(0.0, 0.25, vec![1.0]).unwrap();
        s.push(0.5, vec![1.0]).unwrap();
        s.push(0.75, vec![2.0]).unwrap();
        assert_eq!(s.breakpoints(), &[0.0, 0.5, 0.75]);
        assert!(s.push(0.7, vec![0.0]).is_err());
    }

    #[test]
    fn restrict_and_overwrite() {
        let s = Signal::from_pieces(
            vec![0.0, 0.3, 0.6, 1.0],
            vec![vec![1.0], vec![2.0], vec![3.0]],
        )
        .unwrap();
        let r = s.restrict(0.4, 0.8).unwrap();
        assert_eq!(r.breakpoints(), &[0.4, 0.6, 0.8]);
        assert_eq!(r.values(), &[vec![2.0], vec![3.0]]);
        let o = s.overwrite_from(0.5, vec![9.0]).unwrap();
        assert_eq!(o.value_at(0.45), &[2.0]);
        assert_eq!(o.value_at(0.55), &[9.0]);
        assert_eq!(o.end(), 1.0);
    }

    #[test]
    fn validate_checks_membership_and_support() {
        let set = CompactSet::signs(1);
        let s = Signal::constant(0.0, 1.0, vec![1.0]).unwrap();
        assert!(s.validate_in(&set, 0.0, 1.0).is_ok());
        assert!(s.validate_in(&set, 0.0, 2.0).is_err());
        let bad = Signal::constant(0.0, 1.0, vec![0.5]).unwrap();
        assert!(bad.validate_in(&set, 0.0, 1.0).is_err());
    }
}
