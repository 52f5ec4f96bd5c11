//! Fixed-step RK4 over piecewise-constant control and disturbance signals.

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::system::Dynamics;
use crate::trajectory::Trajectory;

/// Motion from `(t_start, x_start)` to the end of the horizon.
pub fn integrate(
    dyn_: &Dynamics,
    t_start: f64,
    x_start: &[f64],
    u: &Signal,
    v: &Signal,
    substeps: usize,
) -> Result<Trajectory> {
    if !(t_start >= dyn_.t0() && t_start < dyn_.theta()) {
        return Err(Error::OutsideHorizon {
            t: t_start,
            t0: dyn_.t0(),
            theta: dyn_.theta(),
        });
    }
    integrate_span(dyn_, t_start, dyn_.theta(), x_start, u, v, substeps)
}

/// Motion on `[t_start, t_end]`. Every breakpoint of `u` and `v` inside the
/// span becomes a sample; each interval between consecutive breakpoints is
/// split into `substeps` equal RK4 steps.
pub fn integrate_span(
    dyn_: &Dynamics,
    t_start: f64,
    t_end: f64,
    x_start: &[f64],
    u: &Signal,
    v: &Signal,
    substeps: usize,
) -> Result<Trajectory> {
    let n = dyn_.n();
    if x_start.len() != n {
        return Err(Error::Dimension {
            what: "initial state",
            expected: n,
            got: x_start.len(),
        });
    }
    if u.dim() != dyn_.p() || v.dim() != dyn_.q() {
        return Err(Error::Invalid(format!(
            "signal dimensions ({}, {}) do not match (p, q) = ({}, {})",
            u.dim(),
            v.dim(),
            dyn_.p(),
            dyn_.q()
        )));
    }
    if substeps == 0 {
        return Err(Error::Invalid("substeps must be positive".into()));
    }
    if !(t_start < t_end) {
        return Err(Error::Invalid(format!("empty span [{t_start}, {t_end}]")));
    }
    if x_start.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            t: t_start,
            x: x_start.to_vec(),
        });
    }
    let tol = 1e-12 * (1.0 + t_start.abs().max(t_end.abs()));
    for s in [u, v] {
        if s.start() > t_start + tol || s.end() < t_end - tol {
            return Err(Error::Invalid(format!(
                "signal support [{}, {}] does not cover [{t_start}, {t_end}]",
                s.start(),
                s.end()
            )));
        }
    }
    check_inside(dyn_, t_start, x_start)?;

    let mut nodes: Vec<f64> = u
        .breakpoints()
        .iter()
        .chain(v.breakpoints())
        .copied()
        .filter(|&b| b > t_start + tol && b < t_end - tol)
        .collect();
    nodes.push(t_start);
    nodes.push(t_end);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|b, a| (*b - *a).abs() <= tol);

    let mut traj = Trajectory::new(t_start, x_start.to_vec());
    let mut x = x_start.to_vec();
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = vec![0.0; n];

    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let uu = u.value_at(mid);
        let vv = v.value_at(mid);
        let h = (b - a) / substeps as f64;
        for s in 0..substeps {
            let t = a + s as f64 * h;
            rk4_step(dyn_, t, h, &mut x, uu, vv, &mut k, &mut tmp);
            let t_next = if s + 1 == substeps { b } else { a + (s + 1) as f64 * h };
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite { t: t_next, x });
            }
            check_inside(dyn_, t_next, &x)?;
            traj.push(t_next, x.clone())?;
        }
    }
    Ok(traj)
}

fn check_inside(dyn_: &Dynamics, t: f64, x: &[f64]) -> Result<()> {
    match dyn_.bounds() {
        Some(b) if !b.contains(x) => Err(Error::StateEscape { t, x: x.to_vec() }),
        _ => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn rk4_step(
    dyn_: &Dynamics,
    t: f64,
    h: f64,
    x: &mut [f64],
    u: &[f64],
    v: &[f64],
    k: &mut [Vec<f64>; 4],
    tmp: &mut [f64],
) {
    let [k1, k2, k3, k4] = k;
    dyn_.eval_into(t, x, u, v, k1);
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    dyn_.eval_into(t + 0.5 * h, tmp, u, v, k2);
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    dyn_.eval_into(t + 0.5 * h, tmp, u, v, k3);
    for i in 0..x.len() {
        tmp[i] = x[i] + h * k3[i];
    }
    dyn_.eval_into(t + h, tmp, u, v, k4);
    for i in 0..x.len() {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{BoundingBox, CompactSet};

    fn decay() -> Dynamics {
        Dynamics::new(
            1,
            |_t: f64, x: &[f64], _u: &[f64], _v: &[f64], dx: &mut [f64]| dx[0] = -x[0],
            CompactSet::signs(1),
            CompactSet::signs(1),
            (0.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn breakpoints_are_sampled() {
        let d = decay();
        let u = Signal::from_pieces(vec![0.0, 0.3, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let v = Signal::from_pieces(vec![0.0, 0.7, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let traj = integrate(&d, 0.0, &[1.0], &u, &v, 3).unwrap();
        assert_eq!(traj.len(), 1 + 3 * 3);
        assert!(traj.sample_at(0.3).is_some());
        assert!(traj.sample_at(0.7).is_some());
        assert!((traj.last_state()[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn escape_and_bad_inputs_are_errors() {
        let grow = Dynamics::new(
            1,
            |_t: f64, _x: &[f64], u: &[f64], _v: &[f64], dx: &mut [f64]| dx[0] = 10.0 * u[0],
            CompactSet::signs(1),
            CompactSet::signs(1),
            (0.0, 1.0),
        )
        .unwrap()
        .with_bounds(BoundingBox::with_margin(vec![-1.0], vec![1.0]).unwrap())
        .unwrap();
        let one = Signal::constant(0.0, 1.0, vec![1.0]).unwrap();
        assert!(matches!(
            integrate(&grow, 0.0, &[0.0], &one, &one, 4),
            Err(Error::StateEscape { .. })
        ));
        assert!(integrate(&grow, 0.0, &[0.0], &one, &one, 0).is_err());
        assert!(integrate(&grow, 1.0, &[0.0], &one, &one, 1).is_err());
        let short = Signal::constant(0.0, 0.5, vec![1.0]).unwrap();
        assert!(integrate(&grow, 0.0, &[0.0], &short, &one, 1).is_err());
    }

    #[test]
    fn non_finite_derivative_is_reported() {
        let bad = Dynamics::new(
            1,
            |_t: f64, x: &[f64], _u: &[f64], _v: &[f64], dx: &mut [f64]| dx[0] = 1.0 / x[0],
            CompactSet::signs(1),
            CompactSet::signs(1),
            (0.0, 1.0),
        )
        .unwrap();
        let one = Signal::constant(0.0, 1.0, vec![1.0]).unwrap();
        assert!(matches!(
            integrate(&bad, 0.0, &[0.0], &one, &one, 2),
            Err(Error::NonFinite { .. })
        ));
    }
}
