//! CSV output. Numbers are written with 17 significant digits so that a
//! round trip through text is exact.

use std::io::Write;

use crate::partition::Partition;
use crate::signal::Signal;
use crate::strategies::ClosedLoopRun;
use crate::trajectory::Trajectory;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(prefix: &str, n: usize) -> String {
    (1..=n).map(|k| format!("{prefix}{k}")).collect::<Vec<_>>().join(",")
}

fn row(t: f64, values: &[f64]) -> String {
    std::iter::once(t).chain(values.iter().copied()).map(num).collect::<Vec<_>>().join(",")
}

/// `t,x1..xn`, one row per sample.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,{}", header("x", traj.dim()))?;
    for (t, x) in traj.times().iter().zip(traj.states()) {
        writeln!(out, "{}", row(*t, x))?;
    }
    Ok(())
}

/// `t,<prefix>1..`, one row per breakpoint; the last row repeats the final
/// value at the end of the support.
pub fn write_signal_csv<W: Write>(signal: &Signal, prefix: &str, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,{}", header(prefix, signal.dim()))?;
    for (t, v) in signal.breakpoints().iter().zip(signal.values()) {
        writeln!(out, "{}", row(*t, v))?;
    }
    let last = signal.values().last().expect("signals are nonempty");
    writeln!(out, "{}", row(signal.end(), last))
}

/// State, control, disturbance and identified surrogate at every
/// partition node. Nodes without a surrogate leave the `v_bar` columns
/// empty.
pub fn write_run_csv<W: Write>(run: &ClosedLoopRun, part: &Partition, mut out: W) -> std::io::Result<()> {
    let n = run.trajectory.dim();
    let p = run.control.dim();
    let q = run.disturbance.dim();
    writeln!(
        out,
        "t,{},{},{},{}",
        header("x", n),
        header("u", p),
        header("v", q),
        header("v_bar", q)
    )?;
    for &t in part.times() {
        let x = run.trajectory.at(t);
        let mut cells: Vec<String> = std::iter::once(t)
            .chain(x)
            .chain(run.control.value_at(t).iter().copied())
            .chain(run.disturbance.value_at(t).iter().copied())
            .map(num)
            .collect();
        match run.surrogates.iter().find(|s| (s.t - t).abs() <= 1e-12 * (1.0 + t.abs())) {
            Some(s) => cells.extend(s.v_bar.iter().copied().map(num)),
            None => cells.extend(std::iter::repeat_n(String::new(), q)),
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}
