use guarantee_core::{bilinear, integrate, sup_distance, BoundingBox, CompactSet, Dynamics, Signal, Trajectory};

fn rotation() -> Dynamics {
    Dynamics::new(
        2,
        |_t: f64, x: &[f64], _u: &[f64], _v: &[f64], dx: &mut [f64]| {
            dx[0] = x[1];
            dx[1] = -x[0];
        },
        CompactSet::finite(vec![vec![0.0]]).unwrap(),
        CompactSet::finite(vec![vec![0.0]]).unwrap(),
        (0.0, 2.0),
    )
    .unwrap()
}

fn zero(t0: f64, t1: f64) -> Signal {
    Signal::constant(t0, t1, vec![0.0]).unwrap()
}

fn order_slope(substeps: &[usize]) -> f64 {
    let d = rotation();
    let exact = [2f64.cos(), -(2f64.sin())];
    let errs: Vec<f64> = substeps
        .iter()
        .map(|&k| {
            let tr = integrate(&d, 0.0, &[1.0, 0.0], &zero(0.0, 2.0), &zero(0.0, 2.0), k).unwrap();
            let x = tr.last_state();
            ((x[0] - exact[0]).powi(2) + (x[1] - exact[1]).powi(2)).sqrt()
        })
        .collect();
    let hs: Vec<f64> = substeps.iter().map(|&k| 2.0 / k as f64).collect();
    let n = hs.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = hs.iter().zip(&errs).map(|(h, e)| (h.ln(), e.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[test]
fn rk4_order_on_rotation() {
    let slope = order_slope(&[10, 20, 40, 80]);
    assert!(slope >= 3.5, "observed order {slope}");
}

#[test]
fn bilinear_unit_control_matches_closed_form() {
    // u = (1, -1), v = (1, 1): x1 = t, x2 = -t^2/2; RK4 is exact on this.
    let d = bilinear::system();
    let u = Signal::constant(0.0, 1.0, vec![1.0, -1.0]).unwrap();
    let v = Signal::constant(0.0, 1.0, vec![1.0, 1.0]).unwrap();
    let tr = integrate(&d, 0.0, &[0.0, 0.0], &u, &v, 10).unwrap();
    assert!((tr.last_state()[0] - 1.0).abs() < 1e-14);
    assert!((tr.last_state()[1] + 0.5).abs() < 1e-14);
}

#[test]
fn kink_crossing_self_converges() {
    // x1 runs negative then positive, crossing the kink of max(0, x1).
    let d = bilinear::system();
    let u = Signal::constant(0.0, 1.0, vec![1.0, 1.0]).unwrap();
    let v = Signal::from_pieces(vec![0.0, 0.2, 1.0], vec![vec![-1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let run = |k| integrate(&d, 0.0, &[0.0, 0.0], &u, &v, k).unwrap().last_state()[1];
    let (a, b, c) = (run(8), run(16), run(32));
    assert!((b - c).abs() <= (a - b).abs() + 1e-15);
    // x1 = t - 0.4 for t >= 0.2; x2(1) = ∫_{0.4}^{1} (t - 0.4) dt = 0.18.
    assert!((c - 0.18).abs() < 1e-3);
}

#[test]
fn integration_is_deterministic() {
    let d = bilinear::system();
    let u = Signal::from_pieces(vec![0.0, 0.3, 1.0], vec![vec![1.0, 0.5], vec![-0.25, 1.0]]).unwrap();
    let v = Signal::from_pieces(vec![0.0, 0.7, 1.0], vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    let a = integrate(&d, 0.0, &[0.1, 0.0], &u, &v, 7).unwrap();
    let b = integrate(&d, 0.0, &[0.1, 0.0], &u, &v, 7).unwrap();
    assert_eq!(a, b);
}

#[test]
fn leaving_the_box_is_an_error() {
    let d = bilinear::system()
        .with_bounds(BoundingBox::exact(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap())
        .unwrap();
    let u = Signal::constant(0.0, 1.0, vec![1.0, 1.0]).unwrap();
    let v = Signal::constant(0.0, 1.0, vec![1.0, 1.0]).unwrap();
    let err = integrate(&d, 0.0, &[0.0, 0.0], &u, &v, 4).unwrap_err();
    assert!(err.is_numerical());
}

#[test]
fn sup_distance_of_parabola() {
    let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let a = Trajectory::from_samples(times.clone(), times.iter().map(|&t| vec![t]).collect()).unwrap();
    let b = Trajectory::from_samples(times.clone(), times.iter().map(|&t| vec![t * t]).collect()).unwrap();
    assert!((sup_distance(&a, &b).unwrap() - 0.25).abs() < 1e-12);
}
