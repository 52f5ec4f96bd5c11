use guarantee_core::bilinear;
use guarantee_core::oracle::{dp_quasi_value, dp_upper_value, value_shift_vector, GridSpec};
use guarantee_core::{CompactSet, Dynamics};

fn grid(time_steps: usize, half: f64, nodes: usize) -> GridSpec {
    GridSpec {
        time_steps,
        lower: vec![-half; 2],
        upper: vec![half; 2],
        nodes: vec![nodes; 2],
    }
}

#[test]
fn bilinear_value_near_reference() {
    let d = bilinear::system();
    let t = dp_quasi_value(&d, &bilinear::terminal_cost, &grid(100, 1.2, 41)).unwrap();
    let v = t.value(0.0, &[0.0, 0.0]).unwrap();
    assert!((v - bilinear::analytic_quasi_value()).abs() <= 0.05, "V(0,0) = {v}");
}

#[test]
fn time_refinement_shrinks_the_error() {
    // Grid nodes are aligned with h so that Euler steps land on nodes.
    let d = bilinear::system();
    let errs: Vec<f64> = [(10, 21), (20, 41), (40, 81)]
        .iter()
        .map(|&(n, m)| {
            let t = dp_quasi_value(&d, &bilinear::terminal_cost, &grid(n, 1.0, m)).unwrap();
            (t.value(0.0, &[0.0, 0.0]).unwrap() + 0.5).abs()
        })
        .collect();
    assert!(errs[0] / errs[1] >= 1.5, "{errs:?}");
    assert!(errs[1] / errs[2] >= 1.5, "{errs:?}");
}

#[test]
fn lower_value_is_below_upper_value() {
    let d = bilinear::system_with_resolution(3);
    let g = grid(20, 1.2, 25);
    let lo = dp_quasi_value(&d, &bilinear::terminal_cost, &g).unwrap();
    let up = dp_upper_value(&d, &bilinear::terminal_cost, &g).unwrap();
    for k in 0..=20 {
        for (a, b) in lo.level(k).iter().zip(up.level(k)) {
            assert!(a <= &(b + 1e-12));
        }
    }
    // In the upper game the disturbance answers the control, which pays off
    // once x1 > 0.
    assert!(up.value(0.0, &[0.3, 0.0]).unwrap() > lo.value(0.0, &[0.3, 0.0]).unwrap());
}

fn zero_system() -> Dynamics {
    Dynamics::new(
        2,
        |_t: f64, _x: &[f64], _u: &[f64], _v: &[f64], dx: &mut [f64]| dx.fill(0.0),
        CompactSet::signs(1),
        CompactSet::signs(1),
        (0.0, 1.0),
    )
    .unwrap()
}

#[test]
fn zero_dynamics_value_and_gradient() {
    let d = zero_system();
    let t = dp_quasi_value(&d, &|x: &[f64]| x[1], &grid(10, 4.0, 9)).unwrap();
    assert_eq!(t.value(0.0, &[0.0, 3.0]).unwrap(), 3.0);
    for k in 0..=10 {
        for flat in 0..t.node_count() {
            let x = t.node(flat);
            if x.iter().all(|c| c.abs() < 4.0 - 1e-9) {
                assert_eq!(value_shift_vector(&t, t.time(k), &x).unwrap(), vec![0.0, 1.0]);
            }
        }
    }
}

#[test]
fn scalar_cancel_game_is_zero() {
    let d = Dynamics::new(
        1,
        |_t: f64, _x: &[f64], u: &[f64], v: &[f64], dx: &mut [f64]| dx[0] = u[0] + v[0],
        CompactSet::boxed(vec![-1.0], vec![1.0], 5).unwrap(),
        CompactSet::boxed(vec![-1.0], vec![1.0], 5).unwrap(),
        (0.0, 1.0),
    )
    .unwrap();
    let g = GridSpec {
        time_steps: 20,
        lower: vec![-2.0],
        upper: vec![2.0],
        nodes: vec![41],
    };
    let t = dp_quasi_value(&d, &|x: &[f64]| x[0].abs(), &g).unwrap();
    assert!(t.value(0.0, &[0.0]).unwrap().abs() < 0.05);
}
