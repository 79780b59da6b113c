use std::f64::consts::PI;

use mlci::dynamics::{ControlVector, StateVector, SystemSpec};
use proptest::prelude::*;

fn endpoint(sys: &SystemSpec, x0: &[f64], u: f64, duration: f64, substeps: usize) -> Vec<f64> {
    let samples = sys
        .integrate_segment(&StateVector(x0.to_vec()), &ControlVector(vec![u]), duration, substeps)
        .unwrap();
    samples.last().unwrap().0.clone()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    let dth = (a[0] - b[0] + PI).rem_euclid(2.0 * PI) - PI;
    (dth * dth + (a[1] - b[1]).powi(2)).sqrt()
}

#[test]
fn rk4_is_fourth_order() {
    let sys = SystemSpec::pendulum();
    for (x0, u) in [([2.0, 0.5], 0.3), ([1.0, -1.0], 0.0), ([4.0, 2.0], -1.0)] {
        let reference = endpoint(&sys, &x0, u, 2.0, 100 * 40);
        let coarse = dist(&endpoint(&sys, &x0, u, 2.0, 20), &reference);
        let fine = dist(&endpoint(&sys, &x0, u, 2.0, 40), &reference);
        assert!(coarse / fine >= 8.0, "convergence factor {}", coarse / fine);
    }
}

#[test]
fn rollout_matches_fine_reference() {
    let sys = SystemSpec::pendulum();
    let x0 = StateVector(vec![PI, 0.0]);
    let controls = [ControlVector(vec![1.0]), ControlVector(vec![-1.0])];
    let tr = sys.rollout(&x0, &controls, 0.5, 50).unwrap();
    let fine = sys.rollout(&x0, &controls, 0.5, 500).unwrap();
    assert!(dist(tr.last(), fine.last()) < 1e-6);

    let still = sys.rollout(&x0, &[ControlVector(vec![0.0])], 1.0, 100).unwrap();
    assert!(dist(tr.last(), still.last()) > 1e-3);
    assert_eq!(tr.states.len(), 101);
    assert_eq!(tr.controls.len(), 100);
    assert_eq!(tr.dt_sim, 0.01);
}

#[test]
fn pendulum_is_time_reversible() {
    // running forward from (θ0, ω0) and then from the endpoint with reversed velocity
    // retraces the angle in reverse order
    let sys = SystemSpec::pendulum();
    let zero = vec![ControlVector(vec![0.0]); 20];
    let fwd = sys.rollout(&StateVector(vec![2.5, 0.7]), &zero, 0.1, 10).unwrap();
    let end = fwd.last();
    let back = sys
        .rollout(&StateVector(vec![end[0], -end[1]]), &zero, 0.1, 10)
        .unwrap();
    let n = fwd.states.len();
    for k in 0..n {
        let a = &fwd.states[k];
        let b = &back.states[n - 1 - k];
        let dth = (a[0] - b[0] + PI).rem_euclid(2.0 * PI) - PI;
        assert!(dth.abs() < 1e-8, "sample {k}: {dth}");
        assert!((a[1] + b[1]).abs() < 1e-8);
    }
}

proptest! {
    #[test]
    fn samples_are_canonical(th in -20.0f64..20.0, om in -6.0f64..6.0, u in -2.0f64..2.0) {
        let sys = SystemSpec::pendulum();
        let s = sys
            .integrate_segment(&StateVector(vec![th, om]), &ControlVector(vec![u]), 0.3, 7)
            .unwrap();
        prop_assert_eq!(s.len(), 8);
        for x in &s {
            prop_assert!(x[0] >= 0.0 && x[0] < 2.0 * PI);
        }
    }

    #[test]
    fn deriv_is_pure(th in -10.0f64..10.0, om in -6.0f64..6.0, u in -2.0f64..2.0) {
        let sys = SystemSpec::pendulum();
        let x = StateVector(vec![th, om]);
        let u = ControlVector(vec![u]);
        let a = sys.deriv(&x, &u).unwrap();
        let b = sys.deriv(&x, &u).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
