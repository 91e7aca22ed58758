use rwre_core::conc::azuma::azuma_bound;
use rwre_core::env::{trap_log_probability, Environment, EnvironmentLaw, Kernel};
use rwre_core::exitstats::exact::{exact_exit, BoxRegion};
use rwre_core::experiments::{slowdown_direct, tgamma_test};
use rwre_core::Point;
use std::sync::Arc;

fn ruin_down(p: f64, l: i32) -> f64 {
    // fall l below the start before rising l above it
    let r = (1.0 - p) / p;
    1.0 - (1.0 - r.powi(l)) / (1.0 - r.powi(2 * l))
}

#[test]
fn backtrack_probability_of_biased_walk() {
    let law = Arc::new(EnvironmentLaw::fixed(0.0, Kernel::new(&[0.6, 0.4]).unwrap()).unwrap());
    let exact = ruin_down(0.6, 5);
    assert!((exact - 0.1164).abs() < 5e-5);
    let n = 200_000;
    let rep = tgamma_test(&law, &[1.0], &[5.0], n, 11).unwrap();
    let sd = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((rep.rows[0].p_hat - exact).abs() < 3.0 * sd, "{} vs {exact}", rep.rows[0].p_hat);
}

#[test]
fn fair_ruin_from_exact_solver() {
    let env = Environment::new(EnvironmentLaw::srw(1).unwrap(), 0);
    let region = BoxRegion { lo: Point::new(&[1]), hi: Point::new(&[4]) };
    let exit = exact_exit::<f64, _>(&env, &region, &Point::new(&[2])).unwrap().dist;
    assert!((exit.prob(&Point::new(&[0])) - 0.6).abs() < 1e-12);
    assert!((exit.prob(&Point::new(&[5])) - 0.4).abs() < 1e-12);
}

#[test]
fn trap_ledger_at_radius_five() {
    let l = trap_log_probability(2, 5, |_| 0.1);
    assert!((l - 121.0 * 0.1f64.ln()).abs() < 1e-9);
    assert!((l + 278.6).abs() < 0.05);
}

#[test]
fn azuma_bound_value() {
    assert!((azuma_bound(100.0, 30.0).unwrap() - 2.0 * (-4.5f64).exp()).abs() < 1e-12);
    assert!(azuma_bound(200.0, 30.0).unwrap() > azuma_bound(100.0, 30.0).unwrap());
}

#[test]
fn slowdown_at_the_velocity_grows_with_n() {
    let k = Kernel::new(&[0.55, 0.15, 0.15, 0.15]).unwrap();
    let law = Arc::new(EnvironmentLaw::fixed(0.0, k).unwrap());
    let a = [0.4, 0.0];
    let f: Vec<f64> = [25u64, 100, 400].iter().map(|&n| slowdown_direct(&law, &a, 0.1, n, 4000, 3).unwrap().estimate).collect();
    assert!(f[0] < f[1] && f[1] < f[2], "{f:?}");
}
