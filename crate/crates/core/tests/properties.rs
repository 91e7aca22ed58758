use proptest::prelude::*;
use rwre_core::exitstats::dist::FiniteDist;
use rwre_core::regen::detect_regenerations;
use rwre_core::Point;

fn path_from(steps: &[usize]) -> Vec<Point> {
    let mut p = vec![Point::zero(2)];
    for &s in steps {
        let last = *p.last().unwrap();
        p.push(last.step(s));
    }
    p
}

fn scan(path: &[Point]) -> Vec<usize> {
    let x: Vec<i64> = path.iter().map(|p| p.get(0)).collect();
    (0..x.len().saturating_sub(1))
        .filter(|&t| (0..t).all(|s| x[s] < x[t]) && x[t + 1] > x[t] && (t + 2..x.len()).all(|s| x[s] > x[t + 1]))
        .collect()
}

proptest! {
    #[test]
    fn regenerations_match_scan(steps in prop::collection::vec(prop_oneof![4 => Just(0usize), 1 => 1usize..4], 1..200)) {
        let path = path_from(&steps);
        let fast: Vec<usize> = detect_regenerations(&path, &[1.0, 0.0]).iter().map(|r| r.tau).collect();
        prop_assert_eq!(fast, scan(&path));
    }

    #[test]
    fn tv_is_a_metric(a in prop::collection::vec(0.01f64..1.0, 5), b in prop::collection::vec(0.01f64..1.0, 5), c in prop::collection::vec(0.01f64..1.0, 5)) {
        let mk = |w: &[f64]| FiniteDist::from_pairs(1, w.iter().enumerate().map(|(i, v)| (Point::new(&[i as i64]), *v))).normalized();
        let (x, y, z) = (mk(&a), mk(&b), mk(&c));
        prop_assert!(x.tv(&x) < 1e-12);
        prop_assert!((x.tv(&y) - y.tv(&x)).abs() < 1e-12);
        prop_assert!(x.tv(&z) <= x.tv(&y) + y.tv(&z) + 1e-12);
        prop_assert!(x.tv(&y) <= 1.0 + 1e-12);
    }

    #[test]
    fn convolution_adds_means(a in prop::collection::vec(0.01f64..1.0, 4), b in prop::collection::vec(0.01f64..1.0, 3)) {
        let x = FiniteDist::from_pairs(1, a.iter().enumerate().map(|(i, v)| (Point::new(&[i as i64 - 1]), *v))).normalized();
        let y = FiniteDist::from_pairs(1, b.iter().enumerate().map(|(i, v)| (Point::new(&[2 * i as i64]), *v))).normalized();
        let s = x.convolve(&y);
        prop_assert!((s.total() - 1.0).abs() < 1e-12);
        prop_assert!((s.mean()[0] - x.mean()[0] - y.mean()[0]).abs() < 1e-12);
        prop_assert!((s.trace_var() - x.trace_var() - y.trace_var()).abs() < 1e-9);
    }
}
