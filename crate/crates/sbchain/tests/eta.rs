use proptest::prelude::*;
use sbchain::bath::{bath_correlation, Axis, AxisBath};
use sbchain::eta::{build_eta_caches, eta_direct, eta_direct_component, eta_lookup, k_tau, EtaTable};
use sbchain::model::Horizon;
use sbchain::quadrature::integrate_adaptive_points;
use sbchain::{BathModel, SpectralComponent, TimeScalar, C64};

fn bath(tau: f64) -> BathModel {
    let c = SpectralComponent::ohmic(0.3, 5.0, 0.0, 40.0).unwrap();
    BathModel::new(1.0, tau, vec![AxisBath::none()], vec![AxisBath::new(TimeScalar::constant(1.0), vec![c])]).unwrap()
}

/// Start and length of half-slab `l` of an `n`-step horizon.
fn slab(n: usize, l: usize, dt: f64) -> (f64, f64) {
    let w = |l: usize| if l <= 1 || l >= 2 * n { 0.25 } else { 0.5 };
    ((0..l).map(w).sum::<f64>() * dt, w(l) * dt)
}

/// Time-ordered double integral of C over two half-slabs.
fn eta_time_domain(b: &BathModel, n: usize, l1: usize, l2: usize, dt: f64) -> C64 {
    let c = |u: f64| bath_correlation(b, Axis::Z, 0, u).unwrap();
    let (a1, len1) = slab(n, l1, dt);
    let (a2, len2) = slab(n, l2, dt);
    let quad = |f: &dyn Fn(f64) -> f64, pts: &[f64]| integrate_adaptive_points(f, pts, 1e-13, 1e-11, 400).unwrap().value;
    if l1 == l2 {
        let g = |u: f64| len1 - u;
        let re = quad(&|u| g(u) * c(u).re, &[0.0, len1]);
        return C64::new(re, 0.0);
    }
    let overlap = |u: f64| ((a1 + len1).min(a2 + len2 + u) - a1.max(a2 + u)).max(0.0);
    let lo = a1 - a2 - len2;
    let m = len1.min(len2);
    let hi = a1 + len1 - a2;
    let mut pts = vec![lo, lo + m, hi - m, hi];
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let re = quad(&|u| overlap(u) * c(u).re, &pts);
    let im = quad(&|u| overlap(u) * c(u).im, &pts);
    C64::new(re, im)
}

#[test]
fn frequency_and_time_domain_agree() {
    let b = bath(1.0);
    let dt = 0.1;
    let n = 3;
    for (l1, l2) in [(0, 0), (1, 1), (3, 3), (7, 7), (1, 0), (2, 1), (4, 2), (7, 0), (6, 3), (7, 6)] {
        let f = eta_direct(&b, Axis::Z, 0, n, l1 as i64, l2 as i64, dt).unwrap();
        let t = eta_time_domain(&b, n, l1, l2, dt);
        assert!((f - t).norm() < 1e-9 * (1.0 + t.norm()), "({l1},{l2}): {f} vs {t}");
    }
}

#[test]
fn memory_length_rule() {
    for (tau, want) in [(1.0, 12), (0.3, 5), (0.2, 4), (0.175, 3), (0.1, 3), (0.0, 3)] {
        assert_eq!(k_tau(tau, 0.1).unwrap(), want, "tau={tau}");
    }
    assert!(k_tau(-1.0, 0.1).is_err());
    assert!(k_tau(1.0, 0.0).is_err());
}

#[test]
fn lookup_window_and_errors() {
    let b = bath(0.2);
    let dt = 0.1;
    let k = k_tau(b.tau, dt).unwrap() as i64;
    let c = build_eta_caches(&b, Axis::Z, 0, dt).unwrap();
    let n = 6;
    assert!(eta_lookup(&c, Horizon::Step(n), 2 * k + 2, 1).unwrap().is_none());
    assert!(eta_lookup(&c, Horizon::Step(n), 2 * k, 1).unwrap().is_some());
    assert!(eta_lookup(&c, Horizon::Step(n), 1, 2).is_err());
    assert!(eta_lookup(&c, Horizon::Step(n), 2 * n as i64 + 2, 2 * n as i64 + 2).is_err());
}

#[test]
fn bulk_values_equal_interior_step_values() {
    let b = bath(0.3);
    let dt = 0.1;
    let c = build_eta_caches(&b, Axis::Z, 0, dt).unwrap();
    let n = 9;
    for l1 in 2..2 * n as i64 {
        for l2 in 2..=l1 {
            let (bulk, step) = (eta_lookup(&c, Horizon::Bulk, l1, l2).unwrap(), eta_lookup(&c, Horizon::Step(n), l1, l2).unwrap());
            match (bulk, step) {
                (Some(x), Some(y)) => assert!((x - y).norm() <= 1e-14 * y.norm()),
                (None, None) => {}
                other => panic!("({l1},{l2}): {other:?}"),
            }
        }
    }
}

#[test]
fn tables_skip_silent_axes() {
    let b = bath(0.3);
    let t = EtaTable::build(&b, 0.1).unwrap();
    assert!(t.get(Axis::Z, 0).is_some());
    assert!(t.get(Axis::Y, 0).is_none());
}

#[test]
fn single_precision_component() {
    let c64 = SpectralComponent::ohmic(0.3, 5.0, 0.0, 40.0).unwrap();
    let c32 = sbchain::bath::SpectralComponent::<f32>::ohmic(0.3, 5.0, 0.0, 40.0).unwrap();
    for (l1, l2) in [(0, 0), (3, 1), (5, 5)] {
        let a = eta_direct_component(&c64, 1.0, 3, l1, l2, 0.1).unwrap();
        let b = eta_direct_component(&c32, 1.0f32, 3, l1, l2, 0.1f32).unwrap();
        let d = ((b.re as f64 - a.re).powi(2) + (b.im as f64 - a.im).powi(2)).sqrt();
        assert!(d < 1e-3 * a.norm(), "({l1},{l2}): {a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn lookup_reproduces_direct_evaluation(n in 1usize..9, l1 in 0i64..19, d in 0i64..8) {
        let b = bath(0.3);
        let dt = 0.1;
        let k = k_tau(b.tau, dt).unwrap() as i64;
        prop_assume!(l1 <= 2 * n as i64 + 1 && d <= l1 && d < 2 * k);
        let c = build_eta_caches(&b, Axis::Z, 0, dt).unwrap();
        let look = eta_lookup(&c, Horizon::Step(n), l1, l1 - d).unwrap().unwrap();
        let direct = eta_direct(&b, Axis::Z, 0, n, l1, l1 - d, dt).unwrap();
        prop_assert!((look - direct).norm() <= 1e-12 * direct.norm());
    }
}
