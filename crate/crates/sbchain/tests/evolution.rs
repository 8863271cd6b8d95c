use nalgebra::{DMatrix, DVector};
use sbchain::bath::AxisBath;
use sbchain::evolution::{product_state, SystemState, SNAPSHOT_VERSION};
use sbchain::observables::density_matrix;
use sbchain::tncore::{CompressionParams, Method};
use sbchain::{BathModel, SpectralComponent, SystemModel, TimeScalar, C64};

fn ramp(a: f64, b: f64) -> TimeScalar {
    TimeScalar::piecewise(vec![(0.0, a), (2.0, b)]).unwrap()
}

fn driven(l: usize) -> SystemModel {
    let mut jzz: Vec<TimeScalar> = (0..l).map(|r| ramp(0.6, -0.3 + 0.1 * r as f64)).collect();
    jzz[l - 1] = TimeScalar::constant(0.0);
    SystemModel::new(
        (0..l).map(|r| ramp(1.0 + 0.1 * r as f64, 0.4)).collect(),
        (0..l).map(|r| ramp(0.2 - 0.15 * r as f64, 0.5)).collect(),
        jzz,
    )
    .unwrap()
}

fn silent(l: usize) -> BathModel {
    BathModel::new(1.0, 0.2, vec![AxisBath::none(); l], vec![AxisBath::none(); l]).unwrap()
}

fn noisy(l: usize, y: &[bool]) -> BathModel {
    let c = SpectralComponent::ohmic(0.2, 4.0, 0.0, 30.0).unwrap();
    let ax = |on: bool| if on { AxisBath::new(TimeScalar::constant(1.0), vec![c.clone()]) } else { AxisBath::none() };
    BathModel::new(1.0, 0.2, y.iter().map(|&b| ax(b)).collect(), (0..l).map(|_| ax(true)).collect()).unwrap()
}

fn start(l: usize) -> Vec<[C64; 2]> {
    (0..l).map(|r| [C64::new(0.8, 0.0), C64::new(0.0, if r % 2 == 0 { 0.6 } else { -0.6 })]).collect()
}

fn weight(n: usize, k: i64) -> f64 {
    if k < 0 || k > n as i64 {
        0.0
    } else if k == 0 || k == n as i64 {
        0.5
    } else {
        1.0
    }
}

fn kron_site(l: usize, r: usize, op: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for s in 0..l {
        let f = if s == r { op.clone() } else { DMatrix::identity(2, 2) };
        out = out.kronecker(&f);
    }
    out
}

fn energy(m: &SystemModel, t: f64, x: usize) -> f64 {
    let l = m.len();
    let s: Vec<f64> = (0..l).map(|r| if (x >> (l - 1 - r)) & 1 == 0 { 1.0 } else { -1.0 }).collect();
    let mut e = 0.0;
    for r in 0..l {
        e += m.hz_at(r, t).unwrap() * s[r];
        if r + 1 < l {
            e += m.jzz_at(r, t).unwrap() * s[r] * s[r + 1];
        }
    }
    e
}

/// Dense symmetric splitting: diagonal phase layers between transverse kicks.
fn trotter_rho(m: &SystemModel, psi: &[[C64; 2]], n: usize, dt: f64) -> DMatrix<C64> {
    let l = m.len();
    let dim = 1 << l;
    let mut v = DVector::from_element(1, C64::new(1.0, 0.0));
    for s in psi {
        v = v.kronecker(&DVector::from_vec(s.to_vec()));
    }
    let phase = |k: usize| {
        DMatrix::from_diagonal(&DVector::from_fn(dim, |x, _| {
            let phi: f64 = [k as i64 - 1, k as i64].iter().map(|&kp| weight(n, kp) * energy(m, kp.max(0) as f64 * dt, x)).sum();
            C64::from_polar(1.0, -dt / 2.0 * phi)
        }))
    };
    v = phase(0) * v;
    for k in 0..=n {
        let t = k as f64 * dt;
        for r in 0..l {
            let a = dt * weight(n, k as i64) * m.hx_at(r, t).unwrap();
            let x = DMatrix::from_row_slice(2, 2, &[C64::new(a.cos(), 0.0), C64::new(0.0, -a.sin()), C64::new(0.0, -a.sin()), C64::new(a.cos(), 0.0)]);
            v = kron_site(l, r, &x) * v;
        }
        v = phase(k + 1) * v;
    }
    let rho = &v * v.adjoint();
    let tr = rho.trace();
    rho / tr
}

#[test]
fn bath_free_chain_matches_dense_splitting() {
    let dt = 0.1;
    for l in 1..=3 {
        let m = driven(l);
        let psi = start(l);
        let mut st = SystemState::new(&m, &silent(l), &product_state(&psi).unwrap(), dt, CompressionParams::lossless()).unwrap();
        for n in 1..=5 {
            st.evolve_step().unwrap();
            let got = density_matrix(&st.rho).unwrap();
            let want = trotter_rho(&m, &psi, n, dt);
            let err = (got - want).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "L={l} n={n} err={err:e}");
        }
        assert_eq!(st.history.len(), 5);
        assert!((st.time() - 0.5).abs() < 1e-15);
    }
}

#[test]
fn snapshot_resume_continues_identically() {
    let l = 2;
    let m = driven(l);
    let params = CompressionParams::new(Method::Direct, Some(16), 1e-10, false).unwrap();
    let mut a = SystemState::new(&m, &noisy(l, &[false, false]), &product_state(&start(l)).unwrap(), 0.1, params).unwrap();
    a.evolve(3).unwrap();
    let json = serde_json::to_string(&a).unwrap();
    let mut b: SystemState = serde_json::from_str(&json).unwrap();
    assert_eq!(b.version, SNAPSHOT_VERSION);
    b.check_version().unwrap();
    a.evolve(3).unwrap();
    b.evolve(3).unwrap();
    let (ra, rb) = (density_matrix(&a.rho).unwrap(), density_matrix(&b.rho).unwrap());
    assert!((ra - rb).iter().all(|x| x.norm() < 1e-14));
    assert_eq!(a.history, b.history);

    b.version = SNAPSHOT_VERSION + 1;
    assert!(b.check_version().is_err());
}

#[test]
fn bad_configurations_are_rejected() {
    let m = driven(2);
    let psi = product_state(&start(2)).unwrap();
    let p = CompressionParams::lossless();
    assert!(SystemState::new(&m, &noisy(2, &[true, false]), &psi, 0.1, p).is_err());
    assert!(SystemState::new(&m, &silent(3), &psi, 0.1, p).is_err());
    assert!(SystemState::new(&m, &silent(2), &product_state(&start(3)).unwrap(), 0.1, p).is_err());
    let mut coupled = driven(2);
    coupled.jzz[1] = TimeScalar::constant(0.3);
    assert!(SystemState::new(&coupled, &silent(2), &psi, 0.1, p).is_err());
}

#[test]
fn density_stays_physical_under_noise() {
    let l = 2;
    let m = driven(l);
    let mut st = SystemState::new(&m, &noisy(l, &[true, true]), &product_state(&start(l)).unwrap(), 0.1, CompressionParams::lossless()).unwrap();
    for _ in 0..3 {
        st.evolve_step().unwrap();
        let rho = density_matrix(&st.rho).unwrap();
        assert!((rho.trace() - 1.0).norm() < 1e-12);
        assert!((&rho - rho.adjoint()).iter().all(|x| x.norm() < 1e-10));
        let ev = rho.map(|x| x).symmetric_eigenvalues();
        assert!(ev.iter().all(|&e| e > -1e-10), "{ev}");
    }
}
