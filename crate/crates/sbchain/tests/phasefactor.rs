use sbchain::influence::g_alpha;
use sbchain::model::Horizon;
use sbchain::phasefactor::{build_phase_mps, phase_scalar};
use sbchain::{SystemModel, TimeScalar, C64};

fn driven(l: usize) -> SystemModel {
    let hx = (0..l).map(|_| TimeScalar::constant(1.0)).collect();
    let hz = (0..l).map(|r| TimeScalar::piecewise(vec![(0.0, 0.2 * r as f64 - 0.3), (5.0, 0.5 + 0.1 * r as f64)]).unwrap()).collect();
    let mut jzz: Vec<TimeScalar> = (0..l).map(|r| TimeScalar::piecewise(vec![(0.0, 0.7), (5.0, -0.4 + 0.05 * r as f64)]).unwrap()).collect();
    jzz[l - 1] = TimeScalar::constant(0.0);
    SystemModel::new(hx, hz, jzz).unwrap()
}

fn digits(mut x: usize, l: usize) -> Vec<usize> {
    let mut d = vec![0; l];
    for i in (0..l).rev() {
        d[i] = x % 4;
        x /= 4;
    }
    d
}

fn by_hand(m: &SystemModel, n: usize, k: usize, cfg: &[usize], dt: f64) -> C64 {
    let mut phi = 0.0;
    for kp in [k as i64 - 1, k as i64] {
        let w = if kp < 0 || kp > n as i64 {
            0.0
        } else if kp == 0 || kp == n as i64 {
            0.5
        } else {
            1.0
        };
        let t = kp.max(0) as f64 * dt;
        for alpha in [1i8, -1] {
            let s: Vec<f64> = cfg.iter().map(|&j| f64::from(g_alpha(alpha, j))).collect();
            let mut e = 0.0;
            for r in 0..s.len() {
                e += m.hz_at(r, t).unwrap() * s[r];
                if r + 1 < s.len() {
                    e += m.jzz_at(r, t).unwrap() * s[r] * s[r + 1];
                }
            }
            phi -= f64::from(alpha) * dt / 2.0 * w * e;
        }
    }
    C64::from_polar(1.0, phi)
}

#[test]
fn scalar_phase_matches_hand_sum() {
    let m = driven(3);
    let n = 4;
    for k in 0..=n + 1 {
        for x in 0..64 {
            let cfg = digits(x, 3);
            let got = phase_scalar(&m, Horizon::Step(n), k, &cfg, 0.1).unwrap();
            assert!((got - by_hand(&m, n, k, &cfg, 0.1)).norm() < 1e-14, "k={k} cfg={cfg:?}");
        }
    }
    assert!(phase_scalar(&m, Horizon::Step(n), 1, &[0, 0], 0.1).is_err());
}

#[test]
fn phase_mps_matches_scalar_for_every_configuration() {
    for l in 1..=4 {
        let m = driven(l);
        for (h, k) in [(Horizon::Step(3), 0), (Horizon::Step(3), 2), (Horizon::Step(3), 4), (Horizon::Bulk, 7)] {
            let mps = build_phase_mps(&m, h, k, 0.1).unwrap();
            assert!(mps.max_bond() <= 4);
            let dense = mps.to_dense();
            for (x, v) in dense.iter().enumerate() {
                let want = phase_scalar(&m, h, k, &digits(x, l), 0.1).unwrap();
                assert!((v - want).norm() < 1e-12, "L={l} k={k} x={x}");
            }
        }
    }
}

#[test]
fn diagonal_configurations_carry_no_phase() {
    let m = driven(3);
    for x in 0..8usize {
        let cfg: Vec<usize> = (0..3).map(|r| if (x >> r) & 1 == 1 { 3 } else { 0 }).collect();
        let p = phase_scalar(&m, Horizon::Step(2), 1, &cfg, 0.3).unwrap();
        assert!((p - 1.0).norm() < 1e-15);
    }
}
