use proptest::prelude::*;
use sbchain::bath::Axis;
use sbchain::influence::{g_alpha, j_bar, j_of, overlap_z_to_y, tfc_factor, two_point_yz, upsilon, LayerMap, YzKind};
use sbchain::model::Horizon;
use sbchain::C64;
use std::collections::HashMap;

fn idx(s: i8) -> usize {
    usize::from(s < 0)
}

fn rotation(nu: Axis, theta: f64) -> [[C64; 2]; 2] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let m = match nu {
        Axis::Z => [[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]],
        Axis::Y => [[C64::new(0.0, 0.0), C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), C64::new(0.0, 0.0)]],
    };
    let mut u = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            u[a][b] = C64::new(if a == b { c } else { 0.0 }, 0.0) - C64::new(0.0, s) * m[a][b];
        }
    }
    u
}

#[test]
fn base4_encoding_round_trips() {
    for j in 0..4 {
        assert_eq!(j_of(g_alpha(1, j), g_alpha(-1, j)), j);
        assert_eq!(g_alpha(1, j_bar(j)), g_alpha(-1, j));
        assert_eq!(g_alpha(-1, j_bar(j)), g_alpha(1, j));
    }
    assert_eq!(j_of(1, 1), 0);
    assert_eq!(j_of(-1, -1), 3);
}

#[test]
fn transverse_factor_is_a_propagator_pair() {
    for nu in [Axis::Y, Axis::Z] {
        for theta in [0.0, 0.13, -0.7, 2.9] {
            let u = rotation(nu, theta);
            for j1 in 0..4 {
                let mut trace = C64::new(0.0, 0.0);
                for j2 in 0..4 {
                    let (f1, b1) = (idx(g_alpha(1, j1)), idx(g_alpha(-1, j1)));
                    let (f2, b2) = (idx(g_alpha(1, j2)), idx(g_alpha(-1, j2)));
                    let want = u[f2][f1] * u[b2][b1].conj();
                    assert!((tfc_factor(nu, theta, j1, j2) - want).norm() < 1e-15, "{nu} {theta} {j1} {j2}");
                    if j2 == 0 || j2 == 3 {
                        trace += want;
                    }
                }
                let diag = if j1 == 0 || j1 == 3 { 1.0 } else { 0.0 };
                assert!((trace - diag).norm() < 1e-15);
            }
        }
    }
}

#[test]
fn z_to_y_overlaps_are_sigma_y_eigenvectors() {
    for sy in [1i8, -1] {
        let v = [overlap_z_to_y(sy, 1).conj(), overlap_z_to_y(sy, -1).conj()];
        let sv = [C64::new(0.0, -1.0) * v[1], C64::new(0.0, 1.0) * v[0]];
        for k in 0..2 {
            assert!((sv[k] - v[k] * f64::from(sy)).norm() < 1e-15);
        }
        assert!((v[0].norm_sqr() + v[1].norm_sqr() - 1.0).abs() < 1e-15);
    }
    for jy in 0..4 {
        for jz in 0..4 {
            let (y, z) = (g_alpha(1, jy), g_alpha(1, jz));
            assert_eq!(two_point_yz(YzKind::ZToY, jy, jz), overlap_z_to_y(y, z));
            assert!((two_point_yz(YzKind::YToZ, jz, jy) - overlap_z_to_y(y, z).conj()).norm() < 1e-15);
            let yz1 = overlap_z_to_y(y, z).conj() * overlap_z_to_y(g_alpha(-1, jy), g_alpha(-1, jz));
            assert!((two_point_yz(YzKind::Yz1, jy, jz) - yz1).norm() < 1e-15);
            assert!((two_point_yz(YzKind::Yz2, jz, jy) - yz1.conj()).norm() < 1e-15);
        }
    }
}

#[test]
fn layer_map_positions() {
    let z = LayerMap::new(false, 4);
    assert_eq!(z.m_last(5), 6);
    assert_eq!((0..10).map(|m| z.q(m)).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    assert!((0..10).all(|m| z.nu(m) == Axis::Z));
    assert_eq!(z.mu(2), 0);
    assert_eq!(z.mu(9), 6);
    assert_eq!(z.q_y(3), -1);

    let y = LayerMap::new(true, 3);
    assert_eq!(y.m_last(2), 9);
    assert_eq!(y.q_y(2), 5);
    assert_eq!(y.q_z(2), 3);
    for q in 0..20 {
        let mz = 3 * q;
        assert_eq!((y.nu(mz), y.q(mz)), (Axis::Z, q));
        let my = 3 * (q / 2) + 1 + q % 2;
        assert_eq!((y.nu(my), y.q(my)), (Axis::Y, q));
    }
    assert_eq!(y.mu(7), 0);
    assert_eq!(y.mu(8), 0);
    assert_eq!(y.mu(12), 4);
}

#[test]
fn slice_pairs_tile_the_half_slab_triangle() {
    for n in 1..8usize {
        let mut seen: HashMap<(i64, i64), usize> = HashMap::new();
        for q2 in 0..=n + 1 {
            for q1 in 0..=q2 {
                for p in upsilon(Axis::Z, Horizon::Step(n), q1, q2).unwrap() {
                    assert!(p.0 <= p.1);
                    *seen.entry(p).or_default() += 1;
                }
            }
        }
        let top = 2 * n as i64 + 1;
        for l2 in 0..=top {
            for l1 in 0..=l2 {
                assert_eq!(seen.get(&(l1, l2)), Some(&1), "n={n} ({l1},{l2})");
            }
        }
        assert_eq!(seen.len() as i64, (top + 1) * (top + 2) / 2);
    }
    assert_eq!(upsilon(Axis::Y, Horizon::Bulk, 2, 5).unwrap(), vec![(2, 5)]);
    assert!(upsilon(Axis::Z, Horizon::Step(2), 3, 1).is_err());
    assert!(upsilon(Axis::Z, Horizon::Step(2), 0, 4).is_err());
}

proptest! {
    #[test]
    fn transverse_factor_composes(theta1 in -3.0f64..3.0, theta2 in -3.0f64..3.0, j1 in 0usize..4, j3 in 0usize..4) {
        for nu in [Axis::Y, Axis::Z] {
            let two: C64 = (0..4).map(|j2| tfc_factor(nu, theta1, j1, j2) * tfc_factor(nu, theta2, j2, j3)).sum();
            prop_assert!((two - tfc_factor(nu, theta1 + theta2, j1, j3)).norm() < 1e-13);
        }
    }
}
