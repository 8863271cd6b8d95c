use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbchain::bath::AxisBath;
use sbchain::evolution::{init_density_mps, product_state, SystemState};
use sbchain::observables::brute::{brute_force_rho, brute_force_rho_limited};
use sbchain::observables::{
    dense_state, density_matrix, energy_per_cell, expect_product, pauli, projector, realignment_check, spin_config_prob, trace_rho, ObservableError, Op,
};
use sbchain::tncore::{CompressionParams, Mps};
use sbchain::{BathModel, SpectralComponent, SystemModel, TimeScalar, C64};

fn random_pure(rng: &mut ChaCha8Rng, l: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..1 << l).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn to_mat(op: &Op) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |a, b| op[a][b])
}

fn chain_op(l: usize, first: usize, ops: &[Op]) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for r in 0..l {
        let f = if r >= first && r < first + ops.len() { to_mat(&ops[r - first]) } else { DMatrix::identity(2, 2) };
        out = out.kronecker(&f);
    }
    out
}

fn model(l: usize) -> SystemModel {
    let mut jzz = vec![TimeScalar::constant(0.5); l];
    jzz[l - 1] = TimeScalar::constant(0.0);
    SystemModel::new(
        (0..l).map(|r| TimeScalar::constant(0.8 + 0.3 * r as f64)).collect(),
        (0..l).map(|r| TimeScalar::constant(0.25 - 0.2 * r as f64)).collect(),
        jzz,
    )
    .unwrap()
}

fn bath(l: usize, y: bool) -> BathModel {
    let c = SpectralComponent::ohmic(0.25, 5.0, 0.0, 40.0).unwrap();
    let ax = |on: bool| if on { AxisBath::new(TimeScalar::constant(1.0), vec![c.clone()]) } else { AxisBath::none() };
    BathModel::new(1.0, 0.3, (0..l).map(|_| ax(y)).collect(), (0..l).map(|_| ax(true)).collect()).unwrap()
}

#[test]
fn readout_matches_dense_density_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let l = 3;
    let v = random_pure(&mut rng, l);
    let psi = Mps::from_dense(&v, &vec![2; l]).unwrap();
    let (rho, norm) = init_density_mps(&psi).unwrap();
    assert!((norm - 1.0).abs() < 1e-12);
    let dv = DVector::from_vec(v.clone());
    let want = &dv * dv.adjoint();
    let got = density_matrix(&rho).unwrap();
    assert!((&got - &want).iter().all(|x| x.norm() < 1e-13));
    assert!((trace_rho(&rho).unwrap() - 1.0).norm() < 1e-13);

    let names = ['x', 'y', 'z'];
    for first in 0..l {
        for a in names {
            for b in names {
                let ops: Vec<Op> = [a, b].iter().take(l - first).map(|&c| pauli(c).unwrap()).collect();
                let exact = (&want * chain_op(l, first, &ops)).trace();
                assert!((expect_product(&rho, first, &ops).unwrap() - exact).norm() < 1e-13);
            }
        }
    }
    let mut total = 0.0;
    for x in 0..1usize << l {
        let spins: Vec<i8> = (0..l).map(|r| if (x >> (l - 1 - r)) & 1 == 0 { 1 } else { -1 }).collect();
        let p = spin_config_prob(&rho, &spins).unwrap();
        assert!((p - v[x].norm_sqr()).abs() < 1e-13);
        total += p;
    }
    assert!((total - 1.0).abs() < 1e-13);
    assert!(expect_product(&rho, 2, &[projector(1), projector(1)]).is_err());
    assert!(spin_config_prob(&rho, &[1, 1]).is_err());
    assert!(pauli('q').is_none());
}

#[test]
fn energy_matches_dense_hamiltonian() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let l = 3;
    let m = model(l);
    let v = random_pure(&mut rng, l);
    let (rho, _) = init_density_mps(&Mps::from_dense(&v, &vec![2; l]).unwrap()).unwrap();
    let (sx, sz) = (pauli('x').unwrap(), pauli('z').unwrap());
    let mut h = DMatrix::zeros(1 << l, 1 << l);
    for r in 0..l {
        h += chain_op(l, r, &[sx]) * C64::from(m.hx_at(r, 0.0).unwrap());
        h += chain_op(l, r, &[sz]) * C64::from(m.hz_at(r, 0.0).unwrap());
        if r + 1 < l {
            h += chain_op(l, r, &[sz, sz]) * C64::from(m.jzz_at(r, 0.0).unwrap());
        }
    }
    let dv = DVector::from_vec(v);
    let want = (dv.adjoint() * h * &dv)[(0, 0)].re;
    assert!((energy_per_cell(&rho, &m, 0.0).unwrap() - want).abs() < 1e-12);
}

#[test]
fn realignment_flags_entanglement_only() {
    let up = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
    let (prod, _) = init_density_mps(&product_state(&[up, up, up]).unwrap()).unwrap();
    for (s, flagged) in realignment_check(&prod).unwrap() {
        assert!((s - 1.0).abs() < 1e-12 && !flagged);
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = vec![C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(h, 0.0)];
    let (rho, _) = init_density_mps(&Mps::from_dense(&bell, &[2, 2]).unwrap()).unwrap();
    let r = realignment_check(&rho).unwrap();
    assert!((r[0].0 - 2.0).abs() < 1e-12 && r[0].1);
}

#[test]
fn dense_state_requires_qubits() {
    let psi = product_state(&[[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]; 2]).unwrap();
    assert_eq!(dense_state(&psi).unwrap().len(), 4);
    let q = Mps::product(&vec![vec![C64::new(1.0, 0.0); 3]]).unwrap();
    assert!(dense_state(&q).is_err());
}

#[test]
fn brute_force_guards_and_physicality() {
    let l = 2;
    let m = model(l);
    let b = bath(l, true);
    let psi = vec![C64::new(0.5, 0.0); 4];
    assert!(matches!(brute_force_rho_limited(&m, &b, &psi, 2, 0.1, 1e3), Err(ObservableError::TooLarge { .. })));
    assert!(brute_force_rho(&m, &b, &psi, 0, 0.1).is_err());
    assert!(brute_force_rho(&m, &b, &psi[..2], 1, 0.1).is_err());
    let rho = brute_force_rho(&m, &b, &psi, 2, 0.1).unwrap();
    assert!((rho.trace() - 1.0).norm() < 1e-12);
    assert!((&rho - rho.adjoint()).iter().all(|x| x.norm() < 1e-12));
}

#[test]
fn brute_force_without_noise_matches_unitary_tn() {
    let l = 2;
    let m = model(l);
    let silent = BathModel::new(1.0, 0.3, vec![AxisBath::none(); l], vec![AxisBath::none(); l]).unwrap();
    let site = [C64::new(0.8, 0.0), C64::new(0.0, 0.6)];
    let psi = product_state(&[site, site]).unwrap();
    let dense = dense_state(&psi).unwrap();
    let mut st = SystemState::new(&m, &silent, &psi, 0.1, CompressionParams::lossless()).unwrap();
    for n in 1..=3 {
        st.evolve_step().unwrap();
        let tn = density_matrix(&st.rho).unwrap();
        let bf = brute_force_rho(&m, &silent, &dense, n, 0.1).unwrap();
        assert!((tn - bf).iter().all(|x| x.norm() < 1e-12), "n={n}");
    }
}
