use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbchain::tncore::{
    apply_and_compress, apply_mpo, compress, isometry_defect, mixed_canonical, schmidt_at_bond, truncated_factorization, truncation_rank,
    CompressionParams, DenseTensor, Method, Mpo, Mps,
};
use sbchain::C64;

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn random_mps(rng: &mut ChaCha8Rng, dims: &[usize], chi: usize) -> Mps {
    let n = dims.len();
    let cores = (0..n)
        .map(|i| {
            let l = if i == 0 { 1 } else { chi };
            let r = if i + 1 == n { 1 } else { chi };
            let shape = vec![l, dims[i], r];
            let data = (0..l * dims[i] * r).map(|_| rand_c(rng)).collect();
            DenseTensor::new(shape, data).unwrap()
        })
        .collect();
    Mps::new(cores).unwrap()
}

fn random_mpo(rng: &mut ChaCha8Rng, dims: &[usize], chi: usize) -> Mpo {
    let n = dims.len();
    let cores = (0..n)
        .map(|i| {
            let l = if i == 0 { 1 } else { chi };
            let r = if i + 1 == n { 1 } else { chi };
            let shape = vec![l, dims[i], dims[i], r];
            let data = (0..l * dims[i] * dims[i] * r).map(|_| rand_c(rng)).collect();
            DenseTensor::new(shape, data).unwrap()
        })
        .collect();
    Mpo::new(cores).unwrap()
}

/// Dense matrix of an MPO with trivial ends, site 0 most significant.
fn mpo_dense(o: &Mpo) -> DMatrix<C64> {
    let dims: Vec<usize> = o.cores.iter().map(|c| c.shape[1]).collect();
    let total: usize = dims.iter().product();
    let digits = |mut x: usize| {
        let mut d = vec![0; dims.len()];
        for i in (0..dims.len()).rev() {
            d[i] = x % dims[i];
            x /= dims[i];
        }
        d
    };
    DMatrix::from_fn(total, total, |a, b| {
        let (da, db) = (digits(a), digits(b));
        let mut v = vec![C64::new(1.0, 0.0)];
        for (i, c) in o.cores.iter().enumerate() {
            let (l, _, _, r) = c.dims4();
            let mut next = vec![C64::new(0.0, 0.0); r];
            for (x, vx) in v.iter().enumerate().take(l) {
                for (y, ny) in next.iter_mut().enumerate() {
                    *ny += vx * c.get4(x, da[i], db[i], y);
                }
            }
            v = next;
        }
        v[0]
    })
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn mpo_application_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dims = [2, 3, 2, 4];
    let s = random_mps(&mut rng, &dims, 3);
    let o = random_mpo(&mut rng, &dims, 2);
    let want = mpo_dense(&o) * nalgebra::DVector::from_vec(s.to_dense());
    let exact = apply_mpo(&o, &s).unwrap().to_dense();
    let scale = want.iter().map(|x| x.norm()).fold(0.0, f64::max);
    assert!(max_diff(&exact, want.as_slice()) < 1e-13 * scale);
    for method in [Method::Direct, Method::ZipUp] {
        let p = CompressionParams::new(method, None, 0.0, false).unwrap();
        let (c, w) = apply_and_compress(&o, &s, &p).unwrap();
        assert!(max_diff(&c.to_dense(), want.as_slice()) < 1e-12 * scale, "{method:?}");
        assert!(w < 1e-20);
    }
}

#[test]
fn two_site_truncation_fidelity_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = random_mps(&mut rng, &[6, 6], 6);
    let (c, w) = compress(&s, &CompressionParams::new(Method::Direct, Some(3), 0.0, false).unwrap()).unwrap();
    let fid = s.overlap(&c).unwrap().norm_sqr() / (s.norm_sqr() * c.norm_sqr());
    assert!((fid - (1.0 - w)).abs() < 1e-12, "{fid} vs {}", 1.0 - w);
    assert_eq!(c.bond_dims(), vec![3]);
}

#[test]
fn renormalize_keeps_the_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_mps(&mut rng, &[2; 8], 8);
    let (c, _) = compress(&s, &CompressionParams::new(Method::Direct, Some(2), 0.0, true).unwrap()).unwrap();
    assert!((c.norm() - s.norm()).abs() < 1e-10 * s.norm());
    assert!(c.max_bond() <= 2);
}

#[test]
fn eps_truncation_respects_the_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = random_mps(&mut rng, &[2; 8], 6);
    let eps = 0.1;
    let (c, w) = compress(&s, &CompressionParams::new(Method::Direct, None, eps, false).unwrap()).unwrap();
    let fid = s.overlap(&c).unwrap().norm_sqr() / (s.norm_sqr() * c.norm_sqr());
    assert!(fid >= 1.0 - w - 1e-12);
    assert!(w <= 7.0 * eps * eps + 1e-12);
    assert!(c.max_bond() < s.max_bond());
}

#[test]
fn rank_selection_rules() {
    assert_eq!(truncation_rank(&[1.0, 0.5, 0.25], None, 0.0), 3);
    assert_eq!(truncation_rank(&[1.0, 0.5, 0.25], Some(2), 0.0), 2);
    assert_eq!(truncation_rank(&[1.0, 0.5, 0.5, 0.1], Some(2), 0.0), 1);
    assert_eq!(truncation_rank(&[1.0, 1.0, 1.0], Some(2), 0.0), 2);
    assert_eq!(truncation_rank(&[1.0, 0.3, 0.3, 0.3, 0.01], None, 0.2), 4);
    assert_eq!(truncation_rank(&[1.0, 1e-20], None, 0.0), 1);
    assert_eq!(truncation_rank(&[0.0, 0.0], None, 0.0), 1);
}

#[test]
fn factorization_and_canonical_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = DMatrix::from_fn(7, 5, |_, _| rand_c(&mut rng));
    let f = truncated_factorization(&m, None, 0.0).unwrap();
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(f.s.len(), f.s.iter().map(|x| C64::new(*x, 0.0))));
    let back = &f.u * s * &f.vt;
    assert!((back - &m).iter().map(|x| x.norm()).fold(0.0, f64::max) < 1e-13);
    assert!(f.s.windows(2).all(|w| w[0] >= w[1]));

    let st = random_mps(&mut rng, &[2, 3, 2, 2, 3], 4);
    for r in 0..st.len() {
        let mc = mixed_canonical(&st, r).unwrap();
        assert!(max_diff(&mc.to_dense(), &st.to_dense()) < 1e-12 * st.norm());
        for i in 0..r {
            assert!(isometry_defect(&mc.cores[i], true) < 1e-12);
        }
        for i in r + 1..st.len() {
            assert!(isometry_defect(&mc.cores[i], false) < 1e-12);
        }
    }
}

#[test]
fn schmidt_values_match_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let s = random_mps(&mut rng, &[2, 2, 2, 2], 3);
    let v = s.to_dense();
    let m = DMatrix::from_fn(4, 4, |a, b| v[a * 4 + b]);
    let mut want: Vec<f64> = m.singular_values().iter().copied().collect();
    want.sort_by(|a, b| b.total_cmp(a));
    let got = schmidt_at_bond(&s, 2).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12 * want[0]);
    }
    let p = Mps::product(&vec![vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]; 3]).unwrap();
    let sv = schmidt_at_bond(&p, 1).unwrap();
    assert_eq!(sv.len(), 1);
    assert!((sv[0] - 1.0).abs() < 1e-14);
    assert!(schmidt_at_bond(&p, 0).is_err());
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(CompressionParams::new(Method::Direct, Some(0), 0.0, false).is_err());
    assert!(CompressionParams::new(Method::Direct, None, 1.5, false).is_err());
    assert!(CompressionParams::new(Method::Direct, None, -0.1, false).is_err());
    let a = DenseTensor::zeros(vec![1, 2, 3]);
    let b = DenseTensor::zeros(vec![2, 2, 1]);
    assert!(Mps::new(vec![a, b]).is_err());
    assert!(Mps::new(vec![]).is_err());
    assert!(DenseTensor::new(vec![2, 2], vec![C64::new(0.0, 0.0); 3]).is_err());
    let o = Mpo::identity(&[2, 2]).unwrap();
    let s = Mps::product(&vec![vec![C64::new(1.0, 0.0); 3]; 2]).unwrap();
    assert!(apply_mpo(&o, &s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn dense_round_trip(seed in any::<u64>(), dims in proptest::collection::vec(1usize..4, 1..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: usize = dims.iter().product();
        let v: Vec<C64> = (0..total).map(|_| rand_c(&mut rng)).collect();
        let s = Mps::from_dense(&v, &dims).unwrap();
        prop_assert!(max_diff(&s.to_dense(), &v) < 1e-12);
        let dot: C64 = v.iter().map(|x| x.conj() * x).sum();
        prop_assert!((s.overlap(&s).unwrap() - dot).norm() < 1e-11 * dot.norm());
    }

    #[test]
    fn lossless_compression_preserves_amplitudes(seed in any::<u64>(), chi in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_mps(&mut rng, &[2, 3, 2, 2, 2], chi);
        let (c, w) = compress(&s, &CompressionParams::lossless()).unwrap();
        let scale = s.to_dense().iter().map(|x| x.norm()).fold(0.0, f64::max);
        prop_assert!(max_diff(&c.to_dense(), &s.to_dense()) <= 1e-12 * scale);
        prop_assert!(w < 1e-20);
    }

    #[test]
    fn truncation_bound_holds(seed in any::<u64>(), chi in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_mps(&mut rng, &[2; 7], 6);
        let (c, w) = compress(&s, &CompressionParams::new(Method::Direct, Some(chi), 0.0, false).unwrap()).unwrap();
        let fid = s.overlap(&c).unwrap().norm_sqr() / (s.norm_sqr() * c.norm_sqr());
        prop_assert!(fid >= 1.0 - w - 1e-12);
        prop_assert!(c.max_bond() <= chi);
    }
}
