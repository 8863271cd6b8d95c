//! Dense complex tensors, matrix product states and operators, truncated
//! factorizations and compression sweeps.

use crate::C64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Singular values with s² below this fraction of the total are numerically
/// zero and always dropped.
pub const RANK_FLOOR: f64 = 1e-28;
/// Relative gap, in units of the largest singular value, below which two
/// singular values count as one multiplet.
pub const TIE_TOL: f64 = 1e-12;
const SKETCH_MARGIN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("bad compression parameters: {0}")]
    Params(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

type Res<T> = Result<T, TnError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    pub shape: Vec<usize>,
    pub data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Res<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TnError::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        DenseTensor { shape, data: vec![C64::new(0.0, 0.0); n] }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dims3(&self) -> (usize, usize, usize) {
        (self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    #[inline]
    pub fn idx3(&self, l: usize, p: usize, r: usize) -> usize {
        (l * self.shape[1] + p) * self.shape[2] + r
    }

    #[inline]
    pub fn idx4(&self, l: usize, o: usize, i: usize, r: usize) -> usize {
        ((l * self.shape[1] + o) * self.shape[2] + i) * self.shape[3] + r
    }

    pub fn get3(&self, l: usize, p: usize, r: usize) -> C64 {
        self.data[self.idx3(l, p, r)]
    }

    pub fn get4(&self, l: usize, o: usize, i: usize, r: usize) -> C64 {
        self.data[self.idx4(l, o, i, r)]
    }

    pub fn scale(&mut self, c: C64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rows `shape[..split]`, columns the rest.
    pub fn as_matrix(&self, split: usize) -> DMatrix<C64> {
        let rows: usize = self.shape[..split].iter().product();
        let cols: usize = self.shape[split..].iter().product();
        DMatrix::from_fn(rows, cols, |i, j| self.data[i * cols + j])
    }

    pub fn from_matrix(m: &DMatrix<C64>, shape: Vec<usize>) -> Self {
        let cols = m.ncols();
        let mut data = vec![C64::new(0.0, 0.0); m.len()];
        for i in 0..m.nrows() {
            for j in 0..cols {
                data[i * cols + j] = m[(i, j)];
            }
        }
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        DenseTensor { shape, data }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    ZipUp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionParams {
    pub method: Method,
    /// `None` is unlimited.
    pub chi_max: Option<usize>,
    pub eps_trunc: f64,
    pub renormalize: bool,
}

impl CompressionParams {
    pub fn new(method: Method, chi_max: Option<usize>, eps_trunc: f64, renormalize: bool) -> Res<Self> {
        let p = CompressionParams { method, chi_max, eps_trunc, renormalize };
        p.validate()?;
        Ok(p)
    }

    /// Keeps everything above the numerical rank floor.
    pub fn lossless() -> Self {
        CompressionParams { method: Method::Direct, chi_max: None, eps_trunc: 0.0, renormalize: false }
    }

    pub fn validate(&self) -> Res<()> {
        if !(self.eps_trunc >= 0.0 && self.eps_trunc < 1.0) {
            return Err(TnError::Params(format!("eps_trunc must lie in [0, 1), got {}", self.eps_trunc)));
        }
        if self.chi_max == Some(0) {
            return Err(TnError::Params("chi_max must be positive".into()));
        }
        Ok(())
    }
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self::lossless()
    }
}

#[derive(Clone, Debug)]
pub struct Factorization {
    pub u: DMatrix<C64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<C64>,
    pub discarded: f64,
}

fn tied(a: f64, b: f64, top: f64) -> bool {
    (a - b).abs() <= TIE_TOL * top
}

/// Rank kept from descending singular values `s`.
pub fn truncation_rank(s: &[f64], chi_max: Option<usize>, eps: f64) -> usize {
    if s.is_empty() {
        return 0;
    }
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 1;
    }
    let floor = s.iter().take_while(|v| *v * *v > RANK_FLOOR * total).count().max(1);
    let budget = eps * eps * total;
    let mut tail = 0.0;
    let mut k = s.len();
    while k > 1 && tail + s[k - 1] * s[k - 1] <= budget {
        tail += s[k - 1] * s[k - 1];
        k -= 1;
    }
    k = k.min(floor);
    let top = s[0];
    while k < floor && tied(s[k], s[k - 1], top) {
        k += 1;
    }
    if let Some(chi) = chi_max {
        if k > chi {
            let mut c = chi;
            while c > 0 && c < s.len() && tied(s[c], s[c - 1], top) {
                c -= 1;
            }
            k = if c == 0 { chi } else { c };
        }
    }
    k
}

fn svd_sorted(m: &DMatrix<C64>) -> Res<(DMatrix<C64>, Vec<f64>, DMatrix<C64>)> {
    if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(TnError::Numeric("nonfinite matrix entry".into()));
    }
    let (r, c) = m.shape();
    let fm = faer::Mat::<C64>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = fm
        .thin_svd()
        .map_err(|_| TnError::Numeric(format!("svd of {r}x{c} did not converge")))?;
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = fs.nrows();
    let s: Vec<f64> = (0..k).map(|i| fs[i].re).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let u = DMatrix::from_fn(r, k, |i, j| fu[(i, order[j])]);
    let vt = DMatrix::from_fn(k, c, |i, j| fv[(j, order[i])].conj());
    Ok((u, order.iter().map(|&j| s[j]).collect(), vt))
}

pub fn truncated_factorization(m: &DMatrix<C64>, chi_max: Option<usize>, eps: f64) -> Res<Factorization> {
    let (u, s, vt) = svd_sorted(m)?;
    Ok(truncate(u, s, vt, chi_max, eps))
}

fn truncate(u: DMatrix<C64>, s: Vec<f64>, vt: DMatrix<C64>, chi_max: Option<usize>, eps: f64) -> Factorization {
    let k = truncation_rank(&s, chi_max, eps);
    let total: f64 = s.iter().map(|v| v * v).sum();
    let dropped: f64 = s[k..].iter().map(|v| v * v).sum();
    let discarded = if total > 0.0 { dropped / total } else { 0.0 };
    Factorization {
        u: u.columns(0, k).into_owned(),
        s: s[..k].to_vec(),
        vt: vt.rows(0, k).into_owned(),
        discarded,
    }
}

/// SVD through a seeded random range sketch of width starting at `guess`.
/// `None` when the sketch would not be much narrower than the matrix.
fn sketched_svd(m: &DMatrix<C64>, guess: usize) -> Res<Option<(DMatrix<C64>, Vec<f64>, DMatrix<C64>)>> {
    let (r, c) = m.shape();
    let full = r.min(c);
    let mut k = guess.max(2 * SKETCH_MARGIN);
    let mut rng = ChaCha8Rng::seed_from_u64(((r as u64) << 32) ^ c as u64);
    let fm = to_faer(m);
    while 5 * k < 4 * full {
        let omega = faer::Mat::<C64>::from_fn(c, k, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let y = &fm * &omega;
        let q = y.qr().compute_thin_Q();
        let b = q.adjoint() * &fm;
        let (ub, s, vt) = svd_sorted(&from_faer(b.as_ref()))?;
        let total: f64 = s.iter().map(|v| v * v).sum();
        let rank = s.iter().take_while(|v| *v * *v > RANK_FLOOR * total).count();
        if rank + SKETCH_MARGIN <= k {
            let u = from_faer((q * to_faer(&ub)).as_ref());
            return Ok(Some((u, s, vt)));
        }
        k *= 2;
    }
    Ok(None)
}

fn to_faer(m: &DMatrix<C64>) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn matmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    from_faer((to_faer(a) * to_faer(b)).as_ref())
}

fn thin_qr(m: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let qr = to_faer(m).qr();
    (from_faer(qr.compute_thin_Q().as_ref()), from_faer(qr.thin_R()))
}

/// Chain of rank-3 cores `[left, phys, right]`. Terminal bonds may exceed
/// one; they are then external legs that compression leaves untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mps {
    pub cores: Vec<DenseTensor>,
}

/// Chain of rank-4 cores `[left, out, in, right]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mpo {
    pub cores: Vec<DenseTensor>,
}

fn check_chain(cores: &[DenseTensor], rank: usize) -> Res<()> {
    if cores.is_empty() {
        return Err(TnError::Shape("empty chain".into()));
    }
    for (i, c) in cores.iter().enumerate() {
        if c.rank() != rank {
            return Err(TnError::Shape(format!("core {i} has rank {}, expected {rank}", c.rank())));
        }
        if c.shape.iter().any(|d| *d == 0) {
            return Err(TnError::Shape(format!("core {i} has a zero extent")));
        }
    }
    for i in 1..cores.len() {
        let r = cores[i - 1].shape[rank - 1];
        let l = cores[i].shape[0];
        if r != l {
            return Err(TnError::Shape(format!("bond {i}: {r} vs {l}")));
        }
    }
    Ok(())
}

impl Mps {
    pub fn new(cores: Vec<DenseTensor>) -> Res<Self> {
        check_chain(&cores, 3)?;
        Ok(Mps { cores })
    }

    /// Bond-one product of per-site vectors.
    pub fn product(states: &[Vec<C64>]) -> Res<Self> {
        let cores = states
            .iter()
            .map(|v| DenseTensor::new(vec![1, v.len(), 1], v.clone()))
            .collect::<Res<Vec<_>>>()?;
        Mps::new(cores)
    }

    /// Exact MPS of a dense vector with site 0 most significant.
    pub fn from_dense(v: &[C64], dims: &[usize]) -> Res<Self> {
        let total: usize = dims.iter().product();
        if total != v.len() || dims.is_empty() {
            return Err(TnError::Shape(format!("dense vector of {} entries vs dims {dims:?}", v.len())));
        }
        let mut cores = Vec::with_capacity(dims.len());
        let mut rest = DMatrix::from_fn(dims[0], total / dims[0], |i, j| v[i * (total / dims[0]) + j]);
        let mut left = 1;
        for (i, &d) in dims.iter().enumerate() {
            if i + 1 == dims.len() {
                cores.push(DenseTensor::from_matrix(&rest, vec![left, d, 1]));
                break;
            }
            let f = truncated_factorization(&rest, None, 0.0)?;
            let k = f.s.len();
            cores.push(DenseTensor::from_matrix(&f.u, vec![left, d, k]));
            let sv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, f.s.iter().map(|x| C64::new(*x, 0.0)))) * f.vt;
            let next = dims[i + 1];
            let cols = sv.ncols() / next;
            let t = DenseTensor::from_matrix(&sv, vec![k, sv.ncols()]);
            rest = DMatrix::from_fn(k * next, cols, |a, b| t.data[a * cols + b]);
            left = k;
        }
        Mps::new(cores)
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape[1]).collect()
    }

    /// Internal bond extents, one per adjacent pair.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores[..self.len() - 1].iter().map(|c| c.shape[2]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn left_dim(&self) -> usize {
        self.cores[0].shape[0]
    }

    pub fn right_dim(&self) -> usize {
        self.cores[self.len() - 1].shape[2]
    }

    /// Amplitude with external legs pinned to `lb` and `rb`.
    pub fn amplitude(&self, lb: usize, config: &[usize], rb: usize) -> Res<C64> {
        if config.len() != self.len() {
            return Err(TnError::Index(format!("config of length {} for {} sites", config.len(), self.len())));
        }
        if lb >= self.left_dim() || rb >= self.right_dim() {
            return Err(TnError::Index("external leg index".into()));
        }
        let mut v = vec![C64::new(0.0, 0.0); self.left_dim()];
        v[lb] = C64::new(1.0, 0.0);
        for (c, &p) in self.cores.iter().zip(config) {
            let (l, d, r) = c.dims3();
            if p >= d {
                return Err(TnError::Index(format!("physical index {p} >= {d}")));
            }
            let mut w = vec![C64::new(0.0, 0.0); r];
            for (a, va) in v.iter().enumerate().take(l) {
                if *va == C64::new(0.0, 0.0) {
                    continue;
                }
                let base = c.idx3(a, p, 0);
                for (b, wb) in w.iter_mut().enumerate() {
                    *wb += va * c.data[base + b];
                }
            }
            v = w;
        }
        Ok(v[rb])
    }

    /// Dense vector over `(left leg, sites..., right leg)`, row-major.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut acc = self.cores[0].clone();
        for c in &self.cores[1..] {
            let rows = acc.data.len() / acc.shape[acc.rank() - 1];
            let a = DMatrix::from_fn(rows, acc.shape[acc.rank() - 1], |i, j| acc.data[i * acc.shape[acc.rank() - 1] + j]);
            let b = c.as_matrix(1);
            let prod = matmul(&a, &b);
            let mut shape = acc.shape[..acc.rank() - 1].to_vec();
            shape.push(c.shape[1]);
            shape.push(c.shape[2]);
            acc = DenseTensor::from_matrix(&DMatrix::from_fn(prod.nrows() * c.shape[1], c.shape[2], |i, j| {
                let (row, p) = (i / c.shape[1], i % c.shape[1]);
                prod[(row, p * c.shape[2] + j)]
            }), shape);
        }
        acc.data
    }

    /// ⟨self|other⟩, summing external legs diagonally.
    pub fn overlap(&self, other: &Mps) -> Res<C64> {
        if self.len() != other.len() || self.phys_dims() != other.phys_dims() {
            return Err(TnError::Shape("overlap of mismatched chains".into()));
        }
        if self.left_dim() != other.left_dim() || self.right_dim() != other.right_dim() {
            return Err(TnError::Shape("overlap with mismatched external legs".into()));
        }
        let mut e = DMatrix::<C64>::identity(self.left_dim(), other.left_dim());
        for (a, b) in self.cores.iter().zip(&other.cores) {
            let (_, d, ra) = a.dims3();
            let rb = b.shape[2];
            let mut next = DMatrix::<C64>::zeros(ra, rb);
            for p in 0..d {
                let ap = slice_phys(a, p);
                let bp = slice_phys(b, p);
                next += matmul(&matmul(&ap.adjoint(), &e), &bp);
            }
            e = next;
        }
        Ok(e.trace())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.overlap(self).map(|v| v.re).unwrap_or(f64::NAN)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().max(0.0).sqrt()
    }

    pub fn scale(&mut self, c: C64) {
        self.cores[0].scale(c);
    }

    /// Rescales to unit norm and returns the logarithm of the old norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            let k = self.len() as f64;
            let per = n.powf(1.0 / k);
            for c in &mut self.cores {
                c.scale(C64::new(1.0 / per, 0.0));
            }
            n.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

fn slice_phys(c: &DenseTensor, p: usize) -> DMatrix<C64> {
    let (l, _, r) = c.dims3();
    DMatrix::from_fn(l, r, |a, b| c.get3(a, p, b))
}

impl Mpo {
    pub fn new(cores: Vec<DenseTensor>) -> Res<Self> {
        check_chain(&cores, 4)?;
        Ok(Mpo { cores })
    }

    pub fn identity(dims: &[usize]) -> Res<Self> {
        let cores = dims
            .iter()
            .map(|&d| {
                let mut t = DenseTensor::zeros(vec![1, d, d, 1]);
                for i in 0..d {
                    let k = t.idx4(0, i, i, 0);
                    t.data[k] = C64::new(1.0, 0.0);
                }
                t
            })
            .collect();
        Mpo::new(cores)
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores[..self.len() - 1].iter().map(|c| c.shape[3]).collect()
    }
}

fn check_apply(o: &Mpo, s: &Mps) -> Res<()> {
    if o.len() != s.len() {
        return Err(TnError::Shape(format!("MPO of {} sites on MPS of {}", o.len(), s.len())));
    }
    for (i, (w, m)) in o.cores.iter().zip(&s.cores).enumerate() {
        if w.shape[2] != m.shape[1] {
            return Err(TnError::Shape(format!("site {i}: MPO input {} vs MPS physical {}", w.shape[2], m.shape[1])));
        }
    }
    Ok(())
}

/// Exact product; bonds multiply.
pub fn apply_mpo(o: &Mpo, s: &Mps) -> Res<Mps> {
    check_apply(o, s)?;
    let cores = o
        .cores
        .iter()
        .zip(&s.cores)
        .map(|(w, m)| {
            let (al, dout, din, ar) = w.dims4();
            let (bl, _, br) = m.dims3();
            let mut t = DenseTensor::zeros(vec![al * bl, dout, ar * br]);
            for a in 0..al {
                for o_ in 0..dout {
                    for i in 0..din {
                        for a2 in 0..ar {
                            let wv = w.get4(a, o_, i, a2);
                            if wv == C64::new(0.0, 0.0) {
                                continue;
                            }
                            for b in 0..bl {
                                let src = m.idx3(b, i, 0);
                                let dst = t.idx3(a * bl + b, o_, a2 * br);
                                for b2 in 0..br {
                                    t.data[dst + b2] += wv * m.data[src + b2];
                                }
                            }
                        }
                    }
                }
            }
            t
        })
        .collect();
    Mps::new(cores)
}

fn absorb_left(m: &DMatrix<C64>, core: &DenseTensor) -> DenseTensor {
    let (_, p, r) = core.dims3();
    let prod = matmul(m, &core.as_matrix(1));
    DenseTensor::from_matrix(&prod, vec![m.nrows(), p, r])
}

fn absorb_right(core: &DenseTensor, m: &DMatrix<C64>) -> DenseTensor {
    let (l, p, _) = core.dims3();
    let prod = matmul(&core.as_matrix(2), m);
    DenseTensor::from_matrix(&prod, vec![l, p, m.ncols()])
}

/// Right-to-left LQ sweep; afterwards cores 1.. are right isometries.
fn right_sweep(cores: &mut [DenseTensor], stop: usize) {
    for i in (stop + 1..cores.len()).rev() {
        let (l, p, r) = cores[i].dims3();
        let m = cores[i].as_matrix(1);
        let (q, rr) = thin_qr(&m.adjoint());
        let k = q.ncols();
        cores[i] = DenseTensor::from_matrix(&q.adjoint(), vec![k, p, r]);
        debug_assert_eq!(rr.ncols(), l);
        cores[i - 1] = absorb_right(&cores[i - 1], &rr.adjoint());
    }
}

/// Left-to-right QR sweep over cores `..stop`.
fn left_sweep(cores: &mut [DenseTensor], stop: usize) {
    for i in 0..stop.min(cores.len().saturating_sub(1)) {
        let (l, p, _) = cores[i].dims3();
        let (q, rr) = thin_qr(&cores[i].as_matrix(2));
        let k = q.ncols();
        cores[i] = DenseTensor::from_matrix(&q, vec![l, p, k]);
        cores[i + 1] = absorb_left(&rr, &cores[i + 1]);
    }
}

/// Direct compression: LQ sweep right to left, then truncating SVD sweep
/// left to right. Returns the summed relative discarded weight.
pub fn compress(s: &Mps, p: &CompressionParams) -> Res<(Mps, f64)> {
    p.validate()?;
    compress_with(s, p.chi_max, p.eps_trunc, p.renormalize)
}

fn compress_with(s: &Mps, chi: Option<usize>, eps: f64, renormalize: bool) -> Res<(Mps, f64)> {
    let mut cores = s.cores.clone();
    let n = cores.len();
    if n == 1 {
        return Ok((s.clone(), 0.0));
    }
    right_sweep(&mut cores, 0);
    let norm_in = cores[0].frobenius();
    let mut discarded = 0.0;
    for i in 0..n - 1 {
        let (l, p, _) = cores[i].dims3();
        let f = truncated_factorization(&cores[i].as_matrix(2), chi, eps)?;
        let k = f.s.len();
        discarded += f.discarded;
        cores[i] = DenseTensor::from_matrix(&f.u, vec![l, p, k]);
        let mut sv = f.vt;
        for (row, sval) in f.s.iter().enumerate() {
            sv.row_mut(row).scale_mut(*sval);
        }
        cores[i + 1] = absorb_left(&sv, &cores[i + 1]);
    }
    if renormalize {
        let norm_out = cores[n - 1].frobenius();
        if norm_out > 0.0 {
            cores[n - 1].scale(C64::new(norm_in / norm_out, 0.0));
        }
    }
    Ok((Mps { cores }, discarded))
}

/// MPO application followed by compression per `p`. The product is first
/// zipped up with only the numerical rank floor, which leaves the state
/// unchanged and keeps every later sweep at the reduced bond dimension.
pub fn apply_and_compress(o: &Mpo, s: &Mps, p: &CompressionParams) -> Res<(Mps, f64)> {
    p.validate()?;
    if p.method == Method::Direct && p.chi_max.is_some() {
        return compress(&apply_mpo(o, s)?, p);
    }
    let mut cores = s.cores.clone();
    right_sweep(&mut cores, 0);
    let s = Mps { cores };
    let (z, w1) = match p.method {
        Method::Direct => zip_up(o, &s, None, 0.0)?,
        Method::ZipUp => zip_up(o, &s, p.chi_max, p.eps_trunc / 10.0)?,
    };
    let (c, w2) = compress(&z, p)?;
    Ok((c, w1 + w2))
}

fn zip_up(o: &Mpo, s: &Mps, chi: Option<usize>, eps: f64) -> Res<(Mps, f64)> {
    check_apply(o, s)?;
    let n = s.len();
    let x0 = o.cores[0].shape[0] * s.cores[0].shape[0];
    let mut carry = DMatrix::<C64>::identity(x0, x0);
    let mut cores = Vec::with_capacity(n);
    let mut discarded = 0.0;
    for i in 0..n {
        let w = &o.cores[i];
        let m = &s.cores[i];
        let (al, dout, din, ar) = w.dims4();
        let (bl, _, br) = m.dims3();
        let x = carry.nrows();
        let mut t = vec![C64::new(0.0, 0.0); x * dout * ar * br];
        let t1 = {
            let c = DMatrix::from_fn(x * al, bl, |r, c| carry[(r / al, (r % al) * bl + c)]);
            matmul(&c, &m.as_matrix(1))
        };
        for xi in 0..x {
            for a in 0..al {
                for inp in 0..din {
                    for o_ in 0..dout {
                        for a2 in 0..ar {
                            let wv = w.get4(a, o_, inp, a2);
                            if wv == C64::new(0.0, 0.0) {
                                continue;
                            }
                            let dst = ((xi * dout + o_) * ar + a2) * br;
                            for b2 in 0..br {
                                t[dst + b2] += wv * t1[(xi * al + a, inp * br + b2)];
                            }
                        }
                    }
                }
            }
        }
        let tm = DMatrix::from_fn(x * dout, ar * br, |r, c| t[r * ar * br + c]);
        if i + 1 < n {
            let f = match sketched_svd(&tm, 3 * br / 2 + 2 * SKETCH_MARGIN)? {
                Some((u, s, vt)) => truncate(u, s, vt, chi, eps),
                None => truncated_factorization(&tm, chi, eps)?,
            };
            discarded += f.discarded;
            let k = f.s.len();
            cores.push(DenseTensor::from_matrix(&f.u, vec![x, dout, k]));
            let mut sv = f.vt;
            for (row, sval) in f.s.iter().enumerate() {
                sv.row_mut(row).scale_mut(*sval);
            }
            carry = sv;
        } else {
            cores.push(DenseTensor::from_matrix(&tm, vec![x, dout, ar * br]));
        }
    }
    Ok((Mps::new(cores)?, discarded))
}

/// Copy with cores `..r` left isometric and `r+1..` right isometric.
pub fn mixed_canonical(s: &Mps, r: usize) -> Res<Mps> {
    if r >= s.len() {
        return Err(TnError::Index(format!("center {r} on {} sites", s.len())));
    }
    let mut cores = s.cores.clone();
    left_sweep(&mut cores, r);
    right_sweep(&mut cores, r);
    Ok(Mps { cores })
}

/// Schmidt values across the bond between sites `r-1` and `r`.
pub fn schmidt_at_bond(s: &Mps, r: usize) -> Res<Vec<f64>> {
    if r == 0 || r >= s.len() {
        return Err(TnError::Index(format!("bond {r} on {} sites", s.len())));
    }
    let m = mixed_canonical(s, r)?;
    let (_, sv, _) = svd_sorted(&m.cores[r].as_matrix(1))?;
    Ok(sv)
}

/// Deviation from Σ_{l,p} A*·A = 1 (`left`) or Σ_{p,r} A·A* = 1.
pub fn isometry_defect(c: &DenseTensor, left: bool) -> f64 {
    let m = if left { c.as_matrix(2) } else { c.as_matrix(1).adjoint() };
    let g = m.adjoint() * &m;
    let id = DMatrix::<C64>::identity(g.nrows(), g.ncols());
    (g - id).iter().map(|v| v.norm()).fold(0.0, f64::max)
}
