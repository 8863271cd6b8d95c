//! Base-4 path variables, two-point influence functions, influence tensors
//! and the iterative influence-path MPS procedures.

use crate::bath::Axis;
use crate::eta::{eta_lookup, EtaError, EtaTable};
use crate::model::{eval_scalar, Horizon, ModelError};
use crate::tncore::{apply_and_compress, CompressionParams, DenseTensor, Mpo, Mps, TnError};
use crate::{BathModel, EtaCaches, SystemModel, TimeScalar, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfluenceError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("influence path state: {0}")]
    State(String),
    #[error("internal: {0}")]
    Internal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eta(#[from] EtaError),
    #[error(transparent)]
    Tn(#[from] TnError),
}

type Res<T> = Result<T, InfluenceError>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Forward (`alpha = 1`) or backward (`alpha = -1`) spin of base-4 index `j`.
pub fn g_alpha(alpha: i8, j: usize) -> i8 {
    if alpha == 1 {
        1 - 2 * (j / 2) as i8
    } else {
        1 - 2 * (j % 2) as i8
    }
}

/// Base-4 index of the spin pair `(forward, backward)`.
pub fn j_of(fwd: i8, bwd: i8) -> usize {
    2 * usize::from(fwd < 0) + usize::from(bwd < 0)
}

/// Index j̄ with forward and backward spins exchanged.
pub fn j_bar(j: usize) -> usize {
    match j {
        1 => 2,
        2 => 1,
        _ => j,
    }
}

/// Layout of the combined y/z time grid of one site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMap {
    pub delta_m: usize,
    pub k_tau: usize,
}

impl LayerMap {
    pub fn new(has_y_noise: bool, k_tau: usize) -> Self {
        LayerMap { delta_m: if has_y_noise { 3 } else { 1 }, k_tau }
    }

    pub fn has_y(&self) -> bool {
        self.delta_m == 3
    }

    pub fn nu(&self, m: usize) -> Axis {
        if self.delta_m == 1 || m % 3 == 0 {
            Axis::Z
        } else {
            Axis::Y
        }
    }

    pub fn q(&self, m: usize) -> usize {
        if self.delta_m == 1 {
            return m;
        }
        (2 - ((m + 2) % 3) / 2) * (m / 3) + ((m % 3) + 1) / 3
    }

    pub fn mu(&self, m: usize) -> usize {
        (m + 1).saturating_sub(self.k_tau * self.delta_m)
    }

    pub fn q_y(&self, n: usize) -> i64 {
        if self.has_y() {
            2 * n as i64 + 1
        } else {
            -1
        }
    }

    pub fn q_z(&self, n: usize) -> i64 {
        n as i64 + 1
    }

    /// Last grid index of step `n`.
    pub fn m_last(&self, n: usize) -> usize {
        (n + 1) * self.delta_m
    }
}

/// Direction of a y/z basis change factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YzKind {
    ZToY,
    YToZ,
    Yz1,
    Yz2,
}

fn z_to_y(sy: i8, sz: i8) -> C64 {
    let (y, z) = (f64::from(sy), f64::from(sz));
    C64::new(1.0 + z, -y + y * z) / (2.0 * SQRT_2)
}

/// Basis-change overlaps. For `ZToY` the arguments are `(σ_y, σ_z)`, for
/// `YToZ` they are `(σ_z, σ_y)`; both as ±1 packed into base-4 `j1`, `j2`
/// through their forward component. `Yz1` takes `(j_y, j_z)` and `Yz2`
/// takes `(j_z, j_y)`.
pub fn two_point_yz(kind: YzKind, j1: usize, j2: usize) -> C64 {
    match kind {
        YzKind::ZToY => z_to_y(g_alpha(1, j1), g_alpha(1, j2)),
        YzKind::YToZ => z_to_y(g_alpha(1, j2), g_alpha(1, j1)).conj(),
        YzKind::Yz1 => {
            let (y, z) = (j1, j2);
            z_to_y(g_alpha(1, y), g_alpha(1, z)).conj() * z_to_y(g_alpha(-1, y), g_alpha(-1, z))
        }
        YzKind::Yz2 => {
            let (z, y) = (j1, j2);
            z_to_y(g_alpha(1, y), g_alpha(1, z)) * z_to_y(g_alpha(-1, y), g_alpha(-1, z)).conj()
        }
    }
}

/// Spin-space I^(z→y)(σ_y, σ_z).
pub fn overlap_z_to_y(sy: i8, sz: i8) -> C64 {
    z_to_y(sy, sz)
}

fn tfc_branch(alpha: i8, a: i8, b: i8, theta: f64, c: u32) -> C64 {
    let (a, b) = (f64::from(a), f64::from(b));
    let diag = 0.25 * (a + b) * (a + b) * (theta / 2.0).cos();
    let off = ((a - b) / 2.0).powi(c as i32) * f64::from(alpha) * (theta / 2.0).sin();
    let phase = if c == 1 { C64::new(-1.0, 0.0) } else { C64::new(0.0, -1.0) };
    C64::from(diag) + phase * off
}

/// Transverse field factor between `j1` at slice `q1` and `j2` at the next.
pub fn tfc_factor(nu: Axis, theta: f64, j1: usize, j2: usize) -> C64 {
    let c = match nu {
        Axis::Y => 1,
        Axis::Z => 2,
    };
    tfc_branch(1, g_alpha(1, j2), g_alpha(1, j1), theta, c) * tfc_branch(-1, g_alpha(-1, j1), g_alpha(-1, j2), theta, c)
}

/// Half-slab index pairs (l1 ≤ l2) coupled by slices q1 ≤ q2.
pub fn upsilon(nu: Axis, h: Horizon, q1: usize, q2: usize) -> Res<Vec<(i64, i64)>> {
    let (a, b) = (q1 as i64, q2 as i64);
    if a > b {
        return Err(InfluenceError::Argument(format!("slices out of order: {q1} > {q2}")));
    }
    if nu == Axis::Y {
        return Ok(vec![(a, b)]);
    }
    let n = match h {
        Horizon::Step(n) => n as i64,
        Horizon::Bulk => i64::MAX / 4,
    };
    if b > n + 1 {
        return Err(InfluenceError::Argument(format!("slice {q2} beyond step {n}")));
    }
    Ok(if a == 0 && b == 0 {
        vec![(0, 0)]
    } else if a == 0 && b <= n {
        vec![(0, 2 * b - 1), (0, 2 * b)]
    } else if a == 0 {
        vec![(0, 2 * n + 1)]
    } else if b <= n && a < b {
        vec![(2 * a - 1, 2 * b - 1), (2 * a, 2 * b - 1), (2 * a - 1, 2 * b), (2 * a, 2 * b)]
    } else if b <= n {
        vec![(2 * a - 1, 2 * a - 1), (2 * a - 1, 2 * a), (2 * a, 2 * a)]
    } else if a <= n {
        vec![(2 * a - 1, 2 * n + 1), (2 * a, 2 * n + 1)]
    } else {
        vec![(2 * n + 1, 2 * n + 1)]
    })
}

/// Noise of one axis at one site: coupling scale and η caches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisNoise {
    pub scale: TimeScalar,
    pub eta: EtaCaches,
}

/// Everything the two-point functions of one site depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteInfluence {
    pub r: usize,
    pub dt: f64,
    pub layers: LayerMap,
    pub hx: TimeScalar,
    pub y: Option<AxisNoise>,
    pub z: Option<AxisNoise>,
}

impl SiteInfluence {
    pub fn new(model: &SystemModel, bath: &BathModel, etas: &EtaTable, r: usize, k_tau: usize) -> Res<Self> {
        if r >= model.len() || r >= bath.len() {
            return Err(InfluenceError::Argument(format!("site {r} outside chain")));
        }
        let noise = |nu: Axis| -> Res<Option<AxisNoise>> {
            if !bath.axis(nu, r).is_active() {
                return Ok(None);
            }
            let eta = etas
                .get(nu, r)
                .cloned()
                .ok_or_else(|| InfluenceError::Argument(format!("missing {nu} eta caches for site {r}")))?;
            if eta.k_tau != k_tau {
                return Err(InfluenceError::Argument(format!("eta caches built for K={} not {k_tau}", eta.k_tau)));
            }
            Ok(Some(AxisNoise { scale: bath.axis(nu, r).scale.clone(), eta }))
        };
        let y = noise(Axis::Y)?;
        let z = noise(Axis::Z)?;
        Ok(SiteInfluence {
            r,
            dt: etas.dt,
            layers: LayerMap::new(y.is_some(), k_tau),
            hx: model.hx[r].clone(),
            y,
            z,
        })
    }

    fn noise(&self, nu: Axis) -> Option<&AxisNoise> {
        match nu {
            Axis::Y => self.y.as_ref(),
            Axis::Z => self.z.as_ref(),
        }
    }

    /// Bath factor between slices `q1 ≤ q2` of axis `nu`.
    pub fn bath_slices(&self, nu: Axis, h: Horizon, q1: usize, q2: usize, j1: usize, j2: usize) -> Res<C64> {
        let noise = match self.noise(nu) {
            Some(x) => x,
            None => return Ok(ONE),
        };
        let (p1, m1) = (f64::from(g_alpha(1, j1)), f64::from(g_alpha(-1, j1)));
        let (p2, m2) = (f64::from(g_alpha(1, j2)), f64::from(g_alpha(-1, j2)));
        if p2 == m2 {
            return Ok(ONE);
        }
        let e = |l: i64| eval_scalar(&noise.scale, (l / 2) as f64 * self.dt);
        let mut gamma = ZERO;
        for (l1, l2) in upsilon(nu, h, q1, q2)? {
            let eta = match eta_lookup(&noise.eta, h, l2, l1)? {
                Some(x) => x,
                None => continue,
            };
            let pre = e(l1)? * e(l2)? * (p2 - m2);
            gamma += pre * C64::new((p1 - m1) * eta.re, (p1 + m1) * eta.im);
        }
        Ok((-gamma).exp())
    }

    /// Bath factor between grid points `m1 ≤ m2`, both on axis `nu`.
    pub fn two_point_bath(&self, nu: Axis, h: Horizon, m1: usize, m2: usize, j1: usize, j2: usize) -> Res<C64> {
        let l = &self.layers;
        if m1 > m2 || l.nu(m1) != nu || l.nu(m2) != nu {
            return Err(InfluenceError::Argument(format!("grid pair ({m1}, {m2}) is not a {nu} pair")));
        }
        self.bath_slices(nu, h, l.q(m1), l.q(m2), j1, j2)
    }

    /// Rotation angle θ of the transverse field at slice `k`.
    pub fn theta(&self, h: Horizon, k: usize) -> Res<f64> {
        let w: f64 = h.w(k as i64)?;
        if w == 0.0 {
            return Ok(0.0);
        }
        Ok(2.0 * self.dt * w * eval_scalar(&self.hx, k as f64 * self.dt)?)
    }

    pub fn two_point_tfc(&self, nu: Axis, h: Horizon, k: usize, j1: usize, j2: usize) -> Res<C64> {
        Ok(tfc_factor(nu, self.theta(h, k)?, j1, j2))
    }

    /// Complete two-point factor I̊ between grid points `m1 ≤ m2`.
    pub fn two_point_total(&self, h: Horizon, m1: usize, m2: usize, j1: usize, j2: usize) -> Res<C64> {
        if m1 > m2 {
            return Err(InfluenceError::Argument(format!("grid pair ({m1}, {m2}) out of order")));
        }
        let l = &self.layers;
        let adj = m1 + 1 == m2;
        if !l.has_y() {
            let bath = self.bath_slices(Axis::Z, h, m1, m2, j1, j2)?;
            return if adj { Ok(self.two_point_tfc(Axis::Z, h, m1, j1, j2)? * bath) } else { Ok(bath) };
        }
        match (m1 % 3, m2 % 3, adj) {
            (0, 0, _) => self.two_point_bath(Axis::Z, h, m1, m2, j1, j2),
            (_, 0, true) => Ok(two_point_yz(YzKind::Yz1, j1, j2)),
            (_, 0, false) => Ok(ONE),
            (0, 1, true) => Ok(two_point_yz(YzKind::Yz2, j1, j2)),
            (0, 1, false) => Ok(ONE),
            (_, 1, false) => self.two_point_bath(Axis::Y, h, m1, m2, j1, j2),
            (0, 2, _) => Ok(ONE),
            (_, 2, true) => {
                let k = l.q(m1) / 2;
                Ok(self.two_point_tfc(Axis::Y, h, k, j1, j2)? * self.two_point_bath(Axis::Y, h, m1, m2, j1, j2)?)
            }
            (_, 2, false) => self.two_point_bath(Axis::Y, h, m1, m2, j1, j2),
            (a, b, adj) => Err(InfluenceError::Internal(format!("no case for ({a}, {b}, {adj})"))),
        }
    }

    /// All 16 values of [`two_point_total`](Self::two_point_total), `[j1][j2]`.
    pub fn pair_table(&self, h: Horizon, m1: usize, m2: usize) -> Res<[[C64; 4]; 4]> {
        let mut t = [[ZERO; 4]; 4];
        for (j1, row) in t.iter_mut().enumerate() {
            for (j2, v) in row.iter_mut().enumerate() {
                *v = self.two_point_total(h, m1, m2, j1, j2)?;
            }
        }
        Ok(t)
    }

    /// Rank-3 node M^(I̊) at grid point `m`: `[b, j, 1]` with b = j.
    pub fn node_m(&self, h: Horizon, m: usize) -> Res<DenseTensor> {
        let mut t = DenseTensor::zeros(vec![4, 4, 1]);
        for j in 0..4 {
            let i = t.idx3(j, j, 0);
            t.data[i] = self.two_point_total(h, m, m, j, j)?;
        }
        Ok(t)
    }

    /// Influence MPO Ω for grid point `m2`, acting on the nodes μ..=m2.
    /// With `terminal` the last core carries an output leg of extent 4.
    pub fn omega(&self, h: Horizon, m2: usize, terminal: bool) -> Res<Mpo> {
        let mu = self.layers.mu(m2);
        let mut cores = Vec::with_capacity(m2 - mu + 1);
        for m1 in mu..m2 {
            let tab = self.pair_table(h, m1, m2)?;
            let bl = if m1 == mu { 1 } else { 4 };
            let mut w = DenseTensor::zeros(vec![bl, 4, 4, 4]);
            for b in 0..4 {
                for j in 0..4 {
                    let v = tab[j][b];
                    if m1 == mu {
                        let i = w.idx4(0, j, j, b);
                        w.data[i] = v;
                    } else {
                        let i = w.idx4(b, j, j, b);
                        w.data[i] = v;
                    }
                }
            }
            cores.push(w);
        }
        let bl = if mu == m2 { 1 } else { 4 };
        let br = if terminal { 4 } else { 1 };
        let mut w = DenseTensor::zeros(vec![bl, 4, 4, br]);
        for j in 0..4 {
            let v = self.two_point_total(h, m2, m2, j, j)?;
            let b = if bl == 1 { 0 } else { j };
            let c = if terminal { j } else { 0 };
            let i = w.idx4(b, j, j, c);
            w.data[i] = v;
        }
        cores.push(w);
        Ok(Mpo::new(cores)?)
    }
}

fn ones_node() -> DenseTensor {
    DenseTensor::new(vec![1, 4, 1], vec![ONE; 4]).expect("static shape")
}

/// Influence path of one site: archived left nodes plus the live window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluencePath {
    pub site: SiteInfluence,
    pub params: CompressionParams,
    /// Nodes for grid points `0..archive.len()`, never touched again.
    pub archive: Vec<DenseTensor>,
    /// Nodes for grid points `archive.len()..=m2`.
    pub window: Mps,
    /// Last grid point absorbed.
    pub m2: usize,
    pub discarded: f64,
    pub log_norm: f64,
    pub max_window: usize,
}

/// Nodes of the finished influence functional for step `n`, covering grid
/// points `start..=(n+1)Δm`; the last node's right leg is the output index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalNodes {
    pub n: usize,
    pub start: usize,
    pub nodes: Vec<DenseTensor>,
    pub discarded: f64,
}

fn absorb_step(site: &SiteInfluence, params: &CompressionParams, h: Horizon, m2: usize, window: &Mps, terminal: bool) -> Res<(Mps, f64, f64)> {
    let omega = site.omega(h, m2, terminal)?;
    let mut cores = window.cores.clone();
    cores.push(ones_node());
    let (mut out, w) = apply_and_compress(&omega, &Mps::new(cores)?, params)?;
    let ln = out.normalize();
    if !ln.is_finite() {
        return Err(InfluenceError::Tn(TnError::Numeric(format!("influence window vanished at grid point {m2}"))));
    }
    Ok((out, w, ln))
}

impl InfluencePath {
    pub fn new(site: SiteInfluence, params: CompressionParams) -> Res<Self> {
        params.validate()?;
        let window = Mps::new(vec![site.node_m(Horizon::Bulk, 0)?])?;
        Ok(InfluencePath { site, params, archive: Vec::new(), window, m2: 0, discarded: 0.0, log_norm: 0.0, max_window: 1 })
    }

    pub fn layers(&self) -> LayerMap {
        self.site.layers
    }

    /// Absorb grid point `m2`, which must be the next one.
    pub fn step(&mut self, m2: usize) -> Res<()> {
        if m2 != self.m2 + 1 {
            return Err(InfluenceError::State(format!("expected grid point {}, got {m2}", self.m2 + 1)));
        }
        let (mut out, w, ln) = absorb_step(&self.site, &self.params, Horizon::Bulk, m2, &self.window, false)?;
        self.discarded += w;
        self.log_norm += ln;
        let keep_from = self.site.layers.mu(m2 + 1);
        while self.archive.len() < keep_from {
            self.archive.push(out.cores.remove(0));
        }
        self.window = Mps::new(out.cores)?;
        self.m2 = m2;
        self.max_window = self.max_window.max(self.window.len());
        Ok(())
    }

    /// Advance the bulk path up to grid point `m2`.
    pub fn advance_to(&mut self, m2: usize) -> Res<()> {
        while self.m2 < m2 {
            self.step(self.m2 + 1)?;
        }
        Ok(())
    }

    /// Close the path at step `n`; the bulk path must sit at nΔm − 1.
    pub fn finalize(&self, n: usize) -> Res<FinalNodes> {
        let l = self.site.layers;
        if n == 0 || self.m2 + 1 != n * l.delta_m {
            return Err(InfluenceError::State(format!("finalize({n}) with path at grid point {}", self.m2)));
        }
        let h = Horizon::Step(n);
        let start = self.archive.len();
        let mut done: Vec<DenseTensor> = Vec::new();
        let mut window = self.window.clone();
        let mut discarded = 0.0;
        let last = l.m_last(n);
        for m2 in n * l.delta_m..=last {
            let (mut out, w, _) = absorb_step(&self.site, &self.params, h, m2, &window, m2 == last)?;
            discarded += w;
            if m2 < last {
                let keep_from = l.mu(m2 + 1);
                while start + done.len() < keep_from {
                    done.push(out.cores.remove(0));
                }
            }
            window = Mps::new(out.cores)?;
        }
        done.extend(window.cores);
        Ok(FinalNodes { n, start, nodes: done, discarded })
    }

    /// Contraction of archive ⊗ final nodes over a full path `config` of
    /// grid points `0..=(n+1)Δm`, with the left leg fixed to `b0`.
    pub fn contract_path(&self, fin: &FinalNodes, b0: usize, config: &[usize]) -> Res<C64> {
        let nodes: Vec<&DenseTensor> = self.archive[..fin.start].iter().chain(fin.nodes.iter()).collect();
        if config.len() != nodes.len() {
            return Err(InfluenceError::Argument(format!("path of length {} for {} nodes", config.len(), nodes.len())));
        }
        let mut v = vec![ZERO; nodes[0].shape[0]];
        v[b0] = ONE;
        for (node, &j) in nodes.iter().zip(config) {
            let (bl, _, br) = node.dims3();
            let mut next = vec![ZERO; br];
            for (a, va) in v.iter().enumerate().take(bl) {
                if *va == ZERO {
                    continue;
                }
                for (b, nb) in next.iter_mut().enumerate() {
                    *nb += va * node.get3(a, j, b);
                }
            }
            v = next;
        }
        Ok(v.iter().sum())
    }
}
