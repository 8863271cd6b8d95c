//! Transfer MPOs, the initial density MPS and the step recursion for the
//! reduced density matrix.

use crate::eta::{k_tau, EtaTable};
use crate::influence::{g_alpha, FinalNodes, InfluencePath, SiteInfluence};
use crate::model::{validate_model, Horizon};
use crate::phasefactor::build_phase_mps;
use crate::tncore::{apply_and_compress, CompressionParams, DenseTensor, Mpo, Mps};
use crate::{BathModel, SystemModel, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Snapshot format version written into every [`SystemState`].
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("state: {0}")]
    State(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

type Res<T> = crate::Result<T>;

const ZERO: C64 = C64::new(0.0, 0.0);

fn spin_index(s: i8) -> usize {
    usize::from(s < 0)
}

/// Density MPS of a pure state MPS with physical dimension 2, together with
/// the norm of the input. Inputs off unit norm are rescaled.
pub fn init_density_mps(psi: &Mps) -> Res<(Mps, f64)> {
    if psi.phys_dims().iter().any(|&d| d != 2) {
        return Err(EvolutionError::Config("pure state must have physical dimension 2".into()).into());
    }
    let norm = psi.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(EvolutionError::Config(format!("pure state norm {norm}")).into());
    }
    let mut cores = Vec::with_capacity(psi.len());
    for a in &psi.cores {
        let (l, _, r) = a.dims3();
        let mut t = DenseTensor::zeros(vec![l * l, 4, r * r]);
        for j in 0..4 {
            let (sp, sm) = (spin_index(g_alpha(1, j)), spin_index(g_alpha(-1, j)));
            for a1 in 0..l {
                for a2 in 0..l {
                    for b1 in 0..r {
                        for b2 in 0..r {
                            let i = t.idx3(a1 * l + a2, j, b1 * r + b2);
                            t.data[i] = a.get3(a1, sp, b1) * a.get3(a2, sm, b2).conj();
                        }
                    }
                }
            }
        }
        cores.push(t);
    }
    let mut rho = Mps::new(cores)?;
    if (norm - 1.0).abs() > 1e-12 {
        rho.scale(C64::from(1.0 / (norm * norm)));
    }
    Ok((rho, norm))
}

/// Product pure state from per-site amplitudes `(up, down)`.
pub fn product_state(sites: &[[C64; 2]]) -> Res<Mps> {
    Ok(Mps::product(&sites.iter().map(|s| s.to_vec()).collect::<Vec<_>>())?)
}

/// Which evolution operator to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferKind {
    /// First bulk operator, grid point 0.
    VdashInit,
    /// Bulk operator k, grid points kΔm+1..=(k+1)Δm.
    VdashK(usize),
    /// First operator of step n.
    Init(usize),
    /// Operator k of step n.
    K { n: usize, k: usize },
    /// Closing operator of step n.
    Final(usize),
}

impl TransferKind {
    fn span(self, dm: usize) -> (usize, usize) {
        match self {
            TransferKind::VdashInit | TransferKind::Init(_) => (0, 0),
            TransferKind::VdashK(k) | TransferKind::K { k, .. } => (k * dm + 1, (k + 1) * dm),
            TransferKind::Final(n) => (n * dm + 1, (n + 1) * dm),
        }
    }

    fn phase(self) -> (Horizon, usize) {
        match self {
            TransferKind::VdashInit => (Horizon::Bulk, 0),
            TransferKind::VdashK(k) => (Horizon::Bulk, k + 1),
            TransferKind::Init(n) => (Horizon::Step(n), 0),
            TransferKind::K { n, k } => (Horizon::Step(n), k + 1),
            TransferKind::Final(n) => (Horizon::Step(n), n + 1),
        }
    }
}

/// Sums the inner path variables of a run of influence nodes, giving
/// T[b_in, j, b_out] with `j` the variable of the last node.
pub fn contract_nodes(nodes: &[&DenseTensor]) -> DenseTensor {
    let last = nodes[nodes.len() - 1];
    if nodes.len() == 1 {
        return last.clone();
    }
    let summed = |t: &DenseTensor| {
        let (l, p, r) = t.dims3();
        DMatrix::from_fn(l, r, |a, b| (0..p).map(|j| t.get3(a, j, b)).sum::<C64>())
    };
    let mut acc = summed(nodes[0]);
    for t in &nodes[1..nodes.len() - 1] {
        acc = acc * summed(t);
    }
    let (_, p, r) = last.dims3();
    let prod = acc * last.as_matrix(1);
    DenseTensor::from_matrix(&prod, vec![prod.nrows(), p, r])
}

/// MPO core `[c, b_out, b_in, c']` from influence nodes and a phase core.
pub fn transfer_core(t: &DenseTensor, phase: &DenseTensor) -> DenseTensor {
    let (bi, p, bo) = t.dims3();
    let (cl, _, cr) = phase.dims3();
    let mut w = DenseTensor::zeros(vec![cl, bo, bi, cr]);
    for c in 0..cl {
        for c2 in 0..cr {
            for j in 0..p {
                let ph = phase.get3(c, j, c2);
                if ph == ZERO {
                    continue;
                }
                for i in 0..bi {
                    for o in 0..bo {
                        let v = t.get3(i, j, o);
                        if v != ZERO {
                            let k = w.idx4(c, o, i, c2);
                            w.data[k] += v * ph;
                        }
                    }
                }
            }
        }
    }
    w
}

fn node_at<'a>(p: &'a InfluencePath, fin: Option<&'a FinalNodes>, m: usize) -> Option<&'a DenseTensor> {
    match fin {
        Some(f) if m >= f.start => f.nodes.get(m - f.start),
        _ => p.archive.get(m),
    }
}

/// Builds one of the evolution MPOs. Bulk kinds read archived nodes only;
/// step kinds read `fins` where they cover the grid point.
pub fn build_transfer_mpo(
    kind: TransferKind,
    model: &SystemModel,
    dt: f64,
    paths: &[InfluencePath],
    fins: Option<&[FinalNodes]>,
) -> Res<Mpo> {
    let dm = paths
        .first()
        .map(|p| p.layers().delta_m)
        .ok_or_else(|| EvolutionError::State("no influence paths".into()))?;
    let bulk = matches!(kind, TransferKind::VdashInit | TransferKind::VdashK(_));
    if !bulk && fins.map_or(true, |f| f.len() != paths.len()) {
        return Err(EvolutionError::State("final influence nodes missing".into()).into());
    }
    let (h, k) = kind.phase();
    let phase = build_phase_mps(model, h, k, dt)?;
    let (a, b) = kind.span(dm);
    let mut cores = Vec::with_capacity(paths.len());
    for (r, p) in paths.iter().enumerate() {
        let fin = if bulk { None } else { fins.map(|f| &f[r]) };
        let nodes = (a..=b)
            .map(|m| node_at(p, fin, m))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| EvolutionError::State(format!("site {r}: influence nodes {a}..={b} unavailable for {kind:?}")))?;
        cores.push(transfer_core(&contract_nodes(&nodes), &phase.cores[r]));
    }
    Ok(Mpo::new(cores)?)
}

/// Run statistics of one completed step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    pub discarded: f64,
    pub max_bond: usize,
    pub influence_bond: usize,
}

/// Evolving reduced density matrix and everything needed to continue it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub version: u32,
    pub n: usize,
    pub dt: f64,
    pub delta_m: usize,
    pub k_tau: usize,
    pub params: CompressionParams,
    pub model: SystemModel,
    pub paths: Vec<InfluencePath>,
    /// Bulk-branch density MPS keyed by grid point.
    pub checkpoints: BTreeMap<usize, Mps>,
    pub rho: Mps,
    pub rho_log_norm: f64,
    pub history: Vec<StepRecord>,
    pub max_checkpoints: usize,
}

impl SystemState {
    pub fn new(model: &SystemModel, bath: &BathModel, psi: &Mps, dt: f64, params: CompressionParams) -> Res<Self> {
        if let Some(d) = validate_model(model).first() {
            return Err(EvolutionError::Config(d.to_string()).into());
        }
        if let Some(d) = bath.validate().first() {
            return Err(EvolutionError::Config(d.to_string()).into());
        }
        if bath.len() != model.len() || psi.len() != model.len() {
            return Err(EvolutionError::Config(format!(
                "site counts differ: model {}, bath {}, state {}",
                model.len(),
                bath.len(),
                psi.len()
            ))
            .into());
        }
        params.validate()?;
        let y0 = bath.has_y_noise(0);
        if (0..bath.len()).any(|r| bath.has_y_noise(r) != y0) {
            return Err(EvolutionError::Config("y-noise must be present on all sites or on none".into()).into());
        }
        let k = k_tau(bath.tau, dt)?;
        let etas = EtaTable::build(bath, dt)?;
        let paths = (0..model.len())
            .map(|r| InfluencePath::new(SiteInfluence::new(model, bath, &etas, r, k)?, params))
            .collect::<Result<Vec<_>, _>>()?;
        let (rho, _) = init_density_mps(psi)?;
        let mut checkpoints = BTreeMap::new();
        checkpoints.insert(0, rho.clone());
        Ok(SystemState {
            version: SNAPSHOT_VERSION,
            n: 0,
            dt,
            delta_m: if y0 { 3 } else { 1 },
            k_tau: k,
            params,
            model: model.clone(),
            paths,
            checkpoints,
            rho,
            rho_log_norm: 0.0,
            history: Vec::new(),
            max_checkpoints: 1,
        })
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.model.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model.is_empty()
    }

    /// Largest influence window seen on any site, in nodes.
    pub fn max_window(&self) -> usize {
        self.paths.iter().map(|p| p.max_window).max().unwrap_or(0)
    }

    pub fn check_version(&self) -> Res<()> {
        if self.version != SNAPSHOT_VERSION {
            return Err(EvolutionError::Snapshot(format!("version {} unsupported, expected {SNAPSHOT_VERSION}", self.version)).into());
        }
        Ok(())
    }

    fn apply(&self, o: &Mpo, s: &Mps, ledger: &mut (f64, f64)) -> Res<Mps> {
        let (mut out, w) = apply_and_compress(o, s, &self.params)?;
        let ln = out.normalize();
        if !ln.is_finite() {
            return Err(EvolutionError::State(format!("density MPS vanished at step {}", self.n + 1)).into());
        }
        ledger.0 += w;
        ledger.1 += ln;
        Ok(out)
    }

    /// Bulk-branch density at grid point `mu`, advancing the store.
    fn vdash_at(&mut self, mu: usize, ledger: &mut (f64, f64)) -> Res<Mps> {
        let (&m0, _) = self
            .checkpoints
            .range(..=mu)
            .next_back()
            .ok_or_else(|| EvolutionError::State(format!("no checkpoint at or before grid point {mu}")))?;
        let mut m = m0;
        let mut rho = self.checkpoints[&m].clone();
        while m < mu {
            let kind = if m == 0 { TransferKind::VdashInit } else { TransferKind::VdashK((m - 1) / self.delta_m) };
            let o = build_transfer_mpo(kind, &self.model, self.dt, &self.paths, None)?;
            rho = self.apply(&o, &rho, ledger)?;
            m = if m == 0 { 1 } else { m + self.delta_m };
        }
        if m != mu {
            return Err(EvolutionError::State(format!("checkpoint grid overshoots {mu}")).into());
        }
        self.checkpoints.insert(mu, rho.clone());
        self.checkpoints.retain(|&k, _| k >= mu);
        self.max_checkpoints = self.max_checkpoints.max(self.checkpoints.len());
        Ok(rho)
    }

    /// Advance by one time step.
    pub fn evolve_step(&mut self) -> Res<()> {
        let n = self.n + 1;
        let dm = self.delta_m;
        let target = n * dm - 1;
        self.paths.par_iter_mut().try_for_each(|p| p.advance_to(target))?;
        let fins = self.paths.par_iter().map(|p| p.finalize(n)).collect::<Result<Vec<_>, _>>()?;
        let mut ledger = (fins.iter().map(|f| f.discarded).sum::<f64>(), 0.0);
        let (mut rho, k0) = if n < self.k_tau {
            let start = self.checkpoints.get(&0).cloned().ok_or_else(|| EvolutionError::State("initial density dropped".into()))?;
            let o = build_transfer_mpo(TransferKind::Init(n), &self.model, self.dt, &self.paths, Some(&fins))?;
            (self.apply(&o, &start, &mut ledger)?, 0)
        } else {
            let mu = (n - self.k_tau) * dm + 1;
            (self.vdash_at(mu, &mut ledger)?, n - self.k_tau)
        };
        for k in k0..n {
            let o = build_transfer_mpo(TransferKind::K { n, k }, &self.model, self.dt, &self.paths, Some(&fins))?;
            rho = self.apply(&o, &rho, &mut ledger)?;
        }
        let o = build_transfer_mpo(TransferKind::Final(n), &self.model, self.dt, &self.paths, Some(&fins))?;
        rho = self.apply(&o, &rho, &mut ledger)?;
        let influence_bond = fins.iter().flat_map(|f| f.nodes.iter().map(|t| t.shape[0].max(t.shape[2]))).max().unwrap_or(1);
        self.history.push(StepRecord { n, discarded: ledger.0, max_bond: rho.max_bond(), influence_bond });
        self.rho_log_norm = ledger.1;
        self.rho = rho;
        self.n = n;
        Ok(())
    }

    pub fn evolve(&mut self, steps: usize) -> Res<()> {
        for _ in 0..steps {
            self.evolve_step()?;
        }
        Ok(())
    }
}
