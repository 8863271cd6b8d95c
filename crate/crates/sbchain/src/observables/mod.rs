//! Readout of the density MPS and the exhaustive path-sum reference.

pub mod brute;

use crate::eta::EtaError;
use crate::influence::{g_alpha, j_of};
use crate::model::ModelError;
use crate::tncore::{schmidt_at_bond, Mps, TnError};
use crate::{SystemModel, C64};
use nalgebra::DMatrix;
use thiserror::Error;

/// Realignment sums above 1 by more than this are flagged as entangled.
pub const REALIGNMENT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("path sum too large: about {estimate:.3e} terms, limit {limit:.3e}")]
    TooLarge { estimate: f64, limit: f64 },
    #[error("density matrix has vanishing trace")]
    ZeroTrace,
    #[error(transparent)]
    Tn(#[from] TnError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eta(#[from] EtaError),
}

type Res<T> = Result<T, ObservableError>;

/// Single-site operator, `op[a][b] = ⟨a|O|b⟩` with index 0 = spin up.
pub type Op = [[C64; 2]; 2];

pub fn identity() -> Op {
    let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    [[o, z], [z, o]]
}

/// Pauli matrix by name: `x`, `y`, `z` or `i`.
pub fn pauli(name: char) -> Option<Op> {
    let (o, z, i) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0));
    match name.to_ascii_lowercase() {
        'i' => Some(identity()),
        'x' => Some([[z, o], [o, z]]),
        'y' => Some([[z, -i], [i, z]]),
        'z' => Some([[o, z], [z, -o]]),
        _ => None,
    }
}

/// Projector (1 + sσ_z)/2 onto spin `s`.
pub fn projector(s: i8) -> Op {
    let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    if s > 0 {
        [[o, z], [z, z]]
    } else {
        [[z, z], [z, o]]
    }
}

fn spin_index(s: i8) -> usize {
    usize::from(s < 0)
}

/// Per-site weight vector over j of Tr(ρO): O(g₋₁(j), g₁(j)).
fn weights(op: &Op) -> [C64; 4] {
    let mut w = [C64::new(0.0, 0.0); 4];
    for (j, x) in w.iter_mut().enumerate() {
        *x = op[spin_index(g_alpha(-1, j))][spin_index(g_alpha(1, j))];
    }
    w
}

fn contract(rho: &Mps, vecs: &[[C64; 4]]) -> Res<C64> {
    if vecs.len() != rho.len() || rho.phys_dims().iter().any(|&d| d != 4) {
        return Err(ObservableError::Argument("density MPS must carry one base-4 leg per site".into()));
    }
    let mut v = vec![C64::new(1.0, 0.0); rho.left_dim()];
    for (c, w) in rho.cores.iter().zip(vecs) {
        let (l, d, r) = c.dims3();
        let mut next = vec![C64::new(0.0, 0.0); r];
        for (a, va) in v.iter().enumerate().take(l) {
            for (j, wj) in w.iter().enumerate().take(d) {
                let f = va * wj;
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                for (b, nb) in next.iter_mut().enumerate() {
                    *nb += f * c.get3(a, j, b);
                }
            }
        }
        v = next;
    }
    Ok(v.iter().sum())
}

/// Trace of the unnormalized density MPS.
pub fn trace_rho(rho: &Mps) -> Res<C64> {
    contract(rho, &vec![weights(&identity()); rho.len()])
}

/// Tr(ρO)/Tr(ρ) with `ops` acting on sites `first..first+ops.len()`.
pub fn expect_product(rho: &Mps, first: usize, ops: &[Op]) -> Res<C64> {
    if first + ops.len() > rho.len() {
        return Err(ObservableError::Argument(format!(
            "operators on sites {first}..{} of a {}-site chain",
            first + ops.len(),
            rho.len()
        )));
    }
    let mut vecs = vec![weights(&identity()); rho.len()];
    for (i, op) in ops.iter().enumerate() {
        vecs[first + i] = weights(op);
    }
    let tr = trace_rho(rho)?;
    if tr.norm() == 0.0 {
        return Err(ObservableError::ZeroTrace);
    }
    Ok(contract(rho, &vecs)? / tr)
}

/// Probability of the classical z configuration `spins`.
pub fn spin_config_prob(rho: &Mps, spins: &[i8]) -> Res<f64> {
    if spins.len() != rho.len() {
        return Err(ObservableError::Argument(format!("configuration of length {} for {} sites", spins.len(), rho.len())));
    }
    let ops: Vec<Op> = spins.iter().map(|&s| projector(s)).collect();
    Ok(expect_product(rho, 0, &ops)?.re)
}

/// Σ_r h_x⟨σ_x⟩ + h_z⟨σ_z⟩ + J⟨σ_z σ_z⟩ at time `t`.
pub fn energy_per_cell(rho: &Mps, model: &SystemModel, t: f64) -> Res<f64> {
    let (sx, sz) = (pauli('x').unwrap(), pauli('z').unwrap());
    let mut e = 0.0;
    for r in 0..model.len() {
        let hx = model.hx_at(r, t)?;
        let hz = model.hz_at(r, t)?;
        if hx != 0.0 {
            e += hx * expect_product(rho, r, &[sx])?.re;
        }
        if hz != 0.0 {
            e += hz * expect_product(rho, r, &[sz])?.re;
        }
        if r + 1 < model.len() {
            let j = model.jzz_at(r, t)?;
            if j != 0.0 {
                e += j * expect_product(rho, r, &[sz, sz])?.re;
            }
        }
    }
    Ok(e)
}

/// Realignment sum and entanglement flag per bond `r = 1..L`.
pub fn realignment_check(rho: &Mps) -> Res<Vec<(f64, bool)>> {
    let tr = trace_rho(rho)?.re;
    if tr == 0.0 {
        return Err(ObservableError::ZeroTrace);
    }
    (1..rho.len())
        .map(|r| {
            let s: f64 = schmidt_at_bond(rho, r)?.iter().sum();
            let sum = s / tr;
            Ok((sum, sum > 1.0 + REALIGNMENT_TOL))
        })
        .collect()
}

/// Dense ρ/Tr ρ with rows σ⁺ and columns σ⁻, site 0 most significant.
pub fn density_matrix(rho: &Mps) -> Res<DMatrix<C64>> {
    let l = rho.len();
    if l > 12 {
        return Err(ObservableError::Argument(format!("{l} sites too many for a dense matrix")));
    }
    let tr = trace_rho(rho)?;
    if tr.norm() == 0.0 {
        return Err(ObservableError::ZeroTrace);
    }
    let dim = 1usize << l;
    let mut out = DMatrix::zeros(dim, dim);
    let mut cfg = vec![0usize; l];
    for a in 0..dim {
        for b in 0..dim {
            for (r, c) in cfg.iter_mut().enumerate() {
                let sp = if (a >> (l - 1 - r)) & 1 == 0 { 1 } else { -1 };
                let sm = if (b >> (l - 1 - r)) & 1 == 0 { 1 } else { -1 };
                *c = j_of(sp, sm);
            }
            out[(a, b)] = rho.amplitude(0, &cfg, 0)? / tr;
        }
    }
    Ok(out)
}

/// Dense pure state of an MPS with physical dimension 2.
pub fn dense_state(psi: &Mps) -> Res<Vec<C64>> {
    if psi.phys_dims().iter().any(|&d| d != 2) || psi.left_dim() != 1 || psi.right_dim() != 1 {
        return Err(ObservableError::Argument("pure state must have physical dimension 2 and trivial ends".into()));
    }
    Ok(psi.to_dense())
}
