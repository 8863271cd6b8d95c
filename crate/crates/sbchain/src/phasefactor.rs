//! Longitudinal field and coupler phases, as scalars and as MPS factors.

use crate::influence::g_alpha;
use crate::model::{Horizon, ModelError};
use crate::tncore::{truncated_factorization, DenseTensor, Mps};
use crate::{SystemModel, C64};
use nalgebra::DMatrix;

/// Relative singular value cutoff of the coupler split.
pub const COUPLER_RANK_TOL: f64 = 1e-14;

/// Nonzero-weight times entering the phase of slice `k`: `(w, t)` pairs.
fn slice_weights(h: Horizon, k: usize, dt: f64) -> Result<Vec<(f64, f64)>, ModelError> {
    let mut out = Vec::with_capacity(2);
    for kp in [k as i64 - 1, k as i64] {
        let w: f64 = h.w(kp)?;
        if w != 0.0 {
            out.push((w, kp as f64 * dt));
        }
    }
    Ok(out)
}

/// exp(i Σ_α φ_α) for the base-4 configuration `cfg` at slice `k`.
pub fn phase_scalar(m: &SystemModel, h: Horizon, k: usize, cfg: &[usize], dt: f64) -> Result<C64, ModelError> {
    if cfg.len() != m.len() {
        return Err(ModelError::Shape(format!("config of length {} for {} sites", cfg.len(), m.len())));
    }
    let mut phi = 0.0;
    for (w, t) in slice_weights(h, k, dt)? {
        for alpha in [1i8, -1] {
            let spins: Vec<i8> = cfg.iter().map(|&j| g_alpha(alpha, j)).collect();
            phi -= f64::from(alpha) * dt / 2.0 * w * m.hz_energy(t, &spins)?;
        }
    }
    Ok(C64::from_polar(1.0, phi))
}

fn field_phase(m: &SystemModel, ws: &[(f64, f64)], r: usize, dt: f64) -> Result<[f64; 4], ModelError> {
    let mut out = [0.0; 4];
    for (w, t) in ws {
        let hz = m.hz_at(r, *t)?;
        for (j, o) in out.iter_mut().enumerate() {
            let s = f64::from(g_alpha(1, j) - g_alpha(-1, j));
            *o -= dt / 2.0 * w * hz * s;
        }
    }
    Ok(out)
}

fn coupler_phase(m: &SystemModel, ws: &[(f64, f64)], r: usize, dt: f64) -> Result<DMatrix<C64>, ModelError> {
    let mut phi = DMatrix::<f64>::zeros(4, 4);
    for (w, t) in ws {
        let jz = m.jzz_at(r, *t)?;
        for a in 0..4 {
            for b in 0..4 {
                let s = g_alpha(1, a) * g_alpha(1, b) - g_alpha(-1, a) * g_alpha(-1, b);
                phi[(a, b)] -= dt / 2.0 * w * jz * f64::from(s);
            }
        }
    }
    Ok(phi.map(|p| C64::from_polar(1.0, p)))
}

/// Phase factor of slice `k` as an MPS with cores `[c, j, c']`, bonds ≤ 4.
pub fn build_phase_mps(m: &SystemModel, h: Horizon, k: usize, dt: f64) -> crate::Result<Mps> {
    let l = m.len();
    let ws = slice_weights(h, k, dt)?;
    let mut rights: Vec<DMatrix<C64>> = Vec::with_capacity(l.saturating_sub(1));
    let mut lefts: Vec<DMatrix<C64>> = Vec::with_capacity(l.saturating_sub(1));
    for r in 0..l.saturating_sub(1) {
        let x = coupler_phase(m, &ws, r, dt)?;
        let f = truncated_factorization(&x, None, 0.0)?;
        let s0 = f.s.first().copied().unwrap_or(0.0);
        let rank = f.s.iter().take_while(|&&s| s > COUPLER_RANK_TOL * s0).count().max(1);
        let u = f.u.columns(0, rank).into_owned();
        let mut sv = f.vt.rows(0, rank).into_owned();
        for (i, mut row) in sv.row_iter_mut().enumerate() {
            row *= C64::from(f.s[i]);
        }
        lefts.push(u);
        rights.push(sv);
    }
    let mut cores = Vec::with_capacity(l);
    for r in 0..l {
        let lfc = field_phase(m, &ws, r, dt)?;
        let cl = if r == 0 { 1 } else { rights[r - 1].nrows() };
        let cr = if r + 1 == l { 1 } else { lefts[r].ncols() };
        let mut t = DenseTensor::zeros(vec![cl, 4, cr]);
        for a in 0..cl {
            for j in 0..4 {
                let left = if r == 0 { C64::from(1.0) } else { rights[r - 1][(a, j)] };
                let d = left * C64::from_polar(1.0, lfc[j]);
                for b in 0..cr {
                    let right = if r + 1 == l { C64::from(1.0) } else { lefts[r][(j, b)] };
                    let i = t.idx3(a, j, b);
                    t.data[i] = d * right;
                }
            }
        }
        cores.push(t);
    }
    Ok(Mps::new(cores)?)
}
