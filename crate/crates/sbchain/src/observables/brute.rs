//! Exhaustive path sum over every spin variable of the discretized path
//! integral. Independent of the tensor-network code; used as a reference.
//! Bath pairs whose grid points lie `K_τΔm` or more apart are left out, as
//! are η terms with `l1 - l2 > 2K_τ - 1`, so the sum carries the same
//! memory truncation as the influence window.

use super::ObservableError;
use crate::bath::Axis;
use crate::eta::eta_direct;
use crate::model::Horizon;
use crate::{BathModel, SystemModel, C64};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::f64::consts::SQRT_2;

type Res<T> = Result<T, ObservableError>;

/// Default cap on the number of visited path configurations.
pub const DEFAULT_MAX_TERMS: f64 = 2e9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Forward and backward spin of a packed variable `p ∈ 0..4`.
fn spins(p: usize) -> (f64, f64) {
    (if p & 2 == 0 { 1.0 } else { -1.0 }, if p & 1 == 0 { 1.0 } else { -1.0 })
}

fn z_to_y(sy: f64, sz: f64) -> C64 {
    C64::new(1.0 + sz, -sy + sy * sz) / (2.0 * SQRT_2)
}

fn y_to_z(sz: f64, sy: f64) -> C64 {
    z_to_y(sy, sz).conj()
}

fn tfc_branch(alpha: f64, s1: f64, s2: f64, theta: f64, c: i32) -> C64 {
    let ic = match c {
        1 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    };
    C64::from(0.25 * (s1 + s2).powi(2) * (theta / 2.0).cos()) + ic * alpha * ((s1 - s2) / 2.0).powi(c) * (theta / 2.0).sin()
}

fn tfc(c: i32, theta: f64, p1: usize, p2: usize) -> C64 {
    let (a1, b1) = spins(p1);
    let (a2, b2) = spins(p2);
    tfc_branch(1.0, a2, a1, theta, c) * tfc_branch(-1.0, b1, b2, theta, c)
}

/// A path variable: axis and slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Var {
    nu: Axis,
    q: usize,
}

enum Factor {
    Unary([C64; 4]),
    Pair(usize, [[C64; 4]; 4]),
}

fn upsilon_z(n: usize, q1: usize, q2: usize) -> Vec<(usize, usize)> {
    let big = 2 * n + 1;
    if q1 == 0 && q2 == 0 {
        vec![(0, 0)]
    } else if q1 == 0 && q2 <= n {
        vec![(0, 2 * q2 - 1), (0, 2 * q2)]
    } else if q1 == 0 {
        vec![(0, big)]
    } else if q2 <= n && q1 < q2 {
        vec![(2 * q1 - 1, 2 * q2 - 1), (2 * q1, 2 * q2 - 1), (2 * q1 - 1, 2 * q2), (2 * q1, 2 * q2)]
    } else if q2 <= n {
        vec![(2 * q1 - 1, 2 * q1 - 1), (2 * q1 - 1, 2 * q1), (2 * q1, 2 * q1)]
    } else if q1 <= n {
        vec![(2 * q1 - 1, big), (2 * q1, big)]
    } else {
        vec![(big, big)]
    }
}

struct Site<'a> {
    model: &'a SystemModel,
    bath: &'a BathModel,
    r: usize,
    n: usize,
    dt: f64,
    k_tau: usize,
    eta: HashMap<(Axis, usize, usize), C64>,
}

impl Site<'_> {
    fn w(&self, k: i64) -> Res<f64> {
        Ok(Horizon::Step(self.n).w(k)?)
    }

    fn theta(&self, k: usize) -> Res<f64> {
        let w = self.w(k as i64)?;
        Ok(2.0 * self.dt * w * self.model.hx_at(self.r, k as f64 * self.dt)?)
    }

    fn eta(&mut self, nu: Axis, lo: usize, hi: usize) -> Res<C64> {
        if let Some(v) = self.eta.get(&(nu, lo, hi)) {
            return Ok(*v);
        }
        let v = eta_direct(self.bath, nu, self.r, self.n, hi as i64, lo as i64, self.dt)?;
        self.eta.insert((nu, lo, hi), v);
        Ok(v)
    }

    fn energy(&self, nu: Axis, l: usize) -> Res<f64> {
        let s = &self.bath.axis(nu, self.r).scale;
        Ok(crate::model::eval_scalar(s, (l / 2) as f64 * self.dt)?)
    }

    fn bath_table(&mut self, nu: Axis, q1: usize, q2: usize) -> Res<[[C64; 4]; 4]> {
        let pairs = match nu {
            Axis::Y => vec![(q1, q2)],
            Axis::Z => upsilon_z(self.n, q1, q2),
        };
        let mut coef = Vec::with_capacity(pairs.len());
        for (l1, l2) in pairs {
            if l1.max(l2) - l1.min(l2) >= 2 * self.k_tau {
                continue;
            }
            let e = self.energy(nu, l1)? * self.energy(nu, l2)?;
            coef.push((e, self.eta(nu, l1, l2)?));
        }
        let mut t = [[ZERO; 4]; 4];
        for (p1, row) in t.iter_mut().enumerate() {
            let (a1, b1) = spins(p1);
            for (p2, v) in row.iter_mut().enumerate() {
                let (a2, b2) = spins(p2);
                let mut g = ZERO;
                for (e, eta) in &coef {
                    g += e * (a2 - b2) * C64::new((a1 - b1) * eta.re, (a1 + b1) * eta.im);
                }
                *v = (-g).exp();
            }
        }
        Ok(t)
    }
}

fn pair_table(f: impl Fn(usize, usize) -> C64) -> [[C64; 4]; 4] {
    let mut t = [[ZERO; 4]; 4];
    for (a, row) in t.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = f(a, b);
        }
    }
    t
}

/// Σ over every non-z variable of one site, tabulated against the z path
/// `z_0..z_{n+1}` packed as Σ p_q 4^q.
fn site_table(model: &SystemModel, bath: &BathModel, r: usize, n: usize, dt: f64) -> Res<Vec<C64>> {
    let has_y = bath.has_y_noise(r);
    let mut vars = Vec::new();
    for k in 0..=n + 1 {
        vars.push(Var { nu: Axis::Z, q: k });
        if has_y && k <= n {
            vars.push(Var { nu: Axis::Y, q: 2 * k });
            vars.push(Var { nu: Axis::Y, q: 2 * k + 1 });
        }
    }
    let pos: HashMap<Var, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let k_tau = crate::eta::k_tau(bath.tau, dt)?;
    let mut site = Site { model, bath, r, n, dt, k_tau, eta: HashMap::new() };
    let mut factors: Vec<Vec<Factor>> = (0..vars.len()).map(|_| Vec::new()).collect();
    let add_pair = |a: Var, b: Var, t: [[C64; 4]; 4], factors: &mut Vec<Vec<Factor>>| {
        let (ia, ib) = (pos[&a], pos[&b]);
        if ia < ib {
            factors[ib].push(Factor::Pair(ia, t));
        } else {
            let mut tt = [[ZERO; 4]; 4];
            for x in 0..4 {
                for y in 0..4 {
                    tt[y][x] = t[x][y];
                }
            }
            factors[ia].push(Factor::Pair(ib, tt));
        }
    };
    let z = |q| Var { nu: Axis::Z, q };
    let y = |q| Var { nu: Axis::Y, q };
    for l in 0..=n {
        let th = site.theta(l)?;
        if has_y {
            add_pair(y(2 * l), y(2 * l + 1), pair_table(|a, b| tfc(1, th, a, b)), &mut factors);
            let yz1 = pair_table(|py, pz| {
                let (y1, ym) = spins(py);
                let (z1, zm) = spins(pz);
                y_to_z(z1, y1) * z_to_y(ym, zm)
            });
            add_pair(y(2 * l + 1), z(l + 1), yz1, &mut factors);
            let yz2 = pair_table(|py, pz| {
                let (y1, ym) = spins(py);
                let (z1, zm) = spins(pz);
                z_to_y(y1, z1) * y_to_z(zm, ym)
            });
            add_pair(y(2 * l), z(l), yz2, &mut factors);
        } else {
            add_pair(z(l), z(l + 1), pair_table(|a, b| tfc(2, th, a, b)), &mut factors);
        }
    }
    for (nu, top) in [(Axis::Y, 2 * n + 1), (Axis::Z, n + 1)] {
        if !bath.axis(nu, r).is_active() {
            continue;
        }
        let v = |q| Var { nu, q };
        let grid = |q: usize| match (nu, has_y) {
            (Axis::Z, true) => 3 * q,
            (Axis::Y, _) => 3 * (q / 2) + 1 + q % 2,
            (Axis::Z, false) => q,
        };
        let reach = site.k_tau * if has_y { 3 } else { 1 };
        for q2 in 0..=top {
            for q1 in 0..=q2 {
                if grid(q2) - grid(q1) >= reach {
                    continue;
                }
                let t = site.bath_table(nu, q1, q2)?;
                if q1 == q2 {
                    let mut u = [ZERO; 4];
                    for (p, x) in u.iter_mut().enumerate() {
                        *x = t[p][p];
                    }
                    factors[pos[&v(q2)]].push(Factor::Unary(u));
                } else {
                    add_pair(v(q1), v(q2), t, &mut factors);
                }
            }
        }
    }
    let zpos: Vec<usize> = (0..=n + 1).map(|q| pos[&z(q)]).collect();
    let nv = vars.len();
    let mut out = vec![ZERO; 1 << (2 * (n + 2))];
    let mut p = vec![0usize; nv];
    let mut prod = vec![ONE; nv + 1];
    let mut d = 0usize;
    loop {
        if d == nv {
            let idx = zpos.iter().enumerate().map(|(q, &i)| p[i] << (2 * q)).sum::<usize>();
            out[idx] += prod[nv];
            d -= 1;
            if !advance(&mut p, &mut d) {
                break;
            }
            continue;
        }
        let mut v = prod[d];
        for f in &factors[d] {
            v *= match f {
                Factor::Unary(u) => u[p[d]],
                Factor::Pair(i, t) => t[p[*i]][p[d]],
            };
            if v == ZERO {
                break;
            }
        }
        if v == ZERO {
            if !advance(&mut p, &mut d) {
                break;
            }
            continue;
        }
        prod[d + 1] = v;
        d += 1;
        if d < nv {
            p[d] = 0;
        }
    }
    Ok(out)
}

/// Move to the next value at depth `d`, backtracking as needed.
fn advance(p: &mut [usize], d: &mut usize) -> bool {
    loop {
        p[*d] += 1;
        if p[*d] < 4 {
            return true;
        }
        if *d == 0 {
            return false;
        }
        *d -= 1;
    }
}

/// Number of path configurations visited for a chain.
pub fn brute_cost(model: &SystemModel, bath: &BathModel, n: usize) -> f64 {
    let l = model.len() as f64;
    let per_site: f64 = (0..model.len())
        .map(|r| {
            let vars = if bath.has_y_noise(r) { 3 * (n + 1) + 1 } else { n + 2 };
            4f64.powi(vars as i32)
        })
        .sum();
    per_site + 4f64.powf(l * (n + 2) as f64)
}

/// Exact discretized ρ after `n` steps from the pure state `psi` (dense,
/// site 0 most significant, index 0 = up). Rows σ⁺, columns σ⁻.
pub fn brute_force_rho(model: &SystemModel, bath: &BathModel, psi: &[C64], n: usize, dt: f64) -> Res<DMatrix<C64>> {
    brute_force_rho_limited(model, bath, psi, n, dt, DEFAULT_MAX_TERMS)
}

pub fn brute_force_rho_limited(
    model: &SystemModel,
    bath: &BathModel,
    psi: &[C64],
    n: usize,
    dt: f64,
    max_terms: f64,
) -> Res<DMatrix<C64>> {
    let l = model.len();
    if n == 0 {
        return Err(ObservableError::Argument("need at least one step".into()));
    }
    if bath.len() != l || psi.len() != 1 << l {
        return Err(ObservableError::Argument("model, bath and state sizes differ".into()));
    }
    let cost = brute_cost(model, bath, n);
    if cost > max_terms {
        return Err(ObservableError::TooLarge { estimate: cost, limit: max_terms });
    }
    let tables = (0..l).map(|r| site_table(model, bath, r, n, dt)).collect::<Res<Vec<_>>>()?;
    let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let dim = 1usize << (2 * l);
    let site_digit = |x: usize, r: usize| (x >> (2 * (l - 1 - r))) & 3;
    let mut phases = Vec::with_capacity(n + 2);
    for k in 0..=n + 1 {
        let mut ph = vec![ZERO; dim];
        for (x, v) in ph.iter_mut().enumerate() {
            let mut phi = 0.0;
            for kp in [k as i64 - 1, k as i64] {
                let w = Horizon::Step(n).w::<f64>(kp)?;
                if w == 0.0 {
                    continue;
                }
                let t = kp as f64 * dt;
                for (alpha, pick) in [(1.0, 0usize), (-1.0, 1)] {
                    let s: Vec<f64> = (0..l)
                        .map(|r| {
                            let (a, b) = spins(site_digit(x, r));
                            if pick == 0 {
                                a
                            } else {
                                b
                            }
                        })
                        .collect();
                    let mut e = 0.0;
                    for r in 0..l {
                        e += model.hz_at(r, t)? * s[r];
                        if r + 1 < l {
                            e += model.jzz_at(r, t)? * s[r] * s[r + 1];
                        }
                    }
                    phi -= alpha * dt / 2.0 * w * e;
                }
            }
            *v = C64::from_polar(1.0, phi);
        }
        phases.push(ph);
    }
    let mut rho0 = vec![ZERO; dim];
    for (x, v) in rho0.iter_mut().enumerate() {
        let (mut a, mut b) = (0usize, 0usize);
        for r in 0..l {
            let (sp, sm) = spins(site_digit(x, r));
            a = 2 * a + usize::from(sp < 0.0);
            b = 2 * b + usize::from(sm < 0.0);
        }
        *v = psi[a] * psi[b].conj() / (norm * norm);
    }
    let slices = n + 2;
    let mut out = vec![ZERO; dim];
    let mut xs = vec![0usize; slices];
    loop {
        let mut v = rho0[xs[0]];
        if v != ZERO {
            for (k, &x) in xs.iter().enumerate() {
                v *= phases[k][x];
            }
            for (r, tab) in tables.iter().enumerate() {
                let idx = xs.iter().enumerate().map(|(q, &x)| site_digit(x, r) << (2 * q)).sum::<usize>();
                v *= tab[idx];
            }
            out[xs[slices - 1]] += v;
        }
        let mut i = 0;
        loop {
            xs[i] += 1;
            if xs[i] < dim {
                break;
            }
            xs[i] = 0;
            i += 1;
            if i == slices {
                break;
            }
        }
        if i == slices {
            break;
        }
    }
    let side = 1usize << l;
    let mut m = DMatrix::zeros(side, side);
    for (x, v) in out.iter().enumerate() {
        let (mut a, mut b) = (0usize, 0usize);
        for r in 0..l {
            let (sp, sm) = spins(site_digit(x, r));
            a = 2 * a + usize::from(sp < 0.0);
            b = 2 * b + usize::from(sm < 0.0);
        }
        m[(a, b)] = *v;
    }
    Ok(m)
}
