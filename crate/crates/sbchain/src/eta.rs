//! Memory-truncated influence coefficients η_{n;l1,l2} and their caches.

use crate::bath::{eval_component_at_t, Axis, BathModel, SpectralComponent};
use crate::model::{Horizon, ModelError};
use crate::quadrature::{integrate_adaptive, integrate_weighted_osc, Kernel, QuadError, DEFAULT_LIMIT};
use crate::scalar::Real;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ETA_TOL_ABS: f64 = 1e-15;
const ETA_TOL_REL: f64 = 1e-11;
const TAYLOR_WIDTH: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EtaError {
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("memory time must be nonnegative, got {0}")]
    Memory(f64),
    #[error("index pair (l1={l1}, l2={l2}) invalid for step {n}")]
    Index { n: String, l1: i64, l2: i64 },
    #[error("{axis}-bath on site {r}: {source}")]
    Quadrature {
        axis: Axis,
        r: usize,
        #[source]
        source: QuadError<f64>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Memory length in whole steps.
pub fn k_tau<T: Real>(tau: T, dt: T) -> Result<usize, EtaError> {
    if !(dt > T::zero()) {
        return Err(EtaError::TimeStep(dt.as_f64()));
    }
    if !(tau >= T::zero()) {
        return Err(EtaError::Memory(tau.as_f64()));
    }
    let x = tau / dt - T::lit(1.75);
    let c = (x - T::lit(1e-9)).ceil().max(T::zero());
    Ok(c.to_usize().unwrap_or(0) + 3)
}

/// The four kernel rates of a coefficient, in units of Δt/4 and sorted so
/// that mirrored index pairs share one representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WQuarters {
    pub q: [u64; 4],
    pub same_index: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WCoeffs<T> {
    pub w: [T; 4],
    pub same_index: bool,
}

impl<T: Real> WCoeffs<T> {
    pub fn max(&self) -> T {
        self.w.iter().fold(T::zero(), |m, v| m.max(*v))
    }
}

pub fn w_quarters(h: Horizon, l1: i64, l2: i64) -> Result<WQuarters, EtaError> {
    let top = match h {
        Horizon::Step(n) => 2 * n as i64 + 1,
        Horizon::Bulk => i64::MAX,
    };
    if l2 < 0 || l2 > l1 || l1 > top {
        return Err(EtaError::Index { n: format!("{h:?}"), l1, l2 });
    }
    let sum = |a: i64, b: i64| -> Result<u64, EtaError> {
        let mut s = 0u64;
        for l in a..=b {
            s += u64::from(h.wtilde_quarters(l)?);
        }
        Ok(s)
    };
    let mut q = [sum(l2, l1 - 1)?, sum(l2 + 1, l1)?, sum(l2 + 1, l1 - 1)?, sum(l2, l1)?];
    if q[0] > q[1] {
        q.swap(0, 1);
    }
    Ok(WQuarters { q, same_index: l1 == l2 })
}

pub fn w_coeffs<T: Real>(h: Horizon, l1: i64, l2: i64, dt: T) -> Result<WCoeffs<T>, EtaError> {
    let wq = w_quarters(h, l1, l2)?;
    Ok(quarters_to_coeffs(wq, dt))
}

fn quarters_to_coeffs<T: Real>(wq: WQuarters, dt: T) -> WCoeffs<T> {
    let quarter = dt * T::lit(0.25);
    WCoeffs {
        w: wq.q.map(|v| T::from_u64(v).unwrap() * quarter),
        same_index: wq.same_index,
    }
}

fn power_sum<T: Real>(w: &[T; 4], p: i32) -> T {
    w[0].powi(p) + w[1].powi(p) - w[2].powi(p) - w[3].powi(p)
}

/// (Re f/ω², Im f/ω²) of the frequency kernel.
pub fn eta_integrand_parts<T: Real>(omega: T, c: &WCoeffs<T>, w_max: T) -> (T, T) {
    if w_max == T::zero() {
        return (T::zero(), T::zero());
    }
    let w = &c.w;
    if omega.abs() < T::lit(TAYLOR_WIDTH) / w_max {
        let mut f1 = T::zero();
        let mut f2 = T::zero();
        let mut fact = T::one();
        for m in 1..=3i32 {
            let sign = if m % 2 == 0 { T::one() } else { -T::one() };
            fact *= T::from_i32(2 * m - 1).unwrap() * T::from_i32(2 * m).unwrap();
            f1 += sign * omega.powi(2 * m - 2) / fact * power_sum(w, 2 * m);
            let fact_odd = fact * T::from_i32(2 * m + 1).unwrap();
            f2 -= sign * omega.powi(2 * m - 1) / fact_odd * power_sum(w, 2 * m + 1);
        }
        if c.same_index {
            f2 = T::zero();
        }
        return (f1, f2);
    }
    let two = T::lit(2.0);
    let (a, b, cc, d) = (w[0] * omega, w[1] * omega, w[2] * omega, w[3] * omega);
    let o2 = omega * omega;
    let f1 = (-two * ((a + cc) / two).sin() * ((a - cc) / two).sin()
        - two * ((b + d) / two).sin() * ((b - d) / two).sin())
        / o2;
    let f2 = if c.same_index {
        T::zero()
    } else {
        (-two * ((a + cc) / two).cos() * ((a - cc) / two).sin()
            - two * ((b + d) / two).cos() * ((b - d) / two).sin())
            / o2
    };
    (f1, f2)
}

fn breakpoints<T: Real>(c: &SpectralComponent<T>, beta: T, w_max: T) -> [T; 10] {
    let mut p = [T::zero(); 10];
    p[0] = -c.w_uv;
    let omega_a = if w_max > T::zero() { -T::PI() / w_max } else { T::neg_infinity() };
    p[2] = (-c.w_uv).max(omega_a).min(-c.w_ir);
    p[4] = -c.w_ir;
    let omega_b = -T::lit(25.0) / beta;
    p[1] = if p[0] < omega_b && omega_b < p[2] { omega_b } else { p[0] };
    p[3] = if p[2] < omega_b && omega_b < p[4] { omega_b } else { p[4] };
    for a in 5..10 {
        p[a] = -p[9 - a];
    }
    p
}

fn eta_component<T: Real>(c: &SpectralComponent<T>, beta: T, k: &WCoeffs<T>) -> Result<Complex<T>, QuadError<T>> {
    let w_max = k.max();
    let p = breakpoints(c, beta, w_max);
    let tol = T::lit(ETA_TOL_ABS).max(T::epsilon() * T::lit(0.1));
    let rel = T::lit(ETA_TOL_REL).max(T::epsilon() * T::lit(100.0));
    let a_t = |x: T| eval_component_at_t(c, beta, x);
    let (mut re, mut im) = (T::zero(), T::zero());
    for a in [2usize, 3, 5, 6] {
        let (lo, hi) = (p[a], p[a + 1]);
        if !(hi > lo) {
            continue;
        }
        re += integrate_adaptive(|x| a_t(x) * eta_integrand_parts(x, k, w_max).0, lo, hi, tol, rel, DEFAULT_LIMIT)?.value;
        if !k.same_index {
            im += integrate_adaptive(|x| a_t(x) * eta_integrand_parts(x, k, w_max).1, lo, hi, tol, rel, DEFAULT_LIMIT)?.value;
        }
    }
    // the band |ω| <= w_IR carries no spectral weight
    for a in [0usize, 1, 7, 8] {
        let (lo, hi) = (p[a], p[a + 1]);
        if !(hi > lo) {
            continue;
        }
        let g = |x: T| a_t(x) / (x * x);
        for (j, w) in k.w.iter().enumerate() {
            let sign = if j / 2 == 0 { T::one() } else { -T::one() };
            re += sign * integrate_weighted_osc(g, lo, hi, *w, Kernel::Cos, tol, rel)?.value;
            if !k.same_index {
                im -= sign * integrate_weighted_osc(g, lo, hi, *w, Kernel::Sin, tol, rel)?.value;
            }
        }
    }
    Ok(Complex::new(re, im) / T::TAU())
}

fn eta_from_quarters(b: &BathModel<f64>, nu: Axis, r: usize, wq: WQuarters, dt: f64) -> Result<Complex<f64>, EtaError> {
    let k = quarters_to_coeffs(wq, dt);
    let mut total = Complex::new(0.0, 0.0);
    for c in &b.axis(nu, r).components {
        total += eta_component(c, b.beta, &k).map_err(|source| EtaError::Quadrature { axis: nu, r, source })?;
    }
    Ok(total)
}

/// η_{ν;r;n;l1,l2} by direct frequency integration, l2 ≤ l1 ≤ 2n+1.
pub fn eta_direct(b: &BathModel<f64>, nu: Axis, r: usize, n: usize, l1: i64, l2: i64, dt: f64) -> Result<Complex<f64>, EtaError> {
    if !(dt > 0.0) {
        return Err(EtaError::TimeStep(dt));
    }
    let wq = w_quarters(Horizon::Step(n), l1, l2)?;
    eta_from_quarters(b, nu, r, wq, dt)
}

/// Generic-precision variant of [`eta_direct`] for a single component.
pub fn eta_direct_component<T: Real>(
    c: &SpectralComponent<T>,
    beta: T,
    n: usize,
    l1: i64,
    l2: i64,
    dt: T,
) -> Result<Complex<T>, EtaError> {
    let k = w_coeffs(Horizon::Step(n), l1, l2, dt)?;
    eta_component(c, beta, &k).map_err(|e| EtaError::Quadrature {
        axis: Axis::Z,
        r: 0,
        source: match e {
            QuadError::NonConvergence { best } => QuadError::NonConvergence {
                best: crate::quadrature::QuadResult {
                    value: best.value.as_f64(),
                    error_estimate: best.error_estimate.as_f64(),
                    subintervals_used: best.subintervals_used,
                },
            },
            QuadError::Bounds { a, b } => QuadError::Bounds { a: a.as_f64(), b: b.as_f64() },
            QuadError::NonFinite { at } => QuadError::NonFinite { at: at.as_f64() },
        },
    })
}

/// The six cached coefficient arrays of one (axis, site).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaCaches<T> {
    pub k_tau: usize,
    pub cache: [Vec<Complex<T>>; 6],
}

/// Defining (n, l1, l2) of cache `i` (0-based) slot `a`.
pub fn cache_index(k: usize, i: usize, a: usize) -> (usize, i64, i64) {
    let (a, ki) = (a as i64, k as i64);
    match i {
        0 => (a as usize + 1, 2 * a + 2, 0),
        1 => (a as usize + 1, 2 * a + 3, 0),
        2 => (a as usize + 1, 2 * a + 2, 1),
        3 => (k + 2, 2 * ki + 3, a + 4),
        4 => (k + 1, 2 * ki + 2, a + 3),
        _ => (k, 2 * ki + 1, a + 2),
    }
}

pub fn cache_len(k: usize, i: usize) -> usize {
    match i {
        0 | 1 => k - 1,
        2 => k,
        _ => 2 * k,
    }
}

pub fn build_eta_caches(b: &BathModel<f64>, nu: Axis, r: usize, dt: f64) -> Result<EtaCaches<f64>, EtaError> {
    let k = k_tau(b.tau, dt)?;
    let slots: Vec<(usize, usize)> = (0..6).flat_map(|i| (0..cache_len(k, i)).map(move |a| (i, a))).collect();
    let values: Vec<Complex<f64>> = slots
        .par_iter()
        .map(|&(i, a)| {
            let (n, l1, l2) = cache_index(k, i, a);
            eta_direct(b, nu, r, n, l1, l2, dt)
        })
        .collect::<Result<_, _>>()?;
    let mut cache: [Vec<Complex<f64>>; 6] = Default::default();
    for ((i, _), v) in slots.iter().zip(values) {
        cache[*i].push(v);
    }
    Ok(EtaCaches { k_tau: k, cache })
}

/// Cached η_{n;l1,l2} for l2 ≤ l1, or `None` when the pair lies outside the
/// memory window.
pub fn eta_lookup<T: Copy>(c: &EtaCaches<T>, h: Horizon, l1: i64, l2: i64) -> Result<Option<Complex<T>>, EtaError> {
    let k = c.k_tau as i64;
    let bad = || EtaError::Index { n: format!("{h:?}"), l1, l2 };
    if l2 < 0 || l1 < l2 {
        return Err(bad());
    }
    let get = |i: usize, a: i64| -> Result<Option<Complex<T>>, EtaError> {
        usize::try_from(a)
            .ok()
            .and_then(|a| c.cache[i].get(a).copied())
            .map(Some)
            .ok_or_else(bad)
    };
    let n = match h {
        Horizon::Step(n) => {
            let n = n as i64;
            if l1 > 2 * n + 1 {
                return Err(bad());
            }
            Some(n)
        }
        Horizon::Bulk => None,
    };
    // bulk pairs never touch the right boundary
    let interior = |l: i64| n.map_or(true, |n| l <= 2 * n - 1);
    match l2 {
        0 => {
            if interior(l1) && l1 <= 2 * k - 1 {
                get(5, 2 * k - 1 - l1)
            } else if let Some(n) = n.filter(|&n| n <= k - 1) {
                if l1 == 2 * n {
                    get(0, n - 1)
                } else {
                    get(1, n - 1)
                }
            } else {
                Ok(None)
            }
        }
        1 => {
            if interior(l1) && l1 <= 2 * k {
                get(4, 2 * k - l1)
            } else if let Some(n) = n {
                if l1 == 2 * n && n <= k {
                    get(2, n - 1)
                } else if l1 == 2 * n + 1 && n <= k - 1 {
                    get(0, n - 1)
                } else {
                    Ok(None)
                }
            } else {
                Ok(None)
            }
        }
        _ => {
            if interior(l1) {
                if l1 - l2 <= 2 * k - 1 {
                    get(3, 2 * k - 1 - l1 + l2)
                } else {
                    Ok(None)
                }
            } else {
                let n = n.expect("bulk pairs are interior");
                if l1 == 2 * n && l2 >= 2 * n + 1 - 2 * k {
                    get(4, 2 * k - 2 * n - 1 + l2)
                } else if l1 == 2 * n + 1 && l2 >= 2 * n + 2 - 2 * k {
                    get(5, 2 * k - 2 * n - 2 + l2)
                } else {
                    Ok(None)
                }
            }
        }
    }
}

/// Caches for every (axis, site) that carries noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaTable {
    pub dt: f64,
    pub y: Vec<Option<EtaCaches<f64>>>,
    pub z: Vec<Option<EtaCaches<f64>>>,
}

impl EtaTable {
    pub fn build(b: &BathModel<f64>, dt: f64) -> Result<Self, EtaError> {
        let jobs: Vec<(Axis, usize)> = [Axis::Y, Axis::Z]
            .into_iter()
            .flat_map(|nu| (0..b.len()).map(move |r| (nu, r)))
            .collect();
        let built: Vec<Option<EtaCaches<f64>>> = jobs
            .par_iter()
            .map(|&(nu, r)| {
                if b.axis(nu, r).is_active() {
                    build_eta_caches(b, nu, r, dt).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_, _>>()?;
        let (y, z) = built.split_at(b.len());
        Ok(EtaTable { dt, y: y.to_vec(), z: z.to_vec() })
    }

    pub fn get(&self, nu: Axis, r: usize) -> Option<&EtaCaches<f64>> {
        match nu {
            Axis::Y => self.y[r].as_ref(),
            Axis::Z => self.z[r].as_ref(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_length() {
        assert_eq!(k_tau(0.0, 0.1).unwrap(), 3);
        assert_eq!(k_tau(0.175, 0.1).unwrap(), 3);
        assert_eq!(k_tau(0.2, 0.1).unwrap(), 4);
        assert!(k_tau(0.2, 0.0).is_err());
    }

    #[test]
    fn rates_same_index() {
        let c = w_coeffs::<f64>(Horizon::Step(2), 3, 3, 0.1).unwrap();
        assert_eq!(c.w, [0.0, 0.0, 0.0, 0.05]);
        let c = w_coeffs::<f64>(Horizon::Step(2), 3, 1, 0.1).unwrap();
        assert!((c.w[2] - 0.05).abs() < 1e-15);
    }
}
