//! Adaptive Gauss-Kronrod integration, plain and with cos/sin kernels.

use crate::scalar::Real;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Subinterval budget of a plain adaptive integration.
pub const DEFAULT_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error_estimate: T,
    pub subintervals_used: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError<T: std::fmt::Debug + std::fmt::Display> {
    #[error("no convergence after {} subintervals: value {} with error {}", best.subintervals_used, best.value, best.error_estimate)]
    NonConvergence { best: QuadResult<T> },
    #[error("bad integration bounds [{a}, {b}]")]
    Bounds { a: T, b: T },
    #[error("integrand not finite at {at}")]
    NonFinite { at: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    Cos,
    Sin,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    err: T,
}

impl<T: Real> PartialEq for Panel<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T: Real> Eq for Panel<T> {}
impl<T: Real> PartialOrd for Panel<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for Panel<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err
            .as_f64()
            .total_cmp(&o.err.as_f64())
            .then_with(|| o.a.as_f64().total_cmp(&self.a.as_f64()))
    }
}

fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Result<Panel<T>, QuadError<T>> {
    let half = T::lit(0.5);
    let c = half * (a + b);
    let h = half * (b - a);
    let eval = |x: T| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadError::NonFinite { at: x })
        }
    };
    let fc = eval(c)?;
    let mut resk = T::lit(WGK[7]) * fc;
    let mut resg = T::lit(WG[3]) * fc;
    let mut resabs = resk.abs();
    let mut pairs = [(T::zero(), T::zero()); 7];
    for (j, p) in pairs.iter_mut().enumerate() {
        let dx = h * T::lit(XGK[j]);
        let (f1, f2) = (eval(c - dx)?, eval(c + dx)?);
        *p = (f1, f2);
        let w = T::lit(WGK[j]);
        resk += w * (f1 + f2);
        resabs += w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let reskh = resk * half;
    let mut resasc = T::lit(WGK[7]) * (fc - reskh).abs();
    for (j, (f1, f2)) in pairs.iter().enumerate() {
        resasc += T::lit(WGK[j]) * ((*f1 - reskh).abs() + (*f2 - reskh).abs());
    }
    let ah = h.abs();
    let value = resk * h;
    resabs = resabs * ah;
    resasc = resasc * ah;
    let mut err = ((resk - resg) * h).abs();
    if resasc != T::zero() && err != T::zero() {
        err = resasc * T::one().min((T::lit(200.0) * err / resasc).powf(T::lit(1.5)));
    }
    let eps = T::epsilon();
    if resabs > T::min_positive_value() / (T::lit(50.0) * eps) {
        err = err.max(T::lit(50.0) * eps * resabs);
    }
    Ok(Panel { a, b, value, err })
}

/// Adaptive integration starting from the panels delimited by `points`.
///
/// `points` must be nondecreasing; zero-width panels are skipped.
pub fn integrate_adaptive_points<T: Real, F: Fn(T) -> T>(
    f: F,
    points: &[T],
    tol_abs: T,
    tol_rel: T,
    limit: usize,
) -> Result<QuadResult<T>, QuadError<T>> {
    if points.len() < 2 {
        return Ok(QuadResult { value: T::zero(), error_estimate: T::zero(), subintervals_used: 0 });
    }
    for w in points.windows(2) {
        if !(w[0] <= w[1]) || !w[0].is_finite() || !w[1].is_finite() {
            return Err(QuadError::Bounds { a: w[0], b: w[1] });
        }
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(&f, w[0], w[1])?);
        }
    }
    if heap.is_empty() {
        return Ok(QuadResult { value: T::zero(), error_estimate: T::zero(), subintervals_used: 0 });
    }
    let mut value = heap.iter().fold(T::zero(), |s, p| s + p.value);
    let mut err = heap.iter().fold(T::zero(), |s, p| s + p.err);
    let mut used = heap.len();
    let limit = limit.max(used);
    let mut frozen = Vec::new();
    loop {
        let result = QuadResult { value, error_estimate: err.max(T::zero()), subintervals_used: used };
        if err <= tol_abs.max(tol_rel * value.abs()) {
            return Ok(result);
        }
        if used + 1 > limit {
            return Err(QuadError::NonConvergence { best: result });
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => return Err(QuadError::NonConvergence { best: result }),
        };
        let mid = T::lit(0.5) * (worst.a + worst.b);
        let tiny = T::lit(100.0) * T::epsilon() * worst.a.abs().max(worst.b.abs());
        if worst.b - worst.a <= tiny || mid <= worst.a || mid >= worst.b {
            frozen.push(worst);
            if heap.is_empty() {
                return Err(QuadError::NonConvergence { best: result });
            }
            continue;
        }
        let (l, r) = (gk15(&f, worst.a, mid)?, gk15(&f, mid, worst.b)?);
        value += l.value + r.value - worst.value;
        err += l.err + r.err - worst.err;
        used += 1;
        heap.push(l);
        heap.push(r);
        if used % 64 == 0 {
            value = heap.iter().chain(frozen.iter()).fold(T::zero(), |s, p| s + p.value);
            err = heap.iter().chain(frozen.iter()).fold(T::zero(), |s, p| s + p.err);
        }
    }
}

pub fn integrate_adaptive<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    tol_abs: T,
    tol_rel: T,
    limit: usize,
) -> Result<QuadResult<T>, QuadError<T>> {
    if !(a <= b) {
        return Err(QuadError::Bounds { a, b });
    }
    integrate_adaptive_points(f, &[a, b], tol_abs, tol_rel, limit)
}

/// Subinterval budget for a kernel of rate `w` over `[a, b]`.
pub fn osc_limit<T: Real>(a: T, b: T, w: T) -> usize {
    let cycles = (w * (b - a) / T::TAU()).floor().to_usize().unwrap_or(0);
    DEFAULT_LIMIT * (1 + cycles)
}

/// ∫ f(ω)·kernel(Wω) dω over `[a, b]`.
pub fn integrate_weighted_osc<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    w: T,
    kind: Kernel,
    tol_abs: T,
    tol_rel: T,
) -> Result<QuadResult<T>, QuadError<T>> {
    if !(a <= b) || !(w >= T::zero()) {
        return Err(QuadError::Bounds { a, b });
    }
    if w == T::zero() {
        return match kind {
            Kernel::Sin => Ok(QuadResult { value: T::zero(), error_estimate: T::zero(), subintervals_used: 0 }),
            Kernel::Cos => integrate_adaptive(f, a, b, tol_abs, tol_rel, DEFAULT_LIMIT),
        };
    }
    let g = |x: T| {
        let k = match kind {
            Kernel::Cos => (w * x).cos(),
            Kernel::Sin => (w * x).sin(),
        };
        f(x) * k
    };
    let span = w * (b - a);
    let limit = osc_limit(a, b, w);
    if span < T::TAU() {
        return integrate_adaptive(g, a, b, tol_abs, tol_rel, limit);
    }
    let panels = (span / T::PI()).ceil().to_usize().unwrap_or(1).max(1);
    let step = (b - a) / T::from_usize(panels).unwrap();
    let mut points: Vec<T> = (0..panels).map(|i| a + step * T::from_usize(i).unwrap()).collect();
    points.push(b);
    integrate_adaptive_points(g, &points, tol_abs, tol_rel, limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let r = integrate_adaptive(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-13, 2000).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        let r = integrate_adaptive(|_x: f64| 0.0, 0.0, 1.0, 0.0, 0.0, 2000).unwrap();
        assert_eq!(r.value, 0.0);
        let r = integrate_adaptive(|x: f32| x * x, 0.0, 1.0, 1e-5, 1e-5, 2000).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn sin_kernel_zero_rate() {
        let r = integrate_weighted_osc(|x: f64| x.exp(), 0.0, 3.0, 0.0, Kernel::Sin, 1e-12, 1e-12).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.subintervals_used, 0);
    }
}
