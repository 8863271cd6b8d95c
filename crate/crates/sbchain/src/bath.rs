//! Finite temperature spectral densities of the y and z noise on each site.

use crate::model::{Diagnostic, TimeScalar};
use crate::quadrature::{integrate_weighted_osc, Kernel, QuadError};
use crate::scalar::Real;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Relative width of the small-frequency branch, in units of 1/β.
pub const SMALL_OMEGA: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Y,
    Z,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Fritsch-Carlson monotone cubic through `(x, y)` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic<T> {
    x: Vec<T>,
    y: Vec<T>,
    m: Vec<T>,
}

impl<T: Real> MonotoneCubic<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self, String> {
        if x.len() < 2 || x.len() != y.len() {
            return Err("need at least two (x, y) samples of equal length".into());
        }
        if x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("abscissae must be strictly increasing".into());
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err("nonfinite sample".into());
        }
        let n = x.len();
        let d: Vec<T> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let mut m = vec![T::zero(); n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for k in 1..n - 1 {
            m[k] = if d[k - 1] * d[k] <= T::zero() {
                T::zero()
            } else {
                T::lit(0.5) * (d[k - 1] + d[k])
            };
        }
        for k in 0..n - 1 {
            if d[k] == T::zero() {
                m[k] = T::zero();
                m[k + 1] = T::zero();
                continue;
            }
            let a = m[k] / d[k];
            let b = m[k + 1] / d[k];
            let s = a * a + b * b;
            if s > T::lit(9.0) {
                let t = T::lit(3.0) / s.sqrt();
                m[k] = t * a * d[k];
                m[k + 1] = t * b * d[k];
            }
        }
        Ok(MonotoneCubic { x, y, m })
    }

    /// Interpolated value, clamped to be nonnegative; zero outside the table.
    pub fn eval(&self, t: T) -> T {
        let n = self.x.len();
        if t < self.x[0] || t > self.x[n - 1] {
            return T::zero();
        }
        let k = self.x.partition_point(|v| *v <= t).clamp(1, n - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        let v = h00 * self.y[k] + h10 * h * self.m[k] + h01 * self.y[k + 1] + h11 * h * self.m[k + 1];
        v.max(T::zero())
    }
}

/// Zero temperature profile A₀(ω) for ω > 0.
#[derive(Clone)]
pub enum Shape<T> {
    /// η ω e^{-ω/ωc}
    Ohmic { eta: T, omega_c: T },
    Tabulated(MonotoneCubic<T>),
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: fmt::Debug> fmt::Debug for Shape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Ohmic { eta, omega_c } => f.debug_struct("Ohmic").field("eta", eta).field("omega_c", omega_c).finish(),
            Shape::Tabulated(c) => f.debug_tuple("Tabulated").field(c).finish(),
            Shape::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl<T: Real> Shape<T> {
    fn raw(&self, w: T) -> T {
        match self {
            Shape::Ohmic { eta, omega_c } => *eta * w * (-w / *omega_c).exp(),
            Shape::Tabulated(c) => c.eval(w),
            Shape::Custom(f) => f(w),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralComponent<T> {
    pub shape: Shape<T>,
    pub w_ir: T,
    pub w_uv: T,
    /// lim_{ω→0⁺} A₀(ω)/ω
    pub slope0: T,
}

impl<T: Real> SpectralComponent<T> {
    pub fn ohmic(eta: T, omega_c: T, w_ir: T, w_uv: T) -> Result<Self, String> {
        if !(omega_c > T::zero()) || !(eta >= T::zero()) {
            return Err("ohmic component needs eta >= 0 and omega_c > 0".into());
        }
        Self::checked(Shape::Ohmic { eta, omega_c }, w_ir, w_uv, Some(eta))
    }

    pub fn tabulated(omega: Vec<T>, values: Vec<T>, w_ir: T, w_uv: T) -> Result<Self, String> {
        if values.iter().any(|v| *v < T::zero()) {
            return Err("tabulated spectral density must be nonnegative".into());
        }
        Self::checked(Shape::Tabulated(MonotoneCubic::new(omega, values)?), w_ir, w_uv, None)
    }

    pub fn custom(f: Arc<dyn Fn(T) -> T + Send + Sync>, w_ir: T, w_uv: T) -> Result<Self, String> {
        Self::checked(Shape::Custom(f), w_ir, w_uv, None)
    }

    fn checked(shape: Shape<T>, w_ir: T, w_uv: T, slope0: Option<T>) -> Result<Self, String> {
        if !(w_ir >= T::zero()) || !(w_uv >= w_ir) || !w_uv.is_finite() {
            return Err(format!("cutoffs must satisfy 0 <= w_ir <= w_uv < inf, got {w_ir}, {w_uv}"));
        }
        let slope0 = match slope0 {
            Some(s) => s,
            None => {
                let h = T::lit(1e-4) * w_uv.max(T::one());
                let two = T::lit(2.0);
                two * shape.raw(h / two) / (h / two) - shape.raw(h) / h
            }
        };
        if !slope0.is_finite() {
            return Err("slope at zero frequency is not finite".into());
        }
        Ok(SpectralComponent { shape, w_ir, w_uv, slope0 })
    }

    /// A₀(ω) with the hard cutoffs applied.
    pub fn zero_temperature(&self, w: T) -> T {
        if w <= self.w_ir || w > self.w_uv {
            T::zero()
        } else {
            self.shape.raw(w)
        }
    }
}

pub fn eval_component_at_t<T: Real>(c: &SpectralComponent<T>, beta: T, omega: T) -> T {
    if omega == T::zero() {
        return if c.w_ir > T::zero() { T::zero() } else { c.slope0 / beta };
    }
    let a = omega.abs();
    if a <= c.w_ir || a > c.w_uv {
        return T::zero();
    }
    let a0 = c.shape.raw(a);
    let x = beta * omega;
    if a < T::lit(SMALL_OMEGA) / beta {
        let x2 = x * x;
        let series = T::one() + x / T::lit(2.0) + x2 / T::lit(12.0) - x2 * x2 / T::lit(720.0);
        a0 / (beta * a) * series
    } else if omega < T::zero() {
        -x.exp() * a0 / x.exp_m1()
    } else {
        -a0 / (-x).exp_m1()
    }
}

#[derive(Clone, Debug)]
pub struct AxisBath<T> {
    pub scale: TimeScalar<T>,
    pub components: Vec<SpectralComponent<T>>,
}

impl<T: Real> AxisBath<T> {
    pub fn none() -> Self {
        AxisBath { scale: TimeScalar::constant(T::zero()), components: Vec::new() }
    }

    pub fn new(scale: TimeScalar<T>, components: Vec<SpectralComponent<T>>) -> Self {
        AxisBath { scale, components }
    }

    pub fn is_active(&self) -> bool {
        !self.components.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct BathModel<T> {
    pub beta: T,
    pub tau: T,
    pub y: Vec<AxisBath<T>>,
    pub z: Vec<AxisBath<T>>,
}

impl<T: Real> BathModel<T> {
    pub fn new(beta: T, tau: T, y: Vec<AxisBath<T>>, z: Vec<AxisBath<T>>) -> Result<Self, String> {
        let b = BathModel { beta, tau, y, z };
        let diags = b.validate();
        if let Some(d) = diags.first() {
            return Err(d.to_string());
        }
        Ok(b)
    }

    /// No noise anywhere on `l` sites.
    pub fn empty(l: usize, beta: T) -> Self {
        BathModel {
            beta,
            tau: T::zero(),
            y: (0..l).map(|_| AxisBath::none()).collect(),
            z: (0..l).map(|_| AxisBath::none()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn axis(&self, nu: Axis, r: usize) -> &AxisBath<T> {
        match nu {
            Axis::Y => &self.y[r],
            Axis::Z => &self.z[r],
        }
    }

    pub fn has_y_noise(&self, r: usize) -> bool {
        self.y[r].is_active()
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |field: String, message: String| out.push(Diagnostic { field, message });
        if !(self.beta > T::zero()) || !self.beta.is_finite() {
            push("bath.beta".into(), "must be positive and finite".into());
        }
        if !(self.tau >= T::zero()) || !self.tau.is_finite() {
            push("bath.tau".into(), "must be nonnegative and finite".into());
        }
        if self.y.len() != self.z.len() {
            push("bath".into(), format!("y and z site counts differ: {} vs {}", self.y.len(), self.z.len()));
        }
        for (nu, list) in [(Axis::Y, &self.y), (Axis::Z, &self.z)] {
            for (r, ax) in list.iter().enumerate() {
                for (i, c) in ax.components.iter().enumerate() {
                    if !(c.w_ir >= T::zero()) || !(c.w_uv >= c.w_ir) {
                        push(format!("bath.{nu}[{r}].components[{i}]"), "cutoffs out of order".into());
                    }
                }
            }
        }
        out
    }
}

pub fn eval_spectral_density<T: Real>(b: &BathModel<T>, nu: Axis, r: usize, omega: T) -> T {
    b.axis(nu, r)
        .components
        .iter()
        .fold(T::zero(), |s, c| s + eval_component_at_t(c, b.beta, omega))
}

const CORR_TOL_ABS: f64 = 1e-13;
const CORR_TOL_REL: f64 = 1e-10;

/// Frequency segments that carry a component's support.
fn support<T: Real>(c: &SpectralComponent<T>, beta: T) -> Vec<(T, T)> {
    let knee = T::lit(25.0) / beta;
    let mut out = Vec::new();
    let neg = (-c.w_uv, -c.w_ir);
    if knee > c.w_ir && knee < c.w_uv {
        out.push((neg.0, -knee));
        out.push((-knee, neg.1));
    } else {
        out.push(neg);
    }
    out.push((c.w_ir, c.w_uv));
    out.retain(|s| s.1 > s.0);
    out
}

/// C(t) = (1/2π)∫ A_T(ω) e^{-iωt} dω
pub fn bath_correlation<T: Real>(b: &BathModel<T>, nu: Axis, r: usize, t: T) -> Result<Complex<T>, QuadError<T>> {
    let w = t.abs();
    let (mut re, mut im) = (T::zero(), T::zero());
    for c in &b.axis(nu, r).components {
        let f = |x: T| eval_component_at_t(c, b.beta, x);
        for (lo, hi) in support(c, b.beta) {
            let tol = T::lit(CORR_TOL_ABS).max(T::epsilon() * T::lit(0.1));
            let rel = T::lit(CORR_TOL_REL).max(T::epsilon() * T::lit(100.0));
            re += integrate_weighted_osc(f, lo, hi, w, Kernel::Cos, tol, rel)?.value;
            im -= integrate_weighted_osc(f, lo, hi, w, Kernel::Sin, tol, rel)?.value;
        }
    }
    let sign = if t < T::zero() { -T::one() } else { T::one() };
    Ok(Complex::new(re, sign * im) / T::TAU())
}

/// (1/2π)∫ A_T(ω) dω
pub fn noise_strength<T: Real>(b: &BathModel<T>, nu: Axis, r: usize) -> Result<T, QuadError<T>> {
    Ok(bath_correlation(b, nu, r, T::zero())?.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frequency_limit() {
        let c = SpectralComponent::ohmic(0.3, 5.0, 0.0, 50.0).unwrap();
        assert!((eval_component_at_t::<f64>(&c, 2.0, 0.0) - 0.15).abs() < 1e-15);
        let gapped = SpectralComponent::ohmic(0.3, 5.0, 0.1, 50.0).unwrap();
        assert_eq!(eval_component_at_t(&gapped, 2.0, 0.0), 0.0);
    }

    #[test]
    fn monotone_cubic_preserves_order() {
        let m = MonotoneCubic::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let mut prev = 0.0;
        for i in 0..=300 {
            let v = m.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }
}
