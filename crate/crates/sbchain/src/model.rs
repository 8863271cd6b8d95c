//! System Hamiltonian parameters and the Trotter quadrature weights.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("time {t} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("weight index {k} outside [{lo}, {hi}]")]
    WeightIndex { k: i64, lo: i64, hi: i64 },
    #[error("step count must be at least 1")]
    ZeroStep,
    #[error("malformed scalar: {0}")]
    Malformed(String),
    #[error("model shape: {0}")]
    Shape(String),
}

/// Real scalar parameter as a function of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeScalar<T> {
    Constant { value: T },
    /// Linear interpolation between `(t, value)` samples sorted by `t`.
    Piecewise { points: Vec<(T, T)> },
    /// Samples at `t0 + i*dt`, linearly interpolated between nodes.
    Tabulated { t0: T, dt: T, values: Vec<T> },
}

impl<T: Real> TimeScalar<T> {
    pub fn constant(value: T) -> Self {
        TimeScalar::Constant { value }
    }

    pub fn piecewise(points: Vec<(T, T)>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::Malformed("piecewise scalar without samples".into()));
        }
        if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(ModelError::Malformed("piecewise samples not strictly sorted by time".into()));
        }
        Ok(TimeScalar::Piecewise { points })
    }

    pub fn tabulated(t0: T, dt: T, values: Vec<T>) -> Result<Self, ModelError> {
        if values.is_empty() || !(dt > T::zero()) {
            return Err(ModelError::Malformed("tabulated scalar needs dt > 0 and samples".into()));
        }
        Ok(TimeScalar::Tabulated { t0, dt, values })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeScalar::Constant { value } => *value == T::zero(),
            TimeScalar::Piecewise { points } => points.iter().all(|p| p.1 == T::zero()),
            TimeScalar::Tabulated { values, .. } => values.iter().all(|v| *v == T::zero()),
        }
    }

    fn samples(&self) -> Vec<T> {
        match self {
            TimeScalar::Constant { value } => vec![*value],
            TimeScalar::Piecewise { points } => {
                points.iter().flat_map(|p| [p.0, p.1]).collect()
            }
            TimeScalar::Tabulated { t0, dt, values } => {
                let mut v = values.clone();
                v.push(*t0);
                v.push(*dt);
                v
            }
        }
    }
}

pub fn eval_scalar<T: Real>(s: &TimeScalar<T>, t: T) -> Result<T, ModelError> {
    if t < T::zero() {
        return Err(ModelError::NegativeTime(t.as_f64()));
    }
    match s {
        TimeScalar::Constant { value } => Ok(*value),
        TimeScalar::Piecewise { points } => {
            let (first, last) = (points[0], points[points.len() - 1]);
            if points.len() == 1 {
                return Ok(first.1);
            }
            if t < first.0 || t > last.0 {
                return Err(ModelError::OutOfRange {
                    t: t.as_f64(),
                    lo: first.0.as_f64(),
                    hi: last.0.as_f64(),
                });
            }
            let i = points.partition_point(|p| p.0 <= t).clamp(1, points.len() - 1);
            let (a, b) = (points[i - 1], points[i]);
            let x = (t - a.0) / (b.0 - a.0);
            Ok(a.1 + x * (b.1 - a.1))
        }
        TimeScalar::Tabulated { t0, dt, values } => {
            let span = *dt * T::from_usize(values.len() - 1).unwrap();
            let slack = T::lit(1e-12) * (span + T::one());
            let u = t - *t0;
            if u < -slack || u > span + slack {
                return Err(ModelError::OutOfRange {
                    t: t.as_f64(),
                    lo: t0.as_f64(),
                    hi: (*t0 + span).as_f64(),
                });
            }
            let x = (u / *dt).max(T::zero());
            let near = x.round();
            if (x - near).abs() <= T::lit(1e-9) {
                let i = near.to_usize().unwrap().min(values.len() - 1);
                return Ok(values[i]);
            }
            let i = x.floor().to_usize().unwrap().min(values.len() - 2);
            let f = x - T::from_usize(i).unwrap();
            Ok(values[i] + f * (values[i + 1] - values[i]))
        }
    }
}

/// Time horizon of a weight table: a finite step count or the bulk limit
/// where the right boundary never appears.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Horizon {
    Step(usize),
    Bulk,
}

impl Horizon {
    /// Twice the composite trapezoid weight w_{n;k}, as an integer.
    pub fn w_halves(self, k: i64) -> Result<u32, ModelError> {
        match self {
            Horizon::Step(n) => {
                let n = n as i64;
                if n < 1 {
                    return Err(ModelError::ZeroStep);
                }
                if k < -1 || k > n + 1 {
                    return Err(ModelError::WeightIndex { k, lo: -1, hi: n + 1 });
                }
                Ok(if k == -1 || k == n + 1 {
                    0
                } else if k == 0 || k == n {
                    1
                } else {
                    2
                })
            }
            Horizon::Bulk => {
                if k < -1 {
                    return Err(ModelError::WeightIndex { k, lo: -1, hi: i64::MAX });
                }
                Ok(match k {
                    -1 => 0,
                    0 => 1,
                    _ => 2,
                })
            }
        }
    }

    /// Four times the half-slab weight w̃_{n;l}, as an integer.
    pub fn wtilde_quarters(self, l: i64) -> Result<u32, ModelError> {
        match self {
            Horizon::Step(n) => {
                let n = n as i64;
                if n < 1 {
                    return Err(ModelError::ZeroStep);
                }
                if l < 0 || l > 2 * n + 1 {
                    return Err(ModelError::WeightIndex { k: l, lo: 0, hi: 2 * n + 1 });
                }
                Ok(if l <= 1 || l >= 2 * n { 1 } else { 2 })
            }
            Horizon::Bulk => {
                if l < 0 {
                    return Err(ModelError::WeightIndex { k: l, lo: 0, hi: i64::MAX });
                }
                Ok(if l <= 1 { 1 } else { 2 })
            }
        }
    }

    pub fn w<T: Real>(self, k: i64) -> Result<T, ModelError> {
        Ok(T::from_u32(self.w_halves(k)?).unwrap() * T::lit(0.5))
    }

    pub fn wtilde<T: Real>(self, l: i64) -> Result<T, ModelError> {
        Ok(T::from_u32(self.wtilde_quarters(l)?).unwrap() * T::lit(0.25))
    }
}

pub fn trotter_weight_w<T: Real>(n: usize, k: i64) -> Result<T, ModelError> {
    Horizon::Step(n).w(k)
}

pub fn trotter_weight_wtilde<T: Real>(n: usize, l: i64) -> Result<T, ModelError> {
    Horizon::Step(n).wtilde(l)
}

/// Finite open chain of `L` spins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel<T> {
    pub hx: Vec<TimeScalar<T>>,
    pub hz: Vec<TimeScalar<T>>,
    /// `jzz[r]` couples sites r and r+1; the last entry must vanish.
    pub jzz: Vec<TimeScalar<T>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl<T: Real> SystemModel<T> {
    pub fn new(
        hx: Vec<TimeScalar<T>>,
        hz: Vec<TimeScalar<T>>,
        jzz: Vec<TimeScalar<T>>,
    ) -> Result<Self, ModelError> {
        let m = SystemModel { hx, hz, jzz };
        if m.hx.is_empty() {
            return Err(ModelError::Shape("chain needs at least one site".into()));
        }
        if m.hz.len() != m.hx.len() || m.jzz.len() != m.hx.len() {
            return Err(ModelError::Shape(format!(
                "hx, hz, jzz lengths differ: {}, {}, {}",
                m.hx.len(),
                m.hz.len(),
                m.jzz.len()
            )));
        }
        Ok(m)
    }

    /// Uniform constant fields with a vanishing boundary coupler.
    pub fn uniform(l: usize, hx: T, hz: T, j: T) -> Result<Self, ModelError> {
        let mut jzz = vec![TimeScalar::constant(j); l];
        if let Some(last) = jzz.last_mut() {
            *last = TimeScalar::constant(T::zero());
        }
        Self::new(
            vec![TimeScalar::constant(hx); l],
            vec![TimeScalar::constant(hz); l],
            jzz,
        )
    }

    pub fn len(&self) -> usize {
        self.hx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hx.is_empty()
    }

    pub fn hx_at(&self, r: usize, t: T) -> Result<T, ModelError> {
        eval_scalar(&self.hx[r], t)
    }

    pub fn hz_at(&self, r: usize, t: T) -> Result<T, ModelError> {
        eval_scalar(&self.hz[r], t)
    }

    pub fn jzz_at(&self, r: usize, t: T) -> Result<T, ModelError> {
        eval_scalar(&self.jzz[r], t)
    }

    /// Longitudinal energy of a classical z configuration at time `t`.
    pub fn hz_energy(&self, t: T, spins: &[i8]) -> Result<T, ModelError> {
        let mut e = T::zero();
        for (r, &s) in spins.iter().enumerate() {
            e += self.hz_at(r, t)? * T::from_i8(s).unwrap();
        }
        for r in 0..spins.len().saturating_sub(1) {
            e += self.jzz_at(r, t)? * T::from_i8(spins[r] * spins[r + 1]).unwrap();
        }
        Ok(e)
    }
}

pub fn validate_model<T: Real>(m: &SystemModel<T>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let l = m.hx.len();
    if l == 0 {
        out.push(Diagnostic { field: "model.L".into(), message: "no sites".into() });
    }
    if m.hz.len() != l || m.jzz.len() != l {
        out.push(Diagnostic {
            field: "model".into(),
            message: format!("hx, hz, jzz lengths differ: {}, {}, {}", l, m.hz.len(), m.jzz.len()),
        });
    }
    for (name, list) in [("hx", &m.hx), ("hz", &m.hz), ("jzz", &m.jzz)] {
        for (r, s) in list.iter().enumerate() {
            let field = format!("model.{name}[{r}]");
            if s.samples().iter().any(|v| !v.is_finite()) {
                out.push(Diagnostic { field: field.clone(), message: "nonfinite sample".into() });
            }
            match s {
                TimeScalar::Piecewise { points } => {
                    if points.is_empty() {
                        out.push(Diagnostic { field: field.clone(), message: "no samples".into() });
                    } else if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                        out.push(Diagnostic { field: field.clone(), message: "samples not sorted by time".into() });
                    }
                }
                TimeScalar::Tabulated { dt, values, .. } => {
                    if values.is_empty() || !(*dt > T::zero()) {
                        out.push(Diagnostic { field: field.clone(), message: "needs dt > 0 and samples".into() });
                    }
                }
                TimeScalar::Constant { .. } => {}
            }
        }
    }
    if let Some(last) = m.jzz.last() {
        if !last.is_zero() {
            out.push(Diagnostic {
                field: format!("model.jzz[{}]", m.jzz.len() - 1),
                message: "boundary coupler must vanish on an open chain".into(),
            });
        }
    }
    out
}
