//! Run configuration: a TOML file with `model`, `bath`, `run`, `initial`
//! and `observables` sections.

use crate::CliError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbchain::bath::AxisBath;
use sbchain::evolution::product_state;
use sbchain::model::validate_model;
use sbchain::observables::{pauli, Op};
use sbchain::tncore::{CompressionParams, Method, Mps};
use sbchain::{BathModel, Complex, SpectralComponent, SystemModel, TimeScalar};
use serde::Deserialize;
use std::path::Path;
use toml::Value;

type C64 = Complex<f64>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    bath: Option<RawBath>,
    run: RawRun,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    observables: RawObservables,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    sites: Option<usize>,
    hx: Option<Value>,
    hz: Option<Value>,
    jzz: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    beta: Option<f64>,
    tau: Option<f64>,
    y: Option<RawAxis>,
    z: Option<RawAxis>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    sites: Option<Vec<usize>>,
    scale: Option<Value>,
    #[serde(default)]
    components: Vec<RawComponent>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
enum RawComponent {
    Ohmic {
        eta: f64,
        omega_c: f64,
        #[serde(default)]
        w_ir: f64,
        w_uv: f64,
    },
    Tabulated {
        omega: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        w_ir: f64,
        w_uv: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    dt: Option<f64>,
    steps: Option<usize>,
    #[serde(default = "default_method")]
    method: Method,
    chi_max: Option<usize>,
    #[serde(default)]
    eps: f64,
    #[serde(default)]
    renormalize: bool,
    #[serde(default)]
    seed: u64,
    brute_limit: Option<f64>,
}

fn default_method() -> Method {
    Method::Direct
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InitialKind {
    #[default]
    Up,
    Down,
    Plus,
    Product,
    Random,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    #[serde(default)]
    kind: InitialKind,
    /// Per site `[re_up, im_up, re_down, im_down]`.
    amplitudes: Option<Vec<[f64; 4]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservables {
    #[serde(default)]
    paulis: Vec<String>,
    #[serde(default)]
    energy: bool,
    #[serde(default)]
    realignment: bool,
}

/// Pauli string on consecutive sites starting at `first`.
#[derive(Clone, Debug)]
pub struct PauliString {
    pub name: String,
    pub first: usize,
    pub ops: Vec<Op>,
}

#[derive(Clone, Debug)]
pub struct RunParams {
    pub dt: f64,
    pub steps: usize,
    pub compression: CompressionParams,
    pub seed: u64,
    pub brute_limit: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Observables {
    pub paulis: Vec<PauliString>,
    pub energy: bool,
    pub realignment: bool,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub model: SystemModel,
    pub bath: BathModel,
    pub run: RunParams,
    pub initial: Vec<[C64; 2]>,
    pub observables: Observables,
}

impl Config {
    pub fn initial_state(&self) -> Result<Mps, CliError> {
        product_state(&self.initial).map_err(|e| CliError::Config(format!("initial: {e}")))
    }

    /// CSV header after the leading `t` column.
    pub fn columns(&self) -> Vec<String> {
        let mut out: Vec<String> = self.observables.paulis.iter().map(|p| p.name.clone()).collect();
        if self.observables.energy {
            out.push("energy".into());
        }
        if self.observables.realignment {
            out.extend((1..self.model.len()).map(|r| format!("realign@{r}")));
        }
        out
    }
}

fn err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn scalar(field: &str, v: &Value) -> Result<TimeScalar, CliError> {
    match v {
        Value::Float(x) => Ok(TimeScalar::constant(*x)),
        Value::Integer(i) => Ok(TimeScalar::constant(*i as f64)),
        Value::Table(_) => {
            let s: TimeScalar = v.clone().try_into().map_err(|e| err(field, e))?;
            let ok = match &s {
                TimeScalar::Constant { .. } => Ok(s.clone()),
                TimeScalar::Piecewise { points } => TimeScalar::piecewise(points.clone()),
                TimeScalar::Tabulated { t0, dt, values } => TimeScalar::tabulated(*t0, *dt, values.clone()),
            };
            ok.map_err(|e| err(field, e))
        }
        _ => Err(err(field, "expected a number or a scalar table")),
    }
}

/// A number or scalar table is broadcast; an array gives one entry per site.
/// A broadcast coupler leaves the boundary entry at zero.
fn per_site(field: &str, v: Option<&Value>, l: usize, coupler: bool) -> Result<Vec<TimeScalar>, CliError> {
    let Some(v) = v else {
        return Ok(vec![TimeScalar::constant(0.0); l]);
    };
    if let Value::Array(items) = v {
        if items.len() != l {
            return Err(err(field, format!("{} entries for {l} sites", items.len())));
        }
        return items.iter().enumerate().map(|(i, x)| scalar(&format!("{field}[{i}]"), x)).collect();
    }
    let s = scalar(field, v)?;
    let mut out = vec![s; l];
    if coupler {
        out[l - 1] = TimeScalar::constant(0.0);
    }
    Ok(out)
}

fn component(field: &str, c: &RawComponent) -> Result<SpectralComponent, CliError> {
    match c {
        RawComponent::Ohmic { eta, omega_c, w_ir, w_uv } => SpectralComponent::ohmic(*eta, *omega_c, *w_ir, *w_uv),
        RawComponent::Tabulated { omega, values, w_ir, w_uv } => SpectralComponent::tabulated(omega.clone(), values.clone(), *w_ir, *w_uv),
    }
    .map_err(|e| err(field, e))
}

fn axis(field: &str, raw: Option<&RawAxis>, l: usize) -> Result<Vec<AxisBath<f64>>, CliError> {
    let mut out = vec![AxisBath::none(); l];
    let Some(raw) = raw else {
        return Ok(out);
    };
    if raw.components.is_empty() {
        return Ok(out);
    }
    let comps = raw
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| component(&format!("{field}.components[{i}]"), c))
        .collect::<Result<Vec<_>, _>>()?;
    let scales = per_site(&format!("{field}.scale"), raw.scale.as_ref(), l, false)?;
    let scales = if raw.scale.is_none() { vec![TimeScalar::constant(1.0); l] } else { scales };
    let sites: Vec<usize> = raw.sites.clone().unwrap_or_else(|| (0..l).collect());
    for r in sites {
        if r >= l {
            return Err(err(&format!("{field}.sites"), format!("site {r} outside a {l}-site chain")));
        }
        out[r] = AxisBath::new(scales[r].clone(), comps.clone());
    }
    Ok(out)
}

fn pauli_string(field: &str, s: &str, l: usize) -> Result<PauliString, CliError> {
    let (letters, site) = s.split_once('@').ok_or_else(|| err(field, format!("`{s}` is not of the form XZ@site")))?;
    let first: usize = site.trim().parse().map_err(|_| err(field, format!("bad site in `{s}`")))?;
    let ops = letters
        .trim()
        .chars()
        .map(|c| pauli(c).ok_or_else(|| err(field, format!("unknown Pauli `{c}` in `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if ops.is_empty() || first + ops.len() > l {
        return Err(err(field, format!("`{s}` does not fit a {l}-site chain")));
    }
    Ok(PauliString { name: s.trim().to_string(), first, ops })
}

fn initial(raw: &RawInitial, l: usize, seed: u64) -> Result<Vec<[C64; 2]>, CliError> {
    let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    if raw.amplitudes.is_some() && !matches!(raw.kind, InitialKind::Product) {
        return Err(err("initial.amplitudes", "only used with kind = \"product\""));
    }
    let sites = match raw.kind {
        InitialKind::Up => vec![[o, z]; l],
        InitialKind::Down => vec![[z, o]; l],
        InitialKind::Plus => vec![[C64::new(h, 0.0), C64::new(h, 0.0)]; l],
        InitialKind::Product => {
            let a = raw.amplitudes.as_ref().ok_or_else(|| err("initial.amplitudes", "missing"))?;
            if a.len() != l {
                return Err(err("initial.amplitudes", format!("{} entries for {l} sites", a.len())));
            }
            a.iter().map(|s| [C64::new(s[0], s[1]), C64::new(s[2], s[3])]).collect()
        }
        InitialKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..l)
                .map(|_| {
                    let mut s = [z; 2];
                    for x in &mut s {
                        *x = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                    s
                })
                .collect()
        }
    };
    for (r, s) in sites.iter().enumerate() {
        let n = s[0].norm_sqr() + s[1].norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(err(&format!("initial.amplitudes[{r}]"), "zero or nonfinite norm"));
        }
    }
    Ok(sites)
}

pub fn parse_str(text: &str) -> Result<Config, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let l = raw.model.sites.ok_or_else(|| err("model.sites", "missing"))?;
    if l == 0 {
        return Err(err("model.sites", "must be at least 1"));
    }
    let model = SystemModel::new(
        per_site("model.hx", raw.model.hx.as_ref(), l, false)?,
        per_site("model.hz", raw.model.hz.as_ref(), l, false)?,
        per_site("model.jzz", raw.model.jzz.as_ref(), l, true)?,
    )
    .map_err(|e| err("model", e))?;
    if let Some(d) = validate_model(&model).first() {
        return Err(CliError::Config(d.to_string()));
    }

    let bath = match &raw.bath {
        None => BathModel::empty(l, 1.0),
        Some(b) => {
            let beta = b.beta.ok_or_else(|| err("bath.beta", "missing"))?;
            let tau = b.tau.ok_or_else(|| err("bath.tau", "missing"))?;
            BathModel::new(beta, tau, axis("bath.y", b.y.as_ref(), l)?, axis("bath.z", b.z.as_ref(), l)?).map_err(CliError::Config)?
        }
    };
    let y0 = bath.has_y_noise(0);
    if (0..l).any(|r| bath.has_y_noise(r) != y0) {
        return Err(err("bath.y.sites", "y noise must be on every site or on none"));
    }

    let dt = raw.run.dt.ok_or_else(|| err("run.dt", "missing"))?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(err("run.dt", "must be positive"));
    }
    let steps = raw.run.steps.ok_or_else(|| err("run.steps", "missing"))?;
    let compression = CompressionParams::new(raw.run.method, raw.run.chi_max, raw.run.eps, raw.run.renormalize).map_err(|e| err("run", e))?;
    if let Some(b) = raw.run.brute_limit {
        if !(b > 0.0) {
            return Err(err("run.brute_limit", "must be positive"));
        }
    }
    let run = RunParams { dt, steps, compression, seed: raw.run.seed, brute_limit: raw.run.brute_limit };

    let paulis = raw
        .observables
        .paulis
        .iter()
        .enumerate()
        .map(|(i, s)| pauli_string(&format!("observables.paulis[{i}]"), s, l))
        .collect::<Result<Vec<_>, _>>()?;
    let observables = Observables { paulis, energy: raw.observables.energy, realignment: raw.observables.realignment };
    let initial = initial(&raw.initial, l, run.seed)?;
    Ok(Config { model, bath, run, initial, observables })
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_str(&text)
}
