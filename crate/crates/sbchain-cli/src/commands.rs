use crate::config::{self, Config};
use crate::CliError;
use sbchain::bath::{bath_correlation, eval_spectral_density, Axis};
use sbchain::eta::{cache_index, EtaTable};
use sbchain::evolution::SystemState;
use sbchain::observables::brute::{brute_cost, brute_force_rho_limited, DEFAULT_MAX_TERMS};
use sbchain::observables::{dense_state, density_matrix, energy_per_cell, expect_product, realignment_check};
use sbchain::tncore::CompressionParams;
use serde::Serialize;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

#[derive(Serialize)]
struct StepReport {
    n: usize,
    t: f64,
    discarded: f64,
    max_bond: usize,
    influence_bond: usize,
    wall_s: f64,
}

#[derive(Serialize)]
struct RunReport {
    sites: usize,
    dt: f64,
    steps: usize,
    resumed_from: Option<usize>,
    delta_m: usize,
    k_tau: usize,
    compression: CompressionParams,
    max_window: usize,
    max_checkpoints: usize,
    /// `(n, bond)` pairs whose realignment sum exceeded one.
    entangled: Vec<(usize, usize)>,
    history: Vec<StepReport>,
    wall_s: f64,
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn row(cfg: &Config, st: &SystemState, entangled: &mut Vec<(usize, usize)>) -> Result<Vec<String>, sbchain::Error> {
    let mut out = vec![fmt(st.time())];
    for p in &cfg.observables.paulis {
        out.push(fmt(expect_product(&st.rho, p.first, &p.ops)?.re));
    }
    if cfg.observables.energy {
        out.push(fmt(energy_per_cell(&st.rho, &cfg.model, st.time())?));
    }
    if cfg.observables.realignment {
        for (i, (s, flag)) in realignment_check(&st.rho)?.into_iter().enumerate() {
            if flag {
                entangled.push((st.n, i + 1));
            }
            out.push(fmt(s));
        }
    }
    Ok(out)
}

pub fn read_snapshot(path: &Path) -> Result<SystemState, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let st: SystemState = ciborium::from_reader(BufReader::new(f)).map_err(|e| CliError::Config(format!("snapshot {}: {e}", path.display())))?;
    st.check_version()?;
    Ok(st)
}

fn write_snapshot(path: &Path, st: &SystemState) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ciborium::into_writer(st, BufWriter::new(f)).map_err(|e| CliError::Io(format!("snapshot {}: {e}", path.display())))
}

pub fn run(cfg: &Config, out: &Path, checkpoint: Option<&Path>, resume: Option<&Path>) -> Result<(), CliError> {
    let start = Instant::now();
    let mut st = match resume {
        Some(p) => {
            let st = read_snapshot(p)?;
            if st.model != cfg.model || st.dt != cfg.run.dt || st.params != cfg.run.compression || st.len() != cfg.bath.len() {
                return Err(CliError::Config(format!("snapshot {} does not match the config", p.display())));
            }
            st
        }
        None => SystemState::new(&cfg.model, &cfg.bath, &cfg.initial_state()?, cfg.run.dt, cfg.run.compression)?,
    };
    let resumed_from = resume.map(|_| st.n);
    fs::create_dir_all(out)?;
    let mut csv = csv::Writer::from_path(out.join("observables.csv"))?;
    let mut header = vec!["t".to_string()];
    header.extend(cfg.columns());
    csv.write_record(&header)?;
    let mut entangled = Vec::new();
    csv.write_record(row(cfg, &st, &mut entangled)?)?;
    let mut history = Vec::new();
    while st.n < cfg.run.steps {
        let t0 = Instant::now();
        let step = st.n + 1;
        st.evolve_step().map_err(|source| CliError::Step { step, source })?;
        let r = row(cfg, &st, &mut entangled).map_err(|source| CliError::Step { step, source })?;
        csv.write_record(r)?;
        csv.flush()?;
        let rec = st.history.last().expect("step recorded");
        history.push(StepReport {
            n: rec.n,
            t: st.time(),
            discarded: rec.discarded,
            max_bond: rec.max_bond,
            influence_bond: rec.influence_bond,
            wall_s: t0.elapsed().as_secs_f64(),
        });
    }
    csv.flush()?;
    if let Some(p) = checkpoint {
        write_snapshot(p, &st)?;
    }
    let report = RunReport {
        sites: st.len(),
        dt: st.dt,
        steps: st.n,
        resumed_from,
        delta_m: st.delta_m,
        k_tau: st.k_tau,
        compression: st.params,
        max_window: st.max_window(),
        max_checkpoints: st.max_checkpoints,
        entangled,
        history,
        wall_s: start.elapsed().as_secs_f64(),
    };
    let f = File::create(out.join("report.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &report).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

pub fn validate(path: &Path) -> Result<(), CliError> {
    let cfg = config::load(path)?;
    let k = sbchain::eta::k_tau(cfg.bath.tau, cfg.run.dt).map_err(sbchain::Error::from)?;
    let y = cfg.bath.has_y_noise(0);
    println!("ok: {} sites, {} steps of {}", cfg.model.len(), cfg.run.steps, cfg.run.dt);
    println!("grid spacing {}, memory {} steps", if y { 3 } else { 1 }, k);
    println!("columns: t,{}", cfg.columns().join(","));
    if cfg.run.steps > 0 {
        println!("brute force cost at step {}: {:.3e} terms", cfg.run.steps, brute_cost(&cfg.model, &cfg.bath, cfg.run.steps));
    }
    Ok(())
}

fn noisy_axes(cfg: &Config) -> Vec<(Axis, usize)> {
    [Axis::Y, Axis::Z]
        .into_iter()
        .flat_map(|nu| (0..cfg.bath.len()).map(move |r| (nu, r)))
        .filter(|&(nu, r)| cfg.bath.axis(nu, r).is_active())
        .collect()
}

pub fn bath_info(cfg: &Config, out: &Path, omega_max: f64, half: usize, t_max: f64, t_points: usize) -> Result<(), CliError> {
    if !(omega_max > 0.0) || half == 0 || !(t_max >= 0.0) || t_points == 0 {
        return Err(CliError::Usage("sampling ranges must be positive".into()));
    }
    let axes = noisy_axes(cfg);
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("spectral.csv"))?;
    let mut header = vec!["omega".to_string()];
    header.extend(axes.iter().map(|(nu, r)| format!("{nu}@{r}")));
    w.write_record(&header)?;
    let h = half as i64;
    for i in -h..=h {
        let omega = omega_max * i as f64 / half as f64;
        let mut rec = vec![fmt(omega)];
        rec.extend(axes.iter().map(|&(nu, r)| fmt(eval_spectral_density(&cfg.bath, nu, r, omega))));
        w.write_record(rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("correlation.csv"))?;
    let mut header = vec!["t".to_string()];
    for (nu, r) in &axes {
        header.push(format!("re {nu}@{r}"));
        header.push(format!("im {nu}@{r}"));
    }
    w.write_record(&header)?;
    for i in 0..=t_points {
        let t = t_max * i as f64 / t_points as f64;
        let mut rec = vec![fmt(t)];
        for &(nu, r) in &axes {
            let c = bath_correlation(&cfg.bath, nu, r, t).map_err(sbchain::Error::from)?;
            rec.push(fmt(c.re));
            rec.push(fmt(c.im));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn eta_dump(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let table = EtaTable::build(&cfg.bath, cfg.run.dt).map_err(sbchain::Error::from)?;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("eta.csv"))?;
    w.write_record(["axis", "site", "cache", "slot", "n", "l1", "l2", "re", "im"])?;
    for (nu, r) in noisy_axes(cfg) {
        let c = table.get(nu, r).expect("noisy axis has caches");
        for (i, arr) in c.cache.iter().enumerate() {
            for (a, v) in arr.iter().enumerate() {
                let (n, l1, l2) = cache_index(c.k_tau, i, a);
                w.write_record([
                    nu.to_string(),
                    r.to_string(),
                    (i + 1).to_string(),
                    a.to_string(),
                    n.to_string(),
                    l1.to_string(),
                    l2.to_string(),
                    fmt(v.re),
                    fmt(v.im),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn brute(cfg: &Config, out: &Path, compare: Option<&Path>) -> Result<(), CliError> {
    let snap = compare.map(read_snapshot).transpose()?;
    let n = snap.as_ref().map_or(cfg.run.steps, |s| s.n);
    if let Some(s) = &snap {
        if s.model != cfg.model || s.dt != cfg.run.dt {
            return Err(CliError::Config("snapshot does not match the config".into()));
        }
    }
    let psi = dense_state(&cfg.initial_state()?).map_err(sbchain::Error::from)?;
    let limit = cfg.run.brute_limit.unwrap_or(DEFAULT_MAX_TERMS);
    let rho = brute_force_rho_limited(&cfg.model, &cfg.bath, &psi, n, cfg.run.dt, limit).map_err(sbchain::Error::from)?;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("brute_rho.csv"))?;
    w.write_record(["row", "col", "re", "im"])?;
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            w.write_record([i.to_string(), j.to_string(), fmt(rho[(i, j)].re), fmt(rho[(i, j)].im)])?;
        }
    }
    w.flush()?;
    println!("step {n}, t = {}", n as f64 * cfg.run.dt);
    if let Some(s) = snap {
        let tn = density_matrix(&s.rho).map_err(sbchain::Error::from)?;
        let diff = (tn - &rho).iter().map(|x| x.norm()).fold(0.0, f64::max);
        println!("max_diff {diff:e}");
    }
    Ok(())
}
