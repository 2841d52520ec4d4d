//! Result files: an HDF5 container with groups `/system`, `/parameters`,
//! `/state` and `/observables`, plus a JSON manifest next to it.
//!
//! Complex arrays are stored as `f64` datasets with a trailing dimension of
//! two (real, imaginary). Every dataset carries a `dimensions` attribute
//! naming its axes and a `units` attribute.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use hdf5::types::VarLenUnicode;
use hdf5::{File, Group, Location};
use ndarray::Array2;
use tnt_core::{BlockTensor, ChargedIndex, DenseTensor, Direction, Graph, Qn, SystemConfig, Tensor, C64};
use tnt_mps::{Basis, DmrgReport, Mps, ObservableValue, Snapshot};

use crate::spec::{Mode, RunSpec};
use crate::AppError;

pub const LIBRARY: &str = "tnt";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn fmt_err(path: &str, e: impl std::fmt::Display) -> AppError {
    AppError::Format(format!("{path}: {e}"))
}

fn text(s: &str) -> VarLenUnicode {
    s.parse().expect("text without NUL bytes")
}

fn put_str(loc: &Location, name: &str, value: &str) -> hdf5::Result<()> {
    loc.new_attr::<VarLenUnicode>().create(name)?.write_scalar(&text(value))
}

fn put_f64(loc: &Location, name: &str, value: f64) -> hdf5::Result<()> {
    loc.new_attr::<f64>().create(name)?.write_scalar(&value)
}

fn put_u64(loc: &Location, name: &str, value: u64) -> hdf5::Result<()> {
    loc.new_attr::<u64>().create(name)?.write_scalar(&value)
}

fn put_bool(loc: &Location, name: &str, value: bool) -> hdf5::Result<()> {
    loc.new_attr::<bool>().create(name)?.write_scalar(&value)
}

fn get_str(loc: &Location, name: &str) -> hdf5::Result<String> {
    Ok(loc.attr(name)?.read_scalar::<VarLenUnicode>()?.as_str().to_string())
}

fn real_dataset(group: &Group, name: &str, shape: &[usize], data: &[f64], dims: &str, units: &str) -> hdf5::Result<()> {
    let ds = group.new_dataset::<f64>().shape(shape.to_vec()).create(name)?;
    ds.write_raw(data)?;
    put_str(&ds, "dimensions", dims)?;
    put_str(&ds, "units", units)
}

fn complex_dataset(group: &Group, name: &str, shape: &[usize], data: &[C64], dims: &str, units: &str) -> hdf5::Result<()> {
    let mut full = shape.to_vec();
    full.push(2);
    let flat: Vec<f64> = data.iter().flat_map(|z| [z.re, z.im]).collect();
    real_dataset(group, name, &full, &flat, &format!("{dims}, component"), units)
}

/// Reads a complex dataset written by this module: shape without the trailing
/// component axis, and the values.
pub fn read_complex(file: &File, path: &str) -> Result<(Vec<usize>, Vec<C64>), AppError> {
    let ds = file.dataset(path).map_err(|e| fmt_err(path, e))?;
    let mut shape = ds.shape();
    if shape.last() != Some(&2) {
        return Err(fmt_err(path, "not a complex dataset"));
    }
    shape.pop();
    let raw: Vec<f64> = ds.read_raw().map_err(|e| fmt_err(path, e))?;
    Ok((shape, raw.chunks(2).map(|c| C64::new(c[0], c[1])).collect()))
}

pub fn read_real(file: &File, path: &str) -> Result<Vec<f64>, AppError> {
    let ds = file.dataset(path).map_err(|e| fmt_err(path, e))?;
    ds.read_raw().map_err(|e| fmt_err(path, e))
}

pub fn open(path: &Path) -> Result<File, AppError> {
    File::open(path).map_err(|e| fmt_err(&path.display().to_string(), e))
}

fn json_manifest(path: &Path, mode: Mode, config: &SystemConfig, spec: &RunSpec, status: &str) -> Result<(), AppError> {
    let doc = serde_json::json!({
        "library": LIBRARY,
        "version": VERSION,
        "application": mode.name(),
        "status": status,
        "system": config,
        "system_summary": config.info(),
        "parameters": spec,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| AppError::Io(e.to_string()))?;
    fs::write(path.with_extension("json"), text + "\n").map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
}

/// Creates the result file with its `/system` and `/parameters` groups.
pub fn create(path: &Path, mode: Mode, config: &SystemConfig, spec: &RunSpec) -> Result<File, AppError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::Io(format!("{}: {e}", dir.display())))?;
    }
    let file = File::create(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    let h = |e: hdf5::Error| AppError::Io(format!("{}: {e}", path.display()));
    put_str(&file, "library", LIBRARY).map_err(h)?;
    put_str(&file, "version", VERSION).map_err(h)?;
    put_str(&file, "application", mode.name()).map_err(h)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    put_u64(&file, "created_unix_time", stamp).map_err(h)?;

    let sys = file.create_group("system").map_err(h)?;
    put_str(&sys, "summary", &config.info()).map_err(h)?;
    put_str(&sys, "json", &serde_json::to_string(config).expect("config serializes")).map_err(h)?;
    put_str(&sys, "library_version", VERSION).map_err(h)?;
    put_f64(&sys, "rel_trunc_tol", config.rel_trunc_tol).map_err(h)?;
    put_f64(&sys, "abs_trunc_tol", config.abs_trunc_tol).map_err(h)?;
    put_f64(&sys, "trunc_err_tol", config.trunc_err_tol).map_err(h)?;
    put_f64(&sys, "auto_block_tol", config.auto_block_tol).map_err(h)?;
    put_u64(&sys, "max_eig_iter", config.max_eig_iter as u64).map_err(h)?;

    let par = file.create_group("parameters").map_err(h)?;
    let value = serde_json::to_value(spec).expect("spec serializes");
    put_str(&par, "json", &value.to_string()).map_err(h)?;
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            match v {
                serde_json::Value::Number(n) if n.is_u64() => put_u64(&par, &k, n.as_u64().unwrap()),
                serde_json::Value::Number(n) => put_f64(&par, &k, n.as_f64().unwrap()),
                serde_json::Value::Bool(b) => put_bool(&par, &k, b),
                serde_json::Value::String(s) => put_str(&par, &k, &s),
                serde_json::Value::Null => Ok(()),
                other => put_str(&par, &k, &other.to_string()),
            }
            .map_err(h)?;
        }
    }
    json_manifest(path, mode, config, spec, "running")?;
    Ok(file)
}

/// Marks the run as finished (`ok`) or failed, recording the diagnostic.
pub fn finish(file: &File, path: &Path, mode: Mode, config: &SystemConfig, spec: &RunSpec, error: Option<&str>) -> Result<(), AppError> {
    let h = |e: hdf5::Error| AppError::Io(format!("{}: {e}", path.display()));
    let status = if error.is_some() { "failed" } else { "ok" };
    put_str(file, "status", status).map_err(h)?;
    if let Some(msg) = error {
        let d = file.create_group("diagnostics").map_err(h)?;
        put_str(&d, "error", msg).map_err(h)?;
    }
    file.flush().map_err(h)?;
    json_manifest(path, mode, config, spec, status)
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::In => "in",
        Direction::Out => "out",
    }
}

/// Writes the state under `/state`: one group per site holding its values,
/// dimensions and (with symmetry) the charges of each axis.
pub fn write_state(file: &File, g: &Graph, psi: &Mps, step: usize, time: f64, trunc_err: f64) -> Result<(), AppError> {
    let h = |e: hdf5::Error| AppError::Io(format!("/state: {e}"));
    let st = file.create_group("state").map_err(h)?;
    let symmetric = psi.is_symmetric(g)?;
    put_u64(&st, "length", psi.len() as u64).map_err(h)?;
    put_bool(&st, "symmetric", symmetric).map_err(h)?;
    put_str(&st, "basis", &serde_json::to_string(&psi.basis).expect("basis serializes")).map_err(h)?;
    put_str(&st, "legs", "LDR").map_err(h)?;
    put_str(&st, "connectivity", "leg R of site k joins leg L of site k+1").map_err(h)?;
    put_u64(&st, "step", step as u64).map_err(h)?;
    put_f64(&st, "time", time).map_err(h)?;
    put_f64(&st, "trunc_err", trunc_err).map_err(h)?;
    let bonds: Vec<u64> = psi.bond_dims(g)?.iter().map(|&d| d as u64).collect();
    st.new_attr::<u64>().shape(bonds.len()).create("bond_dims").and_then(|a| a.write_raw(&bonds)).map_err(h)?;
    for k in 0..psi.len() {
        let t = psi.site(g, k)?;
        let site = st.create_group(&format!("site_{k:04}")).map_err(h)?;
        let dims: Vec<u64> = t.dims().iter().map(|&d| d as u64).collect();
        site.new_attr::<u64>().shape(dims.len()).create("dims").and_then(|a| a.write_raw(&dims)).map_err(h)?;
        let values = match &*t {
            Tensor::Dense(d) => d.values().to_vec(),
            Tensor::Block(b) => {
                let template = Tensor::Block(BlockTensor::zeros(b.indices().to_vec(), b.flux())?);
                let v = t.flat_values_like(&template, None)?;
                let flux = b.flux().charges().to_vec();
                site.new_attr::<i32>().shape(flux.len()).create("flux").and_then(|a| a.write_raw(&flux)).map_err(h)?;
                for (axis, (idx, leg)) in b.indices().iter().zip(['L', 'D', 'R']).enumerate() {
                    let m = idx.m();
                    let charges: Vec<i32> = idx.labels().iter().flat_map(|q| q.charges().to_vec()).collect();
                    let name = format!("charges_{leg}");
                    let ds = site.new_dataset::<i32>().shape([idx.dim(), m]).create(name.as_str()).map_err(h)?;
                    ds.write_raw(&charges).map_err(h)?;
                    put_str(&ds, "direction", direction_name(idx.direction())).map_err(h)?;
                    put_u64(&ds, "axis", axis as u64).map_err(h)?;
                    put_str(&ds, "dimensions", "basis state, charge component").map_err(h)?;
                    put_str(&ds, "units", "charge").map_err(h)?;
                }
                v
            }
        };
        let n = values.len();
        complex_dataset(&site, "values", &[n], &values, "element", "dimensionless").map_err(h)?;
        put_str(&site, "layout", if t.is_blocked() { "charge sectors in key order" } else { "row-major" }).map_err(h)?;
    }
    Ok(())
}

/// A state read back from a result file.
pub struct LoadedState {
    pub psi: Mps,
    pub step: usize,
    pub time: f64,
    pub trunc_err: f64,
}

fn read_attr<T: hdf5::H5Type>(loc: &Location, name: &str, path: &str) -> Result<T, AppError> {
    loc.attr(name).and_then(|a| a.read_scalar()).map_err(|e| fmt_err(&format!("{path}@{name}"), e))
}

fn read_attr_vec<T: hdf5::H5Type>(loc: &Location, name: &str, path: &str) -> Result<Vec<T>, AppError> {
    loc.attr(name).and_then(|a| a.read_raw()).map_err(|e| fmt_err(&format!("{path}@{name}"), e))
}

fn parse_direction(s: &str, path: &str) -> Result<Direction, AppError> {
    match s {
        "in" => Ok(Direction::In),
        "out" => Ok(Direction::Out),
        other => Err(fmt_err(path, format!("unknown direction {other:?}"))),
    }
}

pub fn load_state(g: &mut Graph, path: &Path) -> Result<LoadedState, AppError> {
    let file = open(path)?;
    check_version(&file);
    let st = file.group("state").map_err(|e| fmt_err("/state", e))?;
    let length = read_attr::<u64>(&st, "length", "/state")? as usize;
    let symmetric = read_attr::<bool>(&st, "symmetric", "/state")?;
    let basis: Basis = serde_json::from_str(&get_str(&st, "basis").map_err(|e| fmt_err("/state@basis", e))?)
        .map_err(|e| fmt_err("/state@basis", e))?;
    let mut tensors = Vec::with_capacity(length);
    for k in 0..length {
        let p = format!("/state/site_{k:04}");
        let site = file.group(&p).map_err(|e| fmt_err(&p, e))?;
        let dims: Vec<usize> = read_attr_vec::<u64>(&site, "dims", &p)?.into_iter().map(|d| d as usize).collect();
        let (_, values) = read_complex(&file, &format!("{p}/values"))?;
        let t = if symmetric {
            let flux = Qn::new(&read_attr_vec::<i32>(&site, "flux", &p)?)?;
            let mut indices = Vec::new();
            for leg in ['L', 'D', 'R'] {
                let dp = format!("{p}/charges_{leg}");
                let ds = site.dataset(&format!("charges_{leg}")).map_err(|e| fmt_err(&dp, e))?;
                let shape = ds.shape();
                let raw: Vec<i32> = ds.read_raw().map_err(|e| fmt_err(&dp, e))?;
                let dir = parse_direction(&get_str(&ds, "direction").map_err(|e| fmt_err(&dp, e))?, &dp)?;
                let labels = raw.chunks(shape[1].max(1)).map(Qn::new).collect::<tnt_core::Result<Vec<_>>>()?;
                indices.push(ChargedIndex::new(dir, labels)?);
            }
            let template = BlockTensor::zeros(indices, flux)?;
            Tensor::Block(template.with_flat_values(&values).map_err(|e| fmt_err(&p, e))?)
        } else {
            Tensor::Dense(DenseTensor::new(values, dims).map_err(|e| fmt_err(&p, e))?)
        };
        tensors.push(t);
    }
    let psi = Mps::from_tensors(g, basis, tensors)?;
    Ok(LoadedState {
        psi,
        step: read_attr::<u64>(&st, "step", "/state")? as usize,
        time: read_attr::<f64>(&st, "time", "/state")?,
        trunc_err: read_attr::<f64>(&st, "trunc_err", "/state")?,
    })
}

fn check_version(file: &File) {
    match get_str(file, "version") {
        Ok(v) if v == VERSION => {}
        Ok(v) => log::warn!("file written by version {v}, this is {VERSION}; loading anyway"),
        Err(_) => log::warn!("file has no version attribute; loading anyway"),
    }
}

pub fn load_spec(path: &Path) -> Result<RunSpec, AppError> {
    let file = open(path)?;
    check_version(&file);
    let par = file.group("parameters").map_err(|e| fmt_err("/parameters", e))?;
    let json = get_str(&par, "json").map_err(|e| fmt_err("/parameters@json", e))?;
    serde_json::from_str(&json).map_err(|e| fmt_err("/parameters@json", e))
}

pub fn load_config(path: &Path) -> Result<SystemConfig, AppError> {
    let file = open(path)?;
    let sys = file.group("system").map_err(|e| fmt_err("/system", e))?;
    let json = get_str(&sys, "json").map_err(|e| fmt_err("/system@json", e))?;
    serde_json::from_str(&json).map_err(|e| fmt_err("/system@json", e))
}

fn observable_group(file: &File) -> Result<Group, AppError> {
    file.create_group("observables").map_err(|e| AppError::Io(format!("/observables: {e}")))
}

fn site_axis(obs: &Group, l: usize) -> hdf5::Result<()> {
    let sites: Vec<f64> = (1..=l).map(|j| j as f64).collect();
    real_dataset(obs, "site", &[l], &sites, "site", "site index (1-based)")
}

fn value_shape(v: &ObservableValue) -> (Vec<usize>, Vec<C64>, &'static str) {
    match v {
        ObservableValue::Site(x) => (vec![x.len()], x.clone(), "site"),
        ObservableValue::Pairs(m) => (vec![m.nrows(), m.ncols()], m.iter().copied().collect(), "site_i, site_j"),
    }
}

pub fn write_ground_state_observables(
    file: &File,
    l: usize,
    report: &DmrgReport,
    keys: &[String],
    values: &[ObservableValue],
) -> Result<(), AppError> {
    let obs = observable_group(file)?;
    let h = |e: hdf5::Error| AppError::Io(format!("/observables: {e}"));
    site_axis(&obs, l).map_err(h)?;
    let n = report.energies.len();
    let sweeps: Vec<f64> = (1..=n).map(|s| s as f64).collect();
    real_dataset(&obs, "sweep", &[n], &sweeps, "sweep", "sweep index (1-based)").map_err(h)?;
    real_dataset(&obs, "energy", &[n], &report.energies, "sweep", "J").map_err(h)?;
    real_dataset(&obs, "energy_change", &[n], &report.delta, "sweep", "J").map_err(h)?;
    put_f64(&obs, "initial_energy", report.initial_energy).map_err(h)?;
    put_bool(&obs, "converged", report.converged).map_err(h)?;
    put_u64(&obs, "sweeps", report.sweeps as u64).map_err(h)?;
    for (key, v) in keys.iter().zip(values) {
        let (shape, data, dims) = value_shape(v);
        complex_dataset(&obs, key, &shape, &data, dims, "dimensionless").map_err(h)?;
    }
    Ok(())
}

pub fn write_evolve_observables(file: &File, l: usize, keys: &[String], snapshots: &[Snapshot]) -> Result<(), AppError> {
    let obs = observable_group(file)?;
    let h = |e: hdf5::Error| AppError::Io(format!("/observables: {e}"));
    site_axis(&obs, l).map_err(h)?;
    let n = snapshots.len();
    let col = |f: fn(&Snapshot) -> f64| snapshots.iter().map(f).collect::<Vec<f64>>();
    real_dataset(&obs, "time", &[n], &col(|s| s.time), "time", "hbar/J").map_err(h)?;
    real_dataset(&obs, "step", &[n], &col(|s| s.step as f64), "time", "step").map_err(h)?;
    real_dataset(&obs, "trunc_err", &[n], &col(|s| s.trunc_err), "time", "dimensionless").map_err(h)?;
    real_dataset(&obs, "norm_deviation", &[n], &col(|s| s.norm_dev), "time", "dimensionless").map_err(h)?;
    for (i, key) in keys.iter().enumerate() {
        let mut data = Vec::new();
        let mut shape = vec![n];
        let mut dims = "time";
        for (t, s) in snapshots.iter().enumerate() {
            let (sh, d, dd) = value_shape(&s.values[i]);
            if t == 0 {
                shape.extend(sh);
                dims = dd;
            }
            data.extend(d);
        }
        complex_dataset(&obs, key, &shape, &data, &format!("time, {dims}"), "dimensionless").map_err(h)?;
    }
    Ok(())
}

fn csv_file(dir: &Path, mode: Mode, name: &str) -> PathBuf {
    dir.join(format!("{}_{name}.csv", mode.name()))
}

fn write_text(path: &Path, body: String) -> Result<(), AppError> {
    fs::write(path, body).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
}

fn value_rows(v: &ObservableValue, prefix: &str, out: &mut String) {
    use std::fmt::Write;
    match v {
        ObservableValue::Site(x) => {
            for (j, z) in x.iter().enumerate() {
                let _ = writeln!(out, "{prefix}{},{:e},{:e}", j + 1, z.re, z.im);
            }
        }
        ObservableValue::Pairs(m) => {
            for ((i, j), z) in m.indexed_iter() {
                let _ = writeln!(out, "{prefix}{},{},{:e},{:e}", i + 1, j + 1, z.re, z.im);
            }
        }
    }
}

fn header(v: &ObservableValue) -> &'static str {
    match v {
        ObservableValue::Site(_) => "site,re,im",
        ObservableValue::Pairs(_) => "site_i,site_j,re,im",
    }
}

pub fn write_ground_state_csv(dir: &Path, report: &DmrgReport, keys: &[String], values: &[ObservableValue]) -> Result<(), AppError> {
    let mut e = String::from("sweep,energy,energy_change\n");
    for (s, (en, d)) in report.energies.iter().zip(&report.delta).enumerate() {
        e.push_str(&format!("{},{:e},{:e}\n", s + 1, en, d));
    }
    write_text(&csv_file(dir, Mode::GroundState, "energy"), e)?;
    for (key, v) in keys.iter().zip(values) {
        let mut body = format!("{}\n", header(v));
        value_rows(v, "", &mut body);
        write_text(&csv_file(dir, Mode::GroundState, key), body)?;
    }
    Ok(())
}

pub fn write_evolve_csv(dir: &Path, keys: &[String], snapshots: &[Snapshot]) -> Result<(), AppError> {
    let mut e = String::from("step,time,trunc_err,norm_deviation\n");
    for s in snapshots {
        e.push_str(&format!("{},{:e},{:e},{:e}\n", s.step, s.time, s.trunc_err, s.norm_dev));
    }
    write_text(&csv_file(dir, Mode::Evolve, "errors"), e)?;
    for (i, key) in keys.iter().enumerate() {
        let Some(first) = snapshots.first() else { continue };
        let mut body = format!("step,time,{}\n", header(&first.values[i]));
        for s in snapshots {
            value_rows(&s.values[i], &format!("{},{:e},", s.step, s.time), &mut body);
        }
        write_text(&csv_file(dir, Mode::Evolve, key), body)?;
    }
    Ok(())
}

/// Density-matrix-style observable as a matrix, for callers reading results.
pub fn as_matrix(shape: &[usize], values: Vec<C64>) -> Option<Array2<C64>> {
    match shape {
        [r, c] => Array2::from_shape_vec((*r, *c), values).ok(),
        _ => None,
    }
}
