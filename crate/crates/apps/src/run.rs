//! Ground-state and time-evolution runs driven by a [`RunSpec`].

use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnt_core::{BasisOperator, Graph, SystemConfig};
use tnt_mps::tebd::{tebd_evolve_from, Start};
use tnt_mps::{dmrg, evaluate_all, DmrgSettings, Mpo, Mps, TebdSettings};

use crate::output::{self, LoadedState};
use crate::spec::{result_path, InitialState, Mode, RunSpec};
use crate::AppError;

fn configure(spec: &RunSpec) -> Result<SystemConfig, AppError> {
    let mut config = match &spec.initial {
        InitialState::Load(path) => output::load_config(path)?,
        _ => SystemConfig::default(),
    };
    let basis = spec.basis()?;
    if spec.symmetric {
        config.set_symmetry("U(1)", 1)?;
        config.set_basis_operator(BasisOperator::with_charges(basis.charges().iter().map(|&q| vec![q]).collect()))?;
    } else {
        config.set_symmetry("none", 0)?;
        config.set_basis_operator(BasisOperator::plain(basis.dim()))?;
    }
    Ok(config)
}

fn initial_state(g: &mut Graph, spec: &RunSpec) -> Result<(Mps, Start), AppError> {
    let basis = spec.basis()?;
    let (psi, start) = match &spec.initial {
        InitialState::RandomSector(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (Mps::random(g, basis, spec.length, spec.chi, Some(*n), &mut rng)?, Start::default())
        }
        InitialState::Config(c) => {
            let cfg = Mps::parse_config(c)?;
            (Mps::product_state(g, basis, &cfg, true)?, Start::default())
        }
        InitialState::Load(path) => {
            let LoadedState { psi, step, trunc_err, .. } = output::load_state(g, path)?;
            if psi.len() != spec.length || psi.basis != basis {
                return Err(AppError::Usage(format!(
                    "{} holds a state of {} sites in basis {:?}, the run asks for {} sites in basis {:?}",
                    path.display(),
                    psi.len(),
                    psi.basis,
                    spec.length,
                    basis
                )));
            }
            (psi, Start { step, trunc_err })
        }
    };
    let psi = match (spec.symmetric, psi.is_symmetric(g)?) {
        (false, true) => psi.densified(g)?,
        (true, false) => return Err(AppError::Usage("a dense saved state cannot be continued with symmetry; pass --dense".into())),
        _ => psi,
    };
    Ok((psi, start))
}

/// Runs the ground-state search and writes the result file; returns its path.
pub fn run_ground_state(spec: &RunSpec) -> Result<PathBuf, AppError> {
    run(Mode::GroundState, spec)
}

/// Runs the time evolution and writes the result file; returns its path.
pub fn run_evolve(spec: &RunSpec) -> Result<PathBuf, AppError> {
    run(Mode::Evolve, spec)
}

pub fn run(mode: Mode, spec: &RunSpec) -> Result<PathBuf, AppError> {
    crate::spec::validate(mode, spec)?;
    let config = configure(spec)?;
    log::info!("{}", config.info());
    let path = result_path(mode, &spec.output_dir);
    let file = output::create(&path, mode, &config, spec)?;
    let mut g = Graph::new(Arc::new(config.clone()));
    let outcome = match mode {
        Mode::GroundState => ground_state(&mut g, spec, &file),
        Mode::Evolve => evolve(&mut g, spec, &file),
    };
    let message = outcome.as_ref().err().map(|e| e.to_string());
    output::finish(&file, &path, mode, &config, spec, message.as_deref())?;
    outcome.map(|_| path)
}

fn ground_state(g: &mut Graph, spec: &RunSpec, file: &hdf5::File) -> Result<(), AppError> {
    let h = spec.hamiltonian()?;
    let observables = spec.observable_specs()?;
    let (mut psi, _) = initial_state(g, spec)?;
    let mpo = Mpo::build(g, &h, spec.symmetric)?;
    let settings =
        DmrgSettings { chi: spec.chi, precision: spec.precision, max_sweeps: spec.max_sweeps, expansion: spec.expansion };
    let report = dmrg(g, &mpo, &mut psi, &settings)?;
    if !report.converged {
        log::warn!("energy did not converge to {} within {} sweeps", spec.precision, spec.max_sweeps);
    }
    let values = evaluate_all(g, &psi, &observables)?;
    output::write_state(file, g, &psi, 0, 0.0, 0.0)?;
    output::write_ground_state_observables(file, spec.length, &report, &spec.observables, &values)?;
    if spec.csv {
        output::write_ground_state_csv(&spec.output_dir, &report, &spec.observables, &values)?;
    }
    Ok(())
}

fn evolve(g: &mut Graph, spec: &RunSpec, file: &hdf5::File) -> Result<(), AppError> {
    let h = spec.hamiltonian()?;
    let observables = spec.observable_specs()?;
    let (mut psi, start) = initial_state(g, spec)?;
    let settings = TebdSettings { dt: spec.dt, steps: spec.steps, chi: spec.chi, save_every: spec.save_every };
    let report = tebd_evolve_from(g, &h, &mut psi, &settings, &observables, start, |_| {})?;
    let time = report.final_step as f64 * spec.dt;
    output::write_state(file, g, &psi, report.final_step, time, report.trunc_err)?;
    output::write_evolve_observables(file, spec.length, &spec.observables, &report.snapshots)?;
    if spec.csv {
        output::write_evolve_csv(&spec.output_dir, &spec.observables, &report.snapshots)?;
    }
    Ok(())
}
