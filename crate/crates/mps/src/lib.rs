//! Matrix product states and operators on open chains, with DMRG ground-state
//! search and TEBD time evolution.

pub mod basis;
pub mod dmrg;
pub mod env;
pub mod expect;
pub mod mpo;
pub mod observables;
pub mod sandwich;
pub mod state;
pub mod tebd;

use thiserror::Error;
use tnt_core::TntError;

pub use basis::{Basis, BasisKind};
pub use dmrg::{dmrg, dmrg_with_progress, DmrgReport, DmrgSettings};
pub use mpo::{Hamiltonian, Mpo};
pub use observables::{evaluate_all, ObservableKind, ObservableSpec, ObservableValue};
pub use sandwich::{heff_contract, heff_prepare, mps_mpo_mps_connect, Heff, Sandwich};
pub use state::Mps;
pub use tebd::{tebd_evolve, EvolveReport, Snapshot, TebdSettings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] TntError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("infeasible charge sector: {0}")]
    InfeasibleSector(String),
    #[error("unsupported term: {0}")]
    UnsupportedTerm(String),
    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),
    #[error("eigensolver failed on site {site} in sweep {sweep}: {source}")]
    Eigen { site: usize, sweep: usize, source: TntError },
}

pub type Result<T> = std::result::Result<T, Error>;
