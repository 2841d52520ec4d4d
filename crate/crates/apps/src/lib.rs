//! Command-line ground-state and time-evolution applications for
//! one-dimensional lattice models, and their result-file format.

pub mod output;
pub mod run;
pub mod spec;

pub use run::{run, run_evolve, run_ground_state};
pub use spec::{parse_args, InitialState, Mode, RunSpec, SystemKind};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Help or version text requested.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("malformed result file: {0}")]
    Format(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Help(_) => 0,
            AppError::Usage(_) => 2,
            AppError::Numeric(_) => 3,
            AppError::Io(_) | AppError::Format(_) => 1,
        }
    }
}

impl From<tnt_mps::Error> for AppError {
    fn from(e: tnt_mps::Error) -> Self {
        use tnt_mps::Error as E;
        match e {
            E::InvalidArgument(_)
            | E::InvalidConfiguration(_)
            | E::InfeasibleSector(_)
            | E::UnsupportedTerm(_)
            | E::UnsupportedObservable(_) => AppError::Usage(e.to_string()),
            E::Core(_) | E::Eigen { .. } => AppError::Numeric(e.to_string()),
        }
    }
}

impl From<tnt_core::TntError> for AppError {
    fn from(e: tnt_core::TntError) -> Self {
        AppError::Numeric(e.to_string())
    }
}

/// Entry point shared by the binaries; returns the process exit code.
pub fn main_with(mode: Mode, argv: &[String]) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let result = parse_args(mode, argv).and_then(|spec| run(mode, &spec));
    match result {
        Ok(path) => {
            println!("{}", path.display());
            0
        }
        Err(AppError::Help(text)) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
