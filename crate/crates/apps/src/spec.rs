//! Run parameters and their command-line form.

use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use tnt_mps::{Basis, Hamiltonian, ObservableSpec};

use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Boson,
    Spin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// Random state with this total charge.
    RandomSector(i32),
    /// Product state, one digit per site.
    Config(String),
    /// Final state of an earlier run.
    Load(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    GroundState,
    Evolve,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::GroundState => "ground_state",
            Mode::Evolve => "evolve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub system: SystemKind,
    pub length: usize,
    /// Boson occupation cut-off.
    pub n_max: usize,
    /// Twice the spin magnitude.
    pub twice_s: usize,
    /// Coefficient of `Σ (b†_j b_{j+1} + h.c.)`.
    pub jb: f64,
    pub ub: f64,
    pub e_harm: f64,
    pub trap_centre: Option<f64>,
    pub js: f64,
    pub delta: f64,
    pub bz: f64,
    pub chi: usize,
    pub precision: f64,
    pub max_sweeps: usize,
    pub expansion: f64,
    pub steps: usize,
    pub dt: f64,
    pub save_every: usize,
    pub initial: InitialState,
    pub observables: Vec<String>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub csv: bool,
    pub symmetric: bool,
}

impl RunSpec {
    pub fn basis(&self) -> Result<Basis, AppError> {
        Ok(match self.system {
            SystemKind::Boson => Basis::boson(self.n_max)?,
            SystemKind::Spin => Basis::spin(self.twice_s)?,
        })
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian, AppError> {
        Ok(match self.system {
            SystemKind::Boson => {
                Hamiltonian::bose_hubbard(self.length, self.n_max, self.jb, self.ub, self.e_harm, self.trap_centre)?
            }
            SystemKind::Spin => Hamiltonian::xxz(self.length, self.twice_s, self.js, self.delta, self.bz)?,
        })
    }

    pub fn observable_specs(&self) -> Result<Vec<ObservableSpec>, AppError> {
        self.observables.iter().map(|k| Ok(ObservableSpec::parse(k)?)).collect()
    }
}

const OBSERVABLE_HELP: &str = "Observables:
  --Ex1<op>          <op> on every site, e.g. --Ex1N
  --Ex2<opL><opR>=ap <opL>_i <opR>_j for all pairs, e.g. --Ex2bdagb=ap
  Operators: n, b, bdag (bosons); sz, sp, sm (spins); id";

#[derive(Debug, Parser)]
#[command(after_help = OBSERVABLE_HELP, group(ArgGroup::new("initial").args(["qnum_rand_state", "qnum_config_state", "load"])))]
struct Args {
    /// Output directory.
    #[arg(short = 'd', value_name = "DIR")]
    dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    system: Option<SystemKind>,
    #[arg(long)]
    length: Option<usize>,
    /// Maximum boson occupation per site.
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Spin magnitude (0.5, 1, 1.5, ...).
    #[arg(long)]
    spin: Option<f64>,
    /// Maximum bond dimension.
    #[arg(short = 'c')]
    chi: Option<usize>,
    /// Random initial state with this total particle number (or S^z + L s).
    #[arg(long = "qnum-rand-state", allow_negative_numbers = true)]
    qnum_rand_state: Option<i32>,
    /// Product initial state, one basis-state digit per site.
    #[arg(long = "qnum-config-state")]
    qnum_config_state: Option<String>,
    /// Start from the state (and parameters) saved in an earlier result file.
    #[arg(long, value_name = "FILE")]
    load: Option<PathBuf>,
    /// On-site interaction U.
    #[arg(long = "Ub", allow_negative_numbers = true)]
    ub: Option<f64>,
    /// Coefficient of the hopping sum Σ (b†_j b_{j+1} + h.c.).
    #[arg(long = "Jb", allow_negative_numbers = true)]
    jb: Option<f64>,
    /// Harmonic trap strength V.
    #[arg(long = "E-harm", allow_negative_numbers = true)]
    e_harm: Option<f64>,
    /// Trap centre (1-based site); defaults to the middle of the chain.
    #[arg(long = "trap-centre", allow_negative_numbers = true)]
    trap_centre: Option<f64>,
    /// Spin exchange J.
    #[arg(long = "Js", allow_negative_numbers = true)]
    js: Option<f64>,
    /// Exchange anisotropy.
    #[arg(long = "Delta", allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Longitudinal field.
    #[arg(long = "Bz", allow_negative_numbers = true)]
    bz: Option<f64>,
    /// Number of time steps.
    #[arg(short = 't')]
    steps: Option<usize>,
    /// Observables are saved every this many steps.
    #[arg(short = 'b')]
    save_every: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Sweeps stop once the energy changes by less than this.
    #[arg(long)]
    precision: Option<f64>,
    #[arg(long = "max-sweeps")]
    max_sweeps: Option<usize>,
    /// Subspace-expansion weight for the ground-state sweeps (0 disables).
    #[arg(long)]
    expansion: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write observables as CSV files.
    #[arg(long)]
    csv: bool,
    /// Use dense tensors instead of particle-number blocks.
    #[arg(long)]
    dense: bool,
}

/// Splits off the observable flags, which clap cannot express.
fn split_observables(argv: &[String]) -> Result<(Vec<String>, Vec<String>), AppError> {
    let mut rest = Vec::new();
    let mut obs = Vec::new();
    for (i, a) in argv.iter().enumerate() {
        match a.strip_prefix("--").filter(|k| i > 0 && (k.starts_with("Ex1") || k.starts_with("Ex2"))) {
            Some(key) => {
                ObservableSpec::parse(key).map_err(|e| AppError::Usage(e.to_string()))?;
                if !obs.iter().any(|o| o == key) {
                    obs.push(key.to_string());
                }
            }
            None => rest.push(a.clone()),
        }
    }
    Ok((rest, obs))
}

fn spin_to_twice(s: f64) -> Result<usize, AppError> {
    let t = 2.0 * s;
    if !(t >= 1.0) || (t - t.round()).abs() > 1e-9 {
        return Err(AppError::Usage(format!("--spin must be a positive multiple of 1/2, got {s}")));
    }
    Ok(t.round() as usize)
}

/// Parses a full argument vector (program name first). With `--load`, values
/// not given on the command line are taken from the saved run.
pub fn parse_args(mode: Mode, argv: &[String]) -> Result<RunSpec, AppError> {
    let (rest, observables) = split_observables(argv)?;
    let args = Args::try_parse_from(&rest).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => AppError::Help(e.to_string()),
        _ => AppError::Usage(e.to_string()),
    })?;
    let saved = match &args.load {
        Some(path) => Some(crate::output::load_spec(path)?),
        None => None,
    };
    resolve(mode, args, observables, saved.as_ref())
}

fn resolve(mode: Mode, a: Args, observables: Vec<String>, saved: Option<&RunSpec>) -> Result<RunSpec, AppError> {
    let mut missing = Vec::new();
    macro_rules! pick {
        ($cli:expr, $field:ident, $flag:expr) => {
            match ($cli, saved) {
                (Some(v), _) => Some(v),
                (None, Some(s)) => Some(s.$field.clone()),
                (None, None) => {
                    missing.push($flag);
                    None
                }
            }
        };
        ($cli:expr, $field:ident, default $d:expr) => {
            $cli.or(saved.map(|s| s.$field.clone())).unwrap_or($d)
        };
    }
    let dir = a.dir.clone();
    if dir.is_none() {
        missing.push("-d");
    }
    let system = pick!(a.system, system, "--system");
    let length = pick!(a.length, length, "--length");
    let (n_max, twice_s) = match system {
        Some(SystemKind::Boson) => (pick!(a.n_max, n_max, "--n-max"), Some(saved.map_or(1, |s| s.twice_s))),
        Some(SystemKind::Spin) => {
            let twice = match a.spin {
                Some(s) => Some(spin_to_twice(s)?),
                None => pick!(None::<usize>, twice_s, "--spin"),
            };
            (Some(saved.map_or(1, |s| s.n_max)), twice)
        }
        None => (Some(1), Some(1)),
    };
    let initial = match (a.qnum_rand_state, a.qnum_config_state.clone(), a.load.clone()) {
        (Some(n), _, _) => Some(InitialState::RandomSector(n)),
        (_, Some(c), _) => Some(InitialState::Config(c)),
        (_, _, Some(p)) => Some(InitialState::Load(p)),
        _ => {
            missing.push("one of --qnum-rand-state, --qnum-config-state, --load");
            None
        }
    };
    let (steps, dt) = match mode {
        Mode::Evolve => {
            let steps = a.steps.or_else(|| {
                missing.push("-t");
                None
            });
            (steps, pick!(a.dt, dt, "--dt"))
        }
        Mode::GroundState => (Some(a.steps.unwrap_or(0)), Some(pick!(a.dt, dt, default 0.01))),
    };
    if !missing.is_empty() {
        return Err(AppError::Usage(format!("missing required arguments: {}", missing.join(", "))));
    }
    let mut observables = observables;
    if observables.is_empty() {
        if let Some(s) = saved {
            observables = s.observables.clone();
        }
    }
    let spec = RunSpec {
        system: system.unwrap(),
        length: length.unwrap(),
        n_max: n_max.unwrap(),
        twice_s: twice_s.unwrap(),
        jb: pick!(a.jb, jb, default 0.0),
        ub: pick!(a.ub, ub, default 0.0),
        e_harm: pick!(a.e_harm, e_harm, default 0.0),
        trap_centre: a.trap_centre.or(saved.and_then(|s| s.trap_centre)),
        js: pick!(a.js, js, default 1.0),
        delta: pick!(a.delta, delta, default 1.0),
        bz: pick!(a.bz, bz, default 0.0),
        chi: pick!(a.chi, chi, default 64),
        precision: pick!(a.precision, precision, default 1e-4),
        max_sweeps: pick!(a.max_sweeps, max_sweeps, default 50),
        expansion: pick!(a.expansion, expansion, default 0.0),
        steps: steps.unwrap(),
        dt: dt.unwrap(),
        save_every: pick!(a.save_every, save_every, default 1),
        initial: initial.unwrap(),
        observables,
        output_dir: dir.unwrap(),
        seed: pick!(a.seed, seed, default 0),
        csv: a.csv,
        symmetric: if a.dense { false } else { saved.map_or(true, |s| s.symmetric) },
    };
    validate(mode, &spec)?;
    Ok(spec)
}

pub fn validate(mode: Mode, s: &RunSpec) -> Result<(), AppError> {
    let usage = |m: String| Err(AppError::Usage(m));
    if s.length == 0 {
        return usage("--length must be at least 1".into());
    }
    if s.chi == 0 {
        return usage("-c must be positive".into());
    }
    if s.system == SystemKind::Boson && s.n_max == 0 {
        return usage("--n-max must be positive".into());
    }
    if !(s.precision > 0.0) {
        return usage(format!("--precision must be positive, got {}", s.precision));
    }
    if s.max_sweeps == 0 {
        return usage("--max-sweeps must be positive".into());
    }
    if !(s.expansion >= 0.0) {
        return usage("--expansion must be non-negative".into());
    }
    if mode == Mode::Evolve {
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return usage(format!("--dt must be positive, got {}", s.dt));
        }
        if s.save_every == 0 {
            return usage("-b must be positive".into());
        }
    }
    if let InitialState::Config(c) = &s.initial {
        if c.chars().count() != s.length {
            return usage(format!("--qnum-config-state has {} sites, --length is {}", c.chars().count(), s.length));
        }
    }
    let basis = s.basis()?;
    for o in s.observable_specs()? {
        o.check(&basis).map_err(|e| AppError::Usage(e.to_string()))?;
    }
    Ok(())
}

/// Path of the result file a run writes.
pub fn result_path(mode: Mode, dir: &Path) -> PathBuf {
    dir.join(format!("{}.h5", mode.name()))
}
