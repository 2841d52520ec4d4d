//! Process-wide settings: symmetry mode, basis operator, truncation and
//! eigensolver limits. Values are explicit snapshots threaded to operations;
//! an ambient default is available for convenience.

use std::fmt::Write as _;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::cache::ReshapeCache;
use crate::error::{invalid, Result, TntError};
use crate::linalg::{EigenSettings, SvdSettings, SvdVariant, TruncErrorType, TruncationPolicy};
use crate::symmetric::{ChargedIndex, Direction, Qn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryMode {
    None,
    /// U(1) with `m` charges per label.
    U1 { m: usize },
}

/// Physical single-site basis: its dimension and, with symmetry, one label per level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisOperator {
    pub dim: usize,
    pub charges: Option<Vec<Vec<i32>>>,
}

impl BasisOperator {
    pub fn plain(dim: usize) -> Self {
        Self { dim, charges: None }
    }

    pub fn with_charges(charges: Vec<Vec<i32>>) -> Self {
        Self { dim: charges.len(), charges: Some(charges) }
    }

    /// Charged index over the basis with the given direction.
    pub fn index(&self, direction: Direction) -> Result<Option<ChargedIndex>> {
        match &self.charges {
            None => Ok(None),
            Some(c) => {
                let labels = c.iter().map(|q| Qn::new(q)).collect::<Result<Vec<_>>>()?;
                ChargedIndex::new(direction, labels).map(Some)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub symmetry: SymmetryMode,
    pub basis_operator: Option<BasisOperator>,
    pub rel_trunc_tol: f64,
    pub abs_trunc_tol: f64,
    pub trunc_err_tol: f64,
    pub auto_block_tol: f64,
    pub trunc_type: TruncErrorType,
    pub svd_variant: SvdVariant,
    pub reshape_reuse: bool,
    pub max_eig_iter: usize,
    /// Residual bound for the eigensolver.
    pub eig_tol: f64,
    /// Treat discarded symmetry-violating weight as an error instead of a warning.
    pub strict_symmetry: bool,
    #[serde(skip)]
    cache: Arc<ReshapeCache>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            symmetry: SymmetryMode::None,
            basis_operator: None,
            rel_trunc_tol: 1e-16,
            abs_trunc_tol: -1.0,
            trunc_err_tol: 1e-8,
            auto_block_tol: -1.0,
            trunc_type: TruncErrorType::TwoNorm,
            svd_variant: SvdVariant::DivideConquer,
            reshape_reuse: true,
            max_eig_iter: 300,
            eig_tol: 1e-10,
            strict_symmetry: false,
            cache: Arc::new(ReshapeCache::default()),
        }
    }
}

impl PartialEq for SystemConfig {
    fn eq(&self, other: &Self) -> bool {
        self.symmetry == other.symmetry
            && self.basis_operator == other.basis_operator
            && self.rel_trunc_tol.to_bits() == other.rel_trunc_tol.to_bits()
            && self.abs_trunc_tol.to_bits() == other.abs_trunc_tol.to_bits()
            && self.trunc_err_tol.to_bits() == other.trunc_err_tol.to_bits()
            && self.auto_block_tol.to_bits() == other.auto_block_tol.to_bits()
            && self.trunc_type == other.trunc_type
            && self.svd_variant == other.svd_variant
            && self.reshape_reuse == other.reshape_reuse
            && self.max_eig_iter == other.max_eig_iter
            && self.eig_tol.to_bits() == other.eig_tol.to_bits()
            && self.strict_symmetry == other.strict_symmetry
    }
}

static AMBIENT: RwLock<Option<Arc<SystemConfig>>> = RwLock::new(None);

/// `%g`-style rendering used by the summary.
fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..6).contains(&exp) {
        trim(&format!("{:.*}", (5 - exp) as usize, v))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

impl SystemConfig {
    /// Current ambient configuration (defaults until replaced).
    pub fn ambient() -> Arc<SystemConfig> {
        if let Some(c) = AMBIENT.read().expect("ambient config lock").as_ref() {
            return c.clone();
        }
        let mut slot = AMBIENT.write().expect("ambient config lock");
        slot.get_or_insert_with(|| Arc::new(SystemConfig::default())).clone()
    }

    pub fn set_ambient(config: SystemConfig) {
        *AMBIENT.write().expect("ambient config lock") = Some(Arc::new(config));
    }

    /// Reshape-plan store, or `None` when re-use is switched off.
    pub fn cache(&self) -> Option<&ReshapeCache> {
        self.reshape_reuse.then_some(&*self.cache)
    }

    pub fn truncation_policy(&self, max_dim: Option<usize>) -> TruncationPolicy {
        TruncationPolicy {
            max_dim,
            abs_tol: self.abs_trunc_tol,
            rel_tol: self.rel_trunc_tol,
            err_tol: self.trunc_err_tol,
            error_type: self.trunc_type,
        }
    }

    pub fn svd_settings(&self) -> SvdSettings {
        SvdSettings { variant: self.svd_variant, auto_block_tol: self.auto_block_tol }
    }

    pub fn eigen_settings(&self) -> EigenSettings {
        EigenSettings { max_iter: self.max_eig_iter, tol: self.eig_tol, ..EigenSettings::default() }
    }

    /// Number of charges per label, when symmetry is on.
    pub fn charges_per_label(&self) -> Option<usize> {
        match self.symmetry {
            SymmetryMode::None => None,
            SymmetryMode::U1 { m } => Some(m),
        }
    }

    fn changed(&self) {
        log::info!("\n{}", self.info());
    }

    pub fn set_symmetry(&mut self, kind: &str, m: usize) -> Result<()> {
        let mode = match kind.trim() {
            "U(1)" | "U1" | "u(1)" | "u1" => {
                if !(1..=crate::symmetric::MAX_QN).contains(&m) {
                    return Err(invalid(format!("U(1) needs 1..={} charges per label, got {m}", crate::symmetric::MAX_QN)));
                }
                SymmetryMode::U1 { m }
            }
            "none" | "" => SymmetryMode::None,
            other => return Err(TntError::UnsupportedSymmetry(format!("unknown symmetry type '{other}'"))),
        };
        self.symmetry = mode;
        self.changed();
        Ok(())
    }

    pub fn set_basis_operator(&mut self, basis: BasisOperator) -> Result<()> {
        if let (Some(c), Some(m)) = (&basis.charges, self.charges_per_label()) {
            if c.iter().any(|q| q.len() != m) {
                return Err(invalid(format!("basis labels must have {m} charges")));
            }
        }
        self.basis_operator = Some(basis);
        self.changed();
        Ok(())
    }

    pub fn set_abs_trunc_tol(&mut self, tol: f64) {
        self.abs_trunc_tol = tol;
        self.changed();
    }

    pub fn set_rel_trunc_tol(&mut self, tol: f64) {
        self.rel_trunc_tol = tol;
        self.changed();
    }

    pub fn set_trunc_err_tol(&mut self, tol: f64) {
        self.trunc_err_tol = tol;
        self.changed();
    }

    pub fn set_trunc_type(&mut self, name: &str) -> Result<()> {
        self.trunc_type =
            TruncErrorType::parse(name).ok_or_else(|| invalid(format!("unknown truncation type '{name}'")))?;
        self.changed();
        Ok(())
    }

    /// Tolerance for automatic blocking inside the SVD.
    pub fn set_svd_tol(&mut self, tol: f64) {
        self.auto_block_tol = tol;
        self.changed();
    }

    pub fn set_svd_variant(&mut self, variant: SvdVariant) {
        self.svd_variant = variant;
        self.changed();
    }

    pub fn set_reshape_reuse(&mut self, on: bool) {
        self.reshape_reuse = on;
        self.changed();
    }

    pub fn set_max_eig_iter(&mut self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(invalid("eigensolver iteration limit must be positive"));
        }
        self.max_eig_iter = n;
        self.changed();
        Ok(())
    }

    /// Human-readable summary of every setting.
    pub fn info(&self) -> String {
        let mut s = String::new();
        s.push_str("------------- System Information -------------\n");
        match self.symmetry {
            SymmetryMode::None => s.push_str("No symmetry type set.\n"),
            SymmetryMode::U1 { m } => {
                let _ = writeln!(s, "Symmetry type is U(1) with {m} quantum number(s) per label.");
            }
        }
        match &self.basis_operator {
            None => s.push_str("No basis operator set.\n"),
            Some(b) => {
                let _ = writeln!(
                    s,
                    "Basis operator set with dimension {}{}.",
                    b.dim,
                    if b.charges.is_some() { " and quantum number labels" } else { "" }
                );
            }
        }
        let _ = writeln!(s, "Relative truncation tolerance is {}.", fmt_g(self.rel_trunc_tol));
        let _ = writeln!(s, "Absolute truncation tolerance is {}.", fmt_g(self.abs_trunc_tol));
        let _ = writeln!(s, "Truncation error tolerance is {}.", fmt_g(self.trunc_err_tol));
        let _ = writeln!(s, "Tolerance for automatic blocking is {}.", fmt_g(self.auto_block_tol));
        let _ = writeln!(s, "Current truncation type is {}.", self.trunc_type.name());
        let _ = writeln!(s, "SVD type is {}.", self.svd_variant.description());
        let _ = writeln!(s, "Reshape re-use is turned {}.", if self.reshape_reuse { "on" } else { "off" });
        let _ = writeln!(s, "Maximum number of iterations for eigenvalue solver is {}.", self.max_eig_iter);
        s
    }
}
