//! Local Hilbert spaces and their operators.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use tnt_core::{ChargedIndex, Direction, C64};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// Occupations `0..=n_max`.
    Boson { n_max: usize },
    /// Spin `s = twice_s / 2`, states ordered by `m = -s, ..., s`.
    Spin { twice_s: usize },
}

/// A site basis. The conserved charge of basis state `k` is `k` (particle
/// number for bosons, `m + s` for spins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub kind: BasisKind,
}

fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

impl Basis {
    pub fn boson(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidArgument("boson basis needs n_max >= 1".into()));
        }
        Ok(Basis { kind: BasisKind::Boson { n_max } })
    }

    pub fn hard_core() -> Self {
        Basis { kind: BasisKind::Boson { n_max: 1 } }
    }

    pub fn spin(twice_s: usize) -> Result<Self> {
        if twice_s == 0 {
            return Err(Error::InvalidArgument("spin basis needs s > 0".into()));
        }
        Ok(Basis { kind: BasisKind::Spin { twice_s } })
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            BasisKind::Boson { n_max } => n_max + 1,
            BasisKind::Spin { twice_s } => twice_s + 1,
        }
    }

    /// Charge label of every basis state.
    pub fn charges(&self) -> Vec<i32> {
        (0..self.dim() as i32).collect()
    }

    pub fn index(&self, direction: Direction) -> ChargedIndex {
        ChargedIndex::from_charges(direction, &self.charges()).expect("basis charges")
    }

    /// Diagonal operator whose entries are the charge labels; the number
    /// operator for bosons.
    pub fn basis_operator(&self) -> Array2<C64> {
        Array2::from_diag(&ndarray::Array1::from_iter(self.charges().iter().map(|&q| c(q as f64))))
    }

    pub fn identity(&self) -> Array2<C64> {
        Array2::eye(self.dim())
    }

    /// Lowering operator: `b` for bosons (`<k-1|b|k> = sqrt(k)`), `S-` for spins.
    pub fn lower(&self) -> Array2<C64> {
        let d = self.dim();
        let mut m = Array2::zeros((d, d));
        for k in 1..d {
            m[[k - 1, k]] = match self.kind {
                BasisKind::Boson { .. } => c((k as f64).sqrt()),
                BasisKind::Spin { twice_s } => {
                    let s = twice_s as f64 / 2.0;
                    let mk = k as f64 - s;
                    c((s * (s + 1.0) - mk * (mk - 1.0)).sqrt())
                }
            };
        }
        m
    }

    pub fn raise(&self) -> Array2<C64> {
        self.lower().t().mapv(|v| v.conj())
    }

    /// `S^z` for spins, `n` for bosons.
    pub fn sz(&self) -> Array2<C64> {
        match self.kind {
            BasisKind::Boson { .. } => self.basis_operator(),
            BasisKind::Spin { twice_s } => {
                let s = twice_s as f64 / 2.0;
                Array2::from_diag(&ndarray::Array1::from_iter((0..self.dim()).map(|k| c(k as f64 - s))))
            }
        }
    }

    /// Operator by name: `n`, `b`, `bdag`, `sz`, `sp`, `sm`, `id`.
    pub fn operator(&self, name: &str) -> Result<Array2<C64>> {
        let boson = matches!(self.kind, BasisKind::Boson { .. });
        match name.to_ascii_lowercase().as_str() {
            "n" if boson => Ok(self.basis_operator()),
            "b" if boson => Ok(self.lower()),
            "bdag" if boson => Ok(self.raise()),
            "sz" if !boson => Ok(self.sz()),
            "sp" if !boson => Ok(self.raise()),
            "sm" if !boson => Ok(self.lower()),
            "id" | "i" => Ok(self.identity()),
            _ => Err(Error::UnsupportedObservable(format!("no operator {name:?} for this basis"))),
        }
    }

    /// Change of charge `out - in` produced by a matrix, if it is the same for
    /// every nonzero element. `None` for the zero matrix.
    pub fn charge_shift(&self, op: &Array2<C64>) -> Result<Option<i32>> {
        let q = self.charges();
        let mut shift = None;
        for ((r, col), v) in op.indexed_iter() {
            if *v != c(0.0) {
                let s = q[r] - q[col];
                match shift {
                    None => shift = Some(s),
                    Some(t) if t != s => {
                        return Err(Error::UnsupportedTerm("operator does not shift the charge by a fixed amount".into()))
                    }
                    _ => {}
                }
            }
        }
        Ok(shift)
    }

    /// Checks a product-state configuration entry.
    pub fn check_state(&self, k: usize) -> Result<()> {
        if k >= self.dim() {
            Err(Error::InvalidConfiguration(format!("basis state {k} out of range for dimension {}", self.dim())))
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boson_ladder_commutator() {
        let b = Basis::boson(3).unwrap();
        let n = b.raise().dot(&b.lower());
        assert!((n - b.basis_operator()).iter().all(|v| v.norm() < 1e-14));
        let comm = b.lower().dot(&b.raise()) - b.raise().dot(&b.lower());
        for k in 0..3 {
            assert!((comm[[k, k]] - c(1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn spin_algebra() {
        for twice_s in [1, 2, 3] {
            let b = Basis::spin(twice_s).unwrap();
            let comm = b.raise().dot(&b.lower()) - b.lower().dot(&b.raise());
            let want = b.sz().mapv(|v| v * 2.0);
            assert!((comm - want).iter().all(|v| v.norm() < 1e-13));
        }
    }

    #[test]
    fn shifts() {
        let b = Basis::boson(2).unwrap();
        assert_eq!(b.charge_shift(&b.raise()).unwrap(), Some(1));
        assert_eq!(b.charge_shift(&b.lower()).unwrap(), Some(-1));
        assert_eq!(b.charge_shift(&b.basis_operator()).unwrap(), Some(0));
        assert!(b.charge_shift(&(b.raise() + b.lower())).is_err());
        assert!(b.check_state(3).is_err());
    }
}
