//! Hamiltonians with on-site and nearest-neighbour terms, and their MPOs.

use std::sync::Arc;

use ndarray::Array2;
use tnt_core::symmetric::impose_symmetry_with_flux;
use tnt_core::{ChargedIndex, DenseTensor, Direction, Graph, Network, NodeId, Qn, Tensor, C64};

use crate::basis::Basis;
use crate::{Error, Result};

/// `Σ_j coeffs[j] · left_j right_{j+1}` over the bonds of the chain.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub left: Array2<C64>,
    pub right: Array2<C64>,
    pub coeffs: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub basis: Basis,
    pub length: usize,
    /// Sum of all one-site terms on each site.
    pub onsite: Vec<Array2<C64>>,
    pub couplings: Vec<Coupling>,
}

fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// Default trap centre for sites numbered from 1.
pub fn default_trap_centre(length: usize) -> f64 {
    ((length + 1) / 2) as f64
}

fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (n, m) = (a.nrows(), b.nrows());
    Array2::from_shape_fn((n * m, n * m), |(r, col)| a[[r / m, col / m]] * b[[r % m, col % m]])
}

impl Hamiltonian {
    pub fn new(basis: Basis, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidArgument("chain length must be positive".into()));
        }
        let d = basis.dim();
        Ok(Hamiltonian { basis, length, onsite: vec![Array2::zeros((d, d)); length], couplings: Vec::new() })
    }

    fn check_op(&self, op: &Array2<C64>) -> Result<()> {
        let d = self.basis.dim();
        if op.dim() != (d, d) {
            return Err(Error::InvalidArgument(format!("operator is {:?}, basis dimension is {d}", op.dim())));
        }
        Ok(())
    }

    pub fn add_onsite(&mut self, site: usize, op: &Array2<C64>) -> Result<()> {
        self.check_op(op)?;
        let slot = self
            .onsite
            .get_mut(site)
            .ok_or_else(|| Error::InvalidArgument(format!("site {site} outside chain of length {}", self.length)))?;
        *slot += op;
        Ok(())
    }

    /// Adds `Σ_j coeffs[j] left_j right_{j+1}`; `coeffs` has one entry per bond.
    pub fn add_coupling(&mut self, left: Array2<C64>, right: Array2<C64>, coeffs: Vec<C64>) -> Result<()> {
        self.check_op(&left)?;
        self.check_op(&right)?;
        if coeffs.len() != self.length - 1 {
            return Err(Error::InvalidArgument(format!("{} coefficients for {} bonds", coeffs.len(), self.length - 1)));
        }
        if coeffs.iter().any(|v| *v != c(0.0)) {
            self.couplings.push(Coupling { left, right, coeffs });
        }
        Ok(())
    }

    pub fn add_uniform_coupling(&mut self, left: Array2<C64>, right: Array2<C64>, coeff: C64) -> Result<()> {
        let n = self.length - 1;
        self.add_coupling(left, right, vec![coeff; n])
    }

    /// `hop Σ (b†_j b_{j+1} + h.c.) + (U/2) Σ n_j(n_j - 1) + V Σ (j - j_c)² n_j`
    /// with sites `j = 1..L`.
    pub fn bose_hubbard(length: usize, n_max: usize, hop: f64, u: f64, v: f64, centre: Option<f64>) -> Result<Self> {
        let basis = Basis::boson(n_max)?;
        let mut h = Hamiltonian::new(basis, length)?;
        let b = basis.lower();
        let bd = basis.raise();
        let n = basis.basis_operator();
        let interaction = n.dot(&(&n - &basis.identity())).mapv(|x| x * (u / 2.0));
        let jc = centre.unwrap_or_else(|| default_trap_centre(length));
        for j in 0..length {
            let trap = v * ((j + 1) as f64 - jc).powi(2);
            h.add_onsite(j, &(&interaction + &n.mapv(|x| x * trap)))?;
        }
        if length > 1 {
            h.add_uniform_coupling(bd.clone(), b.clone(), c(hop))?;
            h.add_uniform_coupling(b, bd, c(hop))?;
        }
        Ok(h)
    }

    /// `J Σ (S^x S^x + S^y S^y + Δ S^z S^z) + h Σ S^z`.
    pub fn xxz(length: usize, twice_s: usize, j: f64, delta: f64, field: f64) -> Result<Self> {
        let basis = Basis::spin(twice_s)?;
        let mut h = Hamiltonian::new(basis, length)?;
        let sz = basis.sz();
        for site in 0..length {
            h.add_onsite(site, &sz.mapv(|x| x * field))?;
        }
        if length > 1 {
            h.add_uniform_coupling(basis.raise(), basis.lower(), c(j / 2.0))?;
            h.add_uniform_coupling(basis.lower(), basis.raise(), c(j / 2.0))?;
            h.add_uniform_coupling(sz.clone(), sz, c(j * delta))?;
        }
        Ok(h)
    }

    pub fn heisenberg(length: usize, twice_s: usize, j: f64) -> Result<Self> {
        Self::xxz(length, twice_s, j, 1.0, 0.0)
    }

    /// Two-site terms of bond `j` as `(coefficient, matrix)` pairs, with the
    /// on-site terms shared between the bonds touching each site. Matrix rows
    /// index the outgoing `(s_j, s_{j+1})` pair.
    pub fn bond_terms(&self, bond: usize) -> Result<Vec<(C64, Array2<C64>)>> {
        if bond + 1 >= self.length {
            return Err(Error::InvalidArgument(format!("bond {bond} outside chain of length {}", self.length)));
        }
        let id = self.basis.identity();
        let mut terms = Vec::new();
        for cp in &self.couplings {
            if cp.coeffs[bond] != c(0.0) {
                terms.push((cp.coeffs[bond], kron(&cp.left, &cp.right)));
            }
        }
        let weight = |site: usize| if site == 0 || site + 1 == self.length { 1.0 } else { 0.5 };
        let left = &self.onsite[bond];
        if left.iter().any(|v| *v != c(0.0)) {
            terms.push((c(weight(bond)), kron(left, &id)));
        }
        let right = &self.onsite[bond + 1];
        if right.iter().any(|v| *v != c(0.0)) {
            terms.push((c(weight(bond + 1)), kron(&id, right)));
        }
        Ok(terms)
    }
}

/// Matrix product operator stored as a network of nodes with legs `L`, `R`,
/// `U` (joins the ket's physical leg) and `D`. Element `[l, r, u, d]` is
/// `<d|W_{lr}|u>`.
#[derive(Debug, Clone)]
pub struct Mpo {
    pub net: Network,
    pub sites: Vec<NodeId>,
    pub basis: Basis,
    pub bond_dim: usize,
}

impl Mpo {
    /// Finite-state-machine construction: state 0 has no operator placed
    /// yet, state `1 + k` has the left operator of coupling `k` placed, and
    /// the last state is complete.
    pub fn build(g: &mut Graph, h: &Hamiltonian, symmetric: bool) -> Result<Mpo> {
        let basis = h.basis;
        let d = basis.dim();
        let nc = h.couplings.len();
        let w = 2 + nc;
        let last = w - 1;
        let len = h.length;
        let id = basis.identity();
        let mut bond_charges = vec![0i32; w];
        if symmetric {
            for (k, cp) in h.couplings.iter().enumerate() {
                let a = basis.charge_shift(&cp.left)?;
                let b = basis.charge_shift(&cp.right)?;
                match (a, b) {
                    (Some(a), Some(b)) if a + b == 0 => bond_charges[1 + k] = a,
                    _ => return Err(Error::UnsupportedTerm(format!("coupling {k} does not conserve the charge"))),
                }
            }
            for (j, op) in h.onsite.iter().enumerate() {
                if basis.charge_shift(op)?.is_some_and(|s| s != 0) {
                    return Err(Error::UnsupportedTerm(format!("on-site term on site {j} does not conserve the charge")));
                }
            }
        }
        let net = g.network_create();
        let mut sites = Vec::with_capacity(len);
        for j in 0..len {
            let rows: Vec<usize> = if j == 0 { vec![0] } else { (0..w).collect() };
            let cols: Vec<usize> = if j + 1 == len { vec![last] } else { (0..w).collect() };
            let mut t = vec![C64::new(0.0, 0.0); rows.len() * cols.len() * d * d];
            let mut put = |l: usize, r: usize, op: &Array2<C64>| {
                if let (Some(li), Some(ri)) = (rows.iter().position(|&x| x == l), cols.iter().position(|&x| x == r)) {
                    for u in 0..d {
                        for dd in 0..d {
                            t[((li * cols.len() + ri) * d + u) * d + dd] += op[[dd, u]];
                        }
                    }
                }
            };
            put(0, 0, &id);
            put(last, last, &id);
            put(0, last, &h.onsite[j]);
            for (k, cp) in h.couplings.iter().enumerate() {
                put(0, 1 + k, &cp.left);
                if j > 0 {
                    put(1 + k, last, &cp.right.mapv(|v| v * cp.coeffs[j - 1]));
                }
            }
            let dense = DenseTensor::new(t, vec![rows.len(), cols.len(), d, d])?;
            let tensor = if symmetric {
                let lq: Vec<i32> = rows.iter().map(|&r| bond_charges[r]).collect();
                let rq: Vec<i32> = cols.iter().map(|&r| bond_charges[r]).collect();
                let indices = vec![
                    ChargedIndex::from_charges(Direction::In, &lq)?,
                    ChargedIndex::from_charges(Direction::Out, &rq)?,
                    basis.index(Direction::Out),
                    basis.index(Direction::In),
                ];
                let (b, discarded) = impose_symmetry_with_flux(&dense, indices, Qn::zero(1))?;
                if discarded > 0.0 {
                    return Err(Error::UnsupportedTerm(format!("MPO tensor on site {j} breaks the symmetry")));
                }
                Tensor::Block(b)
            } else {
                Tensor::Dense(dense)
            };
            let node = g.create(tensor, "LRUD")?;
            g.insert_at_end(&net, node, 'L', 'R')?;
            sites.push(node);
        }
        Ok(Mpo { net, sites, basis, bond_dim: w })
    }

    /// Bond-dimension-one MPO `⊗_j ops[j]`.
    pub fn product(g: &mut Graph, basis: Basis, ops: &[Array2<C64>], symmetric: bool) -> Result<Mpo> {
        let d = basis.dim();
        let net = g.network_create();
        let mut sites = Vec::new();
        for op in ops {
            if op.dim() != (d, d) {
                return Err(Error::InvalidArgument("operator does not match the basis".into()));
            }
            let mut t = vec![C64::new(0.0, 0.0); d * d];
            for u in 0..d {
                for dd in 0..d {
                    t[u * d + dd] = op[[dd, u]];
                }
            }
            let dense = DenseTensor::new(t, vec![1, 1, d, d])?;
            let tensor = if symmetric {
                let shift = basis.charge_shift(op)?.unwrap_or(0);
                if shift != 0 {
                    return Err(Error::UnsupportedTerm("product MPO factors must conserve the charge".into()));
                }
                let indices = vec![
                    ChargedIndex::from_charges(Direction::In, &[0])?,
                    ChargedIndex::from_charges(Direction::Out, &[0])?,
                    basis.index(Direction::Out),
                    basis.index(Direction::In),
                ];
                Tensor::Block(impose_symmetry_with_flux(&dense, indices, Qn::zero(1))?.0)
            } else {
                Tensor::Dense(dense)
            };
            let node = g.create(tensor, "LRUD")?;
            g.insert_at_end(&net, node, 'L', 'R')?;
            sites.push(node);
        }
        Ok(Mpo { net, sites, basis, bond_dim: 1 })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn tensor(&self, g: &Graph, site: usize) -> Result<Arc<Tensor>> {
        Ok(g.operand(self.sites[site])?)
    }

    /// Full operator matrix (rows: outgoing configuration, site 0 most
    /// significant). Only sensible for short chains.
    pub fn to_matrix(&self, g: &Graph) -> Result<Array2<C64>> {
        let d = self.basis.dim();
        let mut acc: Option<Tensor> = None;
        for j in 0..self.len() {
            let w = self.tensor(g, j)?.to_dense().into_owned();
            let w = Tensor::Dense(w);
            acc = Some(match acc {
                None => w,
                // [r, U..., D...] with the newest site last in each group
                Some(a) => {
                    let n = a.rank();
                    let t = Tensor::contract(&a, &[0], &w, &[0], None)?;
                    // t axes: [U(j<j'), D(j<j')..., R, U, D]
                    let k = (n - 1) / 2;
                    let mut order = vec![2 * k];
                    order.extend(0..k);
                    order.push(2 * k + 1);
                    order.extend(k..2 * k);
                    order.push(2 * k + 2);
                    t.permute(&order, None)?
                }
            });
            if j == 0 {
                // drop the left bond: [1, r, U, D] -> [r, U, D]
                let a = acc.take().unwrap();
                acc = Some(a.remove_singleton(0)?);
            }
        }
        let a = acc.ok_or_else(|| Error::InvalidArgument("empty MPO".into()))?;
        let a = a.remove_singleton(0)?;
        let l = self.len();
        let n = d.pow(l as u32);
        let dense = a.to_dense();
        // axes [U_0..U_{L-1}, D_0..D_{L-1}], element <D|H|U>
        let mut m = Array2::zeros((n, n));
        for (off, v) in dense.values().iter().enumerate() {
            m[[off % n, off / n]] = *v;
        }
        Ok(m)
    }
}
