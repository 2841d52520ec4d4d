//! Expectation values of one-site operators and of operator pairs on all
//! pairs of sites. The state is densified first; results are divided by
//! `<psi|psi>`.

use ndarray::Array2;
use tnt_core::{DenseTensor, Graph, ReshapeCache, Tensor, C64};

use crate::env::{overlap_close, overlap_extend_left, overlap_extend_right, overlap_left_boundary, overlap_right_boundary};
use crate::state::Mps;
use crate::{Error, Result};

struct Envs {
    sites: Vec<Tensor>,
    /// `left[k]` covers sites `0..k`.
    left: Vec<Tensor>,
    /// `right[k]` covers sites `k..L`.
    right: Vec<Tensor>,
    norm: f64,
}

fn op_tensor(op: &Array2<C64>, d: usize) -> Result<Tensor> {
    if op.dim() != (d, d) {
        return Err(Error::InvalidArgument(format!("operator is {:?}, basis dimension is {d}", op.dim())));
    }
    Ok(Tensor::Dense(DenseTensor::from_matrix(op.clone())))
}

impl Envs {
    fn build(g: &Graph, psi: &Mps) -> Result<Envs> {
        let cache = g.config().cache();
        let sites: Vec<Tensor> =
            (0..psi.len()).map(|k| Ok(Tensor::Dense(psi.site(g, k)?.to_dense().into_owned()))).collect::<Result<_>>()?;
        let l = sites.len();
        let mut left = vec![overlap_left_boundary(&sites[0])?];
        for k in 0..l {
            left.push(overlap_extend_left(&left[k], &sites[k], None, cache)?);
        }
        let mut right = vec![overlap_right_boundary(&sites[l - 1])?];
        for k in (0..l).rev() {
            let next = overlap_extend_right(&right[0], &sites[k], None, cache)?;
            right.insert(0, next);
        }
        let norm = overlap_close(&left[l], &right[l], cache)?.re;
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument(format!("state has norm squared {norm}")));
        }
        Ok(Envs { sites, left, right, norm })
    }

    fn one(&self, op: &Tensor, k: usize, cache: Option<&ReshapeCache>) -> Result<C64> {
        let e = overlap_extend_left(&self.left[k], &self.sites[k], Some(op), cache)?;
        Ok(overlap_close(&e, &self.right[k + 1], cache)? / self.norm)
    }
}

/// `<psi|op_j|psi> / <psi|psi>` for each requested site.
pub fn single_site(g: &Graph, psi: &Mps, op: &Array2<C64>, sites: &[usize]) -> Result<Vec<C64>> {
    let t = op_tensor(op, psi.basis.dim())?;
    if let Some(&bad) = sites.iter().find(|&&s| s >= psi.len()) {
        return Err(Error::InvalidArgument(format!("site {bad} outside chain of length {}", psi.len())));
    }
    let envs = Envs::build(g, psi)?;
    let cache = g.config().cache();
    sites.iter().map(|&k| envs.one(&t, k, cache)).collect()
}

/// `<psi|op_j|psi> / <psi|psi>` on every site.
pub fn all_sites(g: &Graph, psi: &Mps, op: &Array2<C64>) -> Result<Vec<C64>> {
    let sites: Vec<usize> = (0..psi.len()).collect();
    single_site(g, psi, op, &sites)
}

/// `rho[i][j] = <psi|op_l(i) op_r(j)|psi> / <psi|psi>` for all pairs; on the
/// diagonal the two operators act on the same site as the product
/// `op_l · op_r`.
pub fn all_pairs(g: &Graph, psi: &Mps, op_l: &Array2<C64>, op_r: &Array2<C64>) -> Result<Array2<C64>> {
    let d = psi.basis.dim();
    let tl = op_tensor(op_l, d)?;
    let tr = op_tensor(op_r, d)?;
    let tlr = op_tensor(&op_l.dot(op_r), d)?;
    let envs = Envs::build(g, psi)?;
    let cache = g.config().cache();
    let l = psi.len();
    let mut rho = Array2::zeros((l, l));
    for i in 0..l {
        rho[[i, i]] = envs.one(&tlr, i, cache)?;
        // first operator on site i, second one further right
        for (first, second, transpose) in [(&tl, &tr, false), (&tr, &tl, true)] {
            let mut x = overlap_extend_left(&envs.left[i], &envs.sites[i], Some(first), cache)?;
            for j in i + 1..l {
                let e = overlap_extend_left(&x, &envs.sites[j], Some(second), cache)?;
                let v = overlap_close(&e, &envs.right[j + 1], cache)? / envs.norm;
                if transpose {
                    rho[[j, i]] = v;
                } else {
                    rho[[i, j]] = v;
                }
                if j + 1 < l {
                    x = overlap_extend_left(&x, &envs.sites[j], None, cache)?;
                }
            }
        }
    }
    Ok(rho)
}

/// `<psi|op|psi> / <psi|psi>` for an operator given as an MPO.
pub fn mpo_expectation(g: &Graph, psi: &Mps, op: &crate::mpo::Mpo) -> Result<C64> {
    use crate::env::{extend_left, left_boundary};
    if op.len() != psi.len() {
        return Err(Error::InvalidArgument("operator and state lengths differ".into()));
    }
    let cache = g.config().cache();
    let a0 = psi.site(g, 0)?;
    let mut e = left_boundary(&a0, &*op.tensor(g, 0)?)?;
    for k in 0..psi.len() {
        e = extend_left(&e, &*psi.site(g, k)?, &*op.tensor(g, k)?, cache)?;
    }
    Ok(crate::env::scalar(&e) / psi.norm_sqr(g)?)
}
