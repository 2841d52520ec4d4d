//! Matrix product states. Site tensors have axes (and legs) `L`, `D`, `R`;
//! with charges the directions are `In`, `In`, `Out` and the flux is zero, so
//! the right bond carries the charge accumulated up to and including the site.

use std::sync::Arc;

use rand::Rng;
use tnt_core::linalg::{SingularSpectrum, TruncationPolicy};
use tnt_core::{BlockTensor, ChargedIndex, DenseTensor, Direction, Graph, Network, NodeId, Qn, Tensor, C64};

use crate::basis::Basis;
use crate::env;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Mps {
    pub net: Network,
    pub sites: Vec<NodeId>,
    pub basis: Basis,
}

/// Number of ways to distribute charge `q` over `n` sites with local charges
/// `0..d`, saturating.
fn count_configs(n: usize, q: i64, d: usize) -> f64 {
    if q < 0 || q > (n * (d - 1)) as i64 {
        return 0.0;
    }
    let mut ways = vec![0.0f64; q as usize + 1];
    ways[0] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0; ways.len()];
        for (c, &w) in ways.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for k in 0..d {
                if c + k < next.len() {
                    next[c + k] += w;
                }
            }
        }
        ways = next;
    }
    ways[q as usize]
}

fn charged(direction: Direction, charges: &[i32]) -> Result<ChargedIndex> {
    Ok(ChargedIndex::from_charges(direction, charges)?)
}

impl Mps {
    fn assemble(g: &mut Graph, basis: Basis, tensors: Vec<Tensor>) -> Result<Mps> {
        if tensors.is_empty() {
            return Err(Error::InvalidArgument("a state needs at least one site".into()));
        }
        let d = basis.dim();
        let l = tensors.len();
        for (k, t) in tensors.iter().enumerate() {
            let dims = t.dims();
            if dims.len() != 3 || dims[1] != d {
                return Err(Error::InvalidArgument(format!("site {k} tensor has dims {dims:?}, expected [_, {d}, _]")));
            }
            if (k == 0 && dims[0] != 1) || (k + 1 == l && dims[2] != 1) {
                return Err(Error::InvalidArgument("boundary bonds must have dimension 1".into()));
            }
        }
        let net = g.network_create();
        let mut sites = Vec::with_capacity(l);
        for t in tensors {
            let node = g.create(t, "LDR")?;
            g.insert_at_end(&net, node, 'L', 'R')?;
            sites.push(node);
        }
        let mut psi = Mps { net, sites, basis };
        psi.net.schmidt = vec![None; l - 1];
        Ok(psi)
    }

    /// State built from given site tensors (axes `L`, `D`, `R`).
    pub fn from_tensors(g: &mut Graph, basis: Basis, tensors: Vec<Tensor>) -> Result<Mps> {
        Self::assemble(g, basis, tensors)
    }

    /// Parses a configuration string of basis-state digits, e.g. `"0101"`.
    pub fn parse_config(config: &str) -> Result<Vec<usize>> {
        config
            .chars()
            .map(|c| c.to_digit(10).map(|v| v as usize))
            .collect::<Option<Vec<_>>>()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::InvalidConfiguration(format!("{config:?} is not a string of digits")))
    }

    /// Product state `|config_0 config_1 ...>`.
    pub fn product_state(g: &mut Graph, basis: Basis, config: &[usize], symmetric: bool) -> Result<Mps> {
        if config.is_empty() {
            return Err(Error::InvalidConfiguration("empty configuration".into()));
        }
        let d = basis.dim();
        let mut tensors = Vec::with_capacity(config.len());
        let mut acc = 0i32;
        for &k in config {
            basis.check_state(k)?;
            let mut v = vec![C64::new(0.0, 0.0); d];
            v[k] = C64::new(1.0, 0.0);
            let dense = DenseTensor::new(v, vec![1, d, 1])?;
            let q = basis.charges()[k];
            tensors.push(if symmetric {
                let indices = vec![
                    charged(Direction::In, &[acc])?,
                    basis.index(Direction::In),
                    charged(Direction::Out, &[acc + q])?,
                ];
                acc += q;
                Tensor::Block(BlockTensor::from_dense(&dense, indices, Qn::zero(1))?.0)
            } else {
                Tensor::Dense(dense)
            });
        }
        Self::assemble(g, basis, tensors)
    }

    /// Normalized random state with bond dimensions up to `chi`. With a total
    /// charge every bond carries only the charges compatible with it, and
    /// sector sizes are shared out in proportion to their full sizes.
    pub fn random<R: Rng + ?Sized>(
        g: &mut Graph,
        basis: Basis,
        length: usize,
        chi: usize,
        charge: Option<i32>,
        rng: &mut R,
    ) -> Result<Mps> {
        if length == 0 || chi == 0 {
            return Err(Error::InvalidArgument("length and chi must be positive".into()));
        }
        let d = basis.dim();
        let mut tensors = Vec::with_capacity(length);
        match charge {
            None => {
                let bond = |k: usize| -> usize {
                    let left = (d as f64).powi(k as i32);
                    let right = (d as f64).powi((length - k) as i32);
                    left.min(right).min(chi as f64) as usize
                };
                for k in 0..length {
                    let t = DenseTensor::random(vec![bond(k), d, bond(k + 1)], rng)?;
                    let n = t.frobenius_norm();
                    tensors.push(Tensor::Dense(t.scale(C64::new(1.0 / n, 0.0))));
                }
            }
            Some(n) => {
                let max = length * (d - 1);
                if n < 0 || n as usize > max {
                    return Err(Error::InfeasibleSector(format!("charge {n} on {length} sites with {d} states each")));
                }
                let bonds: Vec<Vec<i32>> = (0..=length)
                    .map(|k| {
                        let lo = (n as i64 - ((length - k) * (d - 1)) as i64).max(0);
                        let hi = ((k * (d - 1)) as i64).min(n as i64);
                        let full: Vec<(i32, f64)> = (lo..=hi)
                            .map(|q| (q as i32, count_configs(k, q, d).min(count_configs(length - k, n as i64 - q, d))))
                            .collect();
                        let total: f64 = full.iter().map(|x| x.1).sum();
                        let mut labels = Vec::new();
                        for (q, f) in full {
                            let size = if total <= chi as f64 { f } else { (f * chi as f64 / total).floor().max(1.0) };
                            labels.extend(std::iter::repeat_n(q, size.min(chi as f64) as usize));
                        }
                        labels
                    })
                    .collect();
                for k in 0..length {
                    let indices = vec![
                        charged(Direction::In, &bonds[k])?,
                        basis.index(Direction::In),
                        charged(Direction::Out, &bonds[k + 1])?,
                    ];
                    let t = BlockTensor::random(indices, Qn::zero(1), rng)?;
                    let nrm = t.frobenius_norm();
                    tensors.push(Tensor::Block(t.scale(C64::new(1.0 / nrm, 0.0))));
                }
            }
        }
        let psi = Self::assemble(g, basis, tensors)?;
        psi.normalize(g)?;
        Ok(psi)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, g: &Graph, k: usize) -> Result<Arc<Tensor>> {
        Ok(g.operand(self.sites[k])?)
    }

    pub fn set_site(&self, g: &mut Graph, k: usize, t: Tensor) -> Result<()> {
        Ok(g.set_tensor(self.sites[k], t)?)
    }

    pub fn tensors(&self, g: &Graph) -> Result<Vec<Tensor>> {
        self.sites.iter().map(|&s| Ok(g.tensor(s)?)).collect()
    }

    pub fn is_symmetric(&self, g: &Graph) -> Result<bool> {
        Ok(g.is_blocked(self.sites[0])?)
    }

    /// Total charge carried by the last bond, for symmetric states.
    pub fn total_charge(&self, g: &Graph) -> Result<Option<i32>> {
        let last = self.site(g, self.len() - 1)?;
        Ok(last.charges().map(|c| c[2].labels()[0].charges()[0]))
    }

    /// Bond dimensions including the two boundary bonds.
    pub fn bond_dims(&self, g: &Graph) -> Result<Vec<usize>> {
        let mut out = vec![g.leg_dim(self.sites[0], 'L')?];
        for &s in &self.sites {
            out.push(g.leg_dim(s, 'R')?);
        }
        Ok(out)
    }

    pub fn schmidt(&self) -> &[Option<Vec<f64>>] {
        &self.net.schmidt
    }

    /// Independent copy in the same graph (payloads are shared until written).
    pub fn duplicate(&self, g: &mut Graph) -> Result<Mps> {
        let tensors = self.sites.iter().map(|&s| g.tensor(s)).collect::<tnt_core::Result<Vec<_>>>()?;
        let mut psi = Self::assemble(g, self.basis, tensors)?;
        psi.net.schmidt = self.net.schmidt.clone();
        Ok(psi)
    }

    /// Copy with dense site tensors.
    pub fn densified(&self, g: &mut Graph) -> Result<Mps> {
        let tensors =
            self.sites.iter().map(|&s| Ok(Tensor::Dense(g.tensor(s)?.to_dense().into_owned()))).collect::<Result<Vec<_>>>()?;
        let mut psi = Self::assemble(g, self.basis, tensors)?;
        psi.net.schmidt = self.net.schmidt.clone();
        Ok(psi)
    }

    /// Removes the state's nodes from the graph.
    pub fn free(self, g: &mut Graph) -> Result<()> {
        Ok(g.network_free(self.net)?)
    }

    /// All `d^L` amplitudes, site 0 most significant. Only for short chains.
    pub fn amplitudes(&self, g: &Graph) -> Result<Vec<C64>> {
        let mut acc: Option<DenseTensor> = None;
        for k in 0..self.len() {
            let a = self.site(g, k)?.to_dense().into_owned();
            acc = Some(match acc {
                None => a,
                Some(x) => {
                    let r = x.rank();
                    match Tensor::contract(&Tensor::Dense(x), &[r - 1], &Tensor::Dense(a), &[0], None)? {
                        Tensor::Dense(t) => t,
                        Tensor::Block(_) => unreachable!(),
                    }
                }
            });
        }
        Ok(acc.expect("nonempty state").into_values())
    }

    /// `<psi|psi>`.
    pub fn norm_sqr(&self, g: &Graph) -> Result<f64> {
        let cfg = g.config_arc();
        let cache = cfg.cache();
        let first = self.site(g, 0)?;
        let mut e = env::overlap_left_boundary(&first)?;
        for k in 0..self.len() {
            e = env::overlap_extend_left(&e, &*self.site(g, k)?, None, cache)?;
        }
        Ok(env::scalar(&e).re)
    }

    /// Rescales the first site so that the norm is one; returns the old norm.
    pub fn normalize(&self, g: &mut Graph) -> Result<f64> {
        let n = self.norm_sqr(g)?.sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument(format!("cannot normalize a state of norm {n}")));
        }
        g.scale(self.sites[0], C64::new(1.0 / n, 0.0))?;
        Ok(n)
    }

    /// Moves the gauge centre from site `k` to `k + 1` by an SVD of site `k`.
    pub fn move_center_right(&mut self, g: &mut Graph, k: usize, policy: &TruncationPolicy) -> Result<SingularSpectrum> {
        let cfg = g.config_arc();
        let cache = cfg.cache();
        let settings = g.config().svd_settings();
        let a = self.site(g, k)?;
        let parts = a.svd(&[0, 1], &[2], policy, &settings, cache)?;
        let sv = Tensor::contract(&parts.s, &[1], &parts.vdag, &[0], cache)?;
        let next = Tensor::contract(&sv, &[1], &*self.site(g, k + 1)?, &[0], cache)?;
        self.set_site(g, k, parts.u)?;
        self.set_site(g, k + 1, next)?;
        self.record_schmidt(k, &parts.bond_values);
        Ok(parts.spectrum)
    }

    /// Moves the gauge centre from site `k` to `k - 1`.
    pub fn move_center_left(&mut self, g: &mut Graph, k: usize, policy: &TruncationPolicy) -> Result<SingularSpectrum> {
        let cfg = g.config_arc();
        let cache = cfg.cache();
        let settings = g.config().svd_settings();
        let a = self.site(g, k)?;
        let parts = a.svd(&[0], &[1, 2], policy, &settings, cache)?;
        let us = Tensor::contract(&parts.u, &[1], &parts.s, &[0], cache)?;
        let prev = Tensor::contract(&*self.site(g, k - 1)?, &[2], &us, &[0], cache)?;
        self.set_site(g, k, parts.vdag)?;
        self.set_site(g, k - 1, prev)?;
        self.record_schmidt(k - 1, &parts.bond_values);
        Ok(parts.spectrum)
    }

    pub(crate) fn record_schmidt(&mut self, bond: usize, values: &[f64]) {
        let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut s: Vec<f64> = values.iter().map(|v| if n > 0.0 { v / n } else { *v }).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        if self.net.schmidt.len() + 1 < self.len() {
            self.net.schmidt.resize(self.len() - 1, None);
        }
        self.net.schmidt[bond] = Some(s);
    }

    /// Right-canonical form with the centre on site 0 (no truncation).
    pub fn right_canonicalize(&mut self, g: &mut Graph) -> Result<()> {
        let policy = TruncationPolicy::exact();
        for k in (1..self.len()).rev() {
            self.move_center_left(g, k, &policy)?;
        }
        Ok(())
    }

    /// Left-canonical form with the centre on the last site (no truncation).
    pub fn left_canonicalize(&mut self, g: &mut Graph) -> Result<()> {
        let policy = TruncationPolicy::exact();
        for k in 0..self.len().saturating_sub(1) {
            self.move_center_right(g, k, &policy)?;
        }
        Ok(())
    }

    /// Right sweep then left sweep; afterwards every bond holds the Schmidt
    /// coefficients of its bipartition (normalized) and the centre is on the
    /// last site. The norm is unchanged.
    pub fn canonicalize(&mut self, g: &mut Graph) -> Result<()> {
        self.right_canonicalize(g)?;
        self.left_canonicalize(g)
    }
}
