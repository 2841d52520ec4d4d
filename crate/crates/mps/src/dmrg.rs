//! Single-site DMRG with alternating sweeps.

use tnt_core::linalg::{min_site_eigen, TruncationPolicy};
use tnt_core::{Graph, Tensor, C64};

use crate::env::{apply_heff, expansion_left, expansion_right, extend_left, extend_right, left_boundary, right_boundary};
use crate::mpo::Mpo;
use crate::state::Mps;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmrgSettings {
    pub chi: usize,
    /// Stop once the energy changes by less than this over a sweep.
    pub precision: f64,
    pub max_sweeps: usize,
    /// Weight of the subspace-expansion term; zero switches it off.
    pub expansion: f64,
}

impl Default for DmrgSettings {
    fn default() -> Self {
        DmrgSettings { chi: 64, precision: 1e-4, max_sweeps: 50, expansion: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmrgReport {
    /// `<psi0|H|psi0>` of the normalized initial state.
    pub initial_energy: f64,
    /// Energy at the end of each sweep.
    pub energies: Vec<f64>,
    /// `E_{s-1} - E_s` for each sweep (the first uses the initial energy).
    pub delta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

struct Sweeper<'a> {
    g: &'a mut Graph,
    psi: &'a mut Mps,
    w: Vec<Tensor>,
    /// `left[k]`: sites `0..k`; `right[k]`: sites `k..L`.
    left: Vec<Option<Tensor>>,
    right: Vec<Option<Tensor>>,
    policy: TruncationPolicy,
    expansion: f64,
}

impl Sweeper<'_> {
    fn site(&self, k: usize) -> Result<Tensor> {
        Ok((*self.psi.site(self.g, k)?).clone())
    }

    fn optimize(&mut self, k: usize, sweep: usize) -> Result<f64> {
        let cfg = self.g.config_arc();
        let cache = cfg.cache();
        let settings = self.g.config().eigen_settings();
        let a = self.site(k)?;
        let left = self.left[k].as_ref().expect("left environment");
        let right = self.right[k + 1].as_ref().expect("right environment");
        let w = &self.w[k];
        let initial = a.flat_values();
        let apply = |v: &[C64]| -> tnt_core::Result<Vec<C64>> {
            let x = a.with_flat_values(v)?;
            apply_heff(left, w, right, &x, cache).map_err(|e| match e {
                Error::Core(c) => c,
                other => tnt_core::TntError::InvalidArgument(other.to_string()),
            })?
            .flat_values_like(&a, cache)
        };
        let r = min_site_eigen(&initial, apply, &settings).map_err(|source| Error::Eigen { site: k, sweep, source })?;
        let new = a.with_flat_values(&r.vector)?;
        self.psi.set_site(self.g, k, new)?;
        Ok(r.value)
    }

    fn step_right(&mut self, k: usize) -> Result<()> {
        let cfg = self.g.config_arc();
        let cache = cfg.cache();
        if self.expansion > 0.0 {
            let a = self.site(k)?;
            let p = expansion_right(self.left[k].as_ref().unwrap(), &self.w[k], &a, cache)?;
            let p = p.scale(C64::new(self.expansion, 0.0));
            let next = self.site(k + 1)?;
            let zeros = zero_like(&next, 0, &p, 2)?;
            self.psi.set_site(self.g, k, Tensor::direct_sum(&a, &p, &[2])?)?;
            self.psi.set_site(self.g, k + 1, Tensor::direct_sum(&next, &zeros, &[0])?)?;
        }
        self.psi.move_center_right(self.g, k, &self.policy)?;
        let a = self.site(k)?;
        self.left[k + 1] = Some(extend_left(self.left[k].as_ref().unwrap(), &a, &self.w[k], cache)?);
        Ok(())
    }

    fn step_left(&mut self, k: usize) -> Result<()> {
        let cfg = self.g.config_arc();
        let cache = cfg.cache();
        if self.expansion > 0.0 {
            let a = self.site(k)?;
            let p = expansion_left(self.right[k + 1].as_ref().unwrap(), &self.w[k], &a, cache)?;
            let p = p.scale(C64::new(self.expansion, 0.0));
            let prev = self.site(k - 1)?;
            let zeros = zero_like(&prev, 2, &p, 0)?;
            self.psi.set_site(self.g, k, Tensor::direct_sum(&a, &p, &[0])?)?;
            self.psi.set_site(self.g, k - 1, Tensor::direct_sum(&prev, &zeros, &[2])?)?;
        }
        self.psi.move_center_left(self.g, k, &self.policy)?;
        let a = self.site(k)?;
        self.right[k] = Some(extend_right(self.right[k + 1].as_ref().unwrap(), &a, &self.w[k], cache)?);
        Ok(())
    }
}

/// Zero tensor shaped like `t` except that axis `axis` takes the charges
/// (reversed in direction) of axis `from` of `src`.
fn zero_like(t: &Tensor, axis: usize, src: &Tensor, from: usize) -> Result<Tensor> {
    let mut dims = t.dims();
    dims[axis] = src.dims()[from];
    Ok(match (t, src) {
        (Tensor::Block(b), Tensor::Block(s)) => {
            let mut idx = b.indices().to_vec();
            idx[axis] = s.indices()[from].flipped();
            Tensor::Block(tnt_core::BlockTensor::zeros(idx, b.flux())?)
        }
        _ => Tensor::Dense(tnt_core::DenseTensor::zeros(dims)?),
    })
}

/// Minimizes `<psi|H|psi>` in place. The state is brought to right-canonical
/// form first and is normalized on return.
pub fn dmrg(g: &mut Graph, h: &Mpo, psi: &mut Mps, settings: &DmrgSettings) -> Result<DmrgReport> {
    dmrg_with_progress(g, h, psi, settings, |_, _, _| {})
}

/// As [`dmrg`], calling `progress(sweep, energy, delta)` after every sweep.
pub fn dmrg_with_progress(
    g: &mut Graph,
    h: &Mpo,
    psi: &mut Mps,
    settings: &DmrgSettings,
    mut progress: impl FnMut(usize, f64, f64),
) -> Result<DmrgReport> {
    let l = psi.len();
    if h.len() != l {
        return Err(Error::InvalidArgument(format!("state has {l} sites, Hamiltonian {}", h.len())));
    }
    if settings.chi == 0 || settings.max_sweeps == 0 {
        return Err(Error::InvalidArgument("chi and the sweep cap must be positive".into()));
    }
    psi.right_canonicalize(g)?;
    psi.normalize(g)?;
    let cfg = g.config_arc();
    let cache = cfg.cache();
    let w: Vec<Tensor> = (0..l).map(|k| Ok((*h.tensor(g, k)?).clone())).collect::<Result<_>>()?;
    let mut left = vec![None; l + 1];
    let mut right = vec![None; l + 1];
    left[0] = Some(left_boundary(&*psi.site(g, 0)?, &w[0])?);
    let mut r = right_boundary(&*psi.site(g, l - 1)?, &w[l - 1])?;
    right[l] = Some(r.clone());
    for k in (0..l).rev() {
        r = extend_right(&r, &*psi.site(g, k)?, &w[k], cache)?;
        right[k] = Some(r.clone());
    }
    let initial_energy = {
        let e = tnt_core::Tensor::contract(left[0].as_ref().unwrap(), &[0, 1, 2], right[0].as_ref().unwrap(), &[0, 1, 2], cache)?;
        crate::env::scalar(&e).re
    };
    let policy = g.config().truncation_policy(Some(settings.chi));
    let mut sw = Sweeper { g, psi, w, left, right, policy, expansion: settings.expansion };
    let mut report = DmrgReport { initial_energy, energies: Vec::new(), delta: Vec::new(), sweeps: 0, converged: false };
    let mut previous = initial_energy;
    for sweep in 0..settings.max_sweeps {
        let mut energy = previous;
        for k in 0..l {
            energy = sw.optimize(k, sweep)?;
            if k + 1 < l {
                sw.step_right(k)?;
            }
        }
        for k in (0..l.saturating_sub(1)).rev().map(|k| k + 1) {
            if k + 1 < l {
                energy = sw.optimize(k, sweep)?;
            }
            sw.step_left(k)?;
        }
        if l > 1 {
            energy = sw.optimize(0, sweep)?;
        }
        let delta = previous - energy;
        log::info!("sweep {}: energy {energy:.12}, change {delta:.3e}", sweep + 1);
        progress(sweep, energy, delta);
        report.energies.push(energy);
        report.delta.push(delta);
        report.sweeps = sweep + 1;
        previous = energy;
        if delta.abs() < settings.precision {
            report.converged = true;
            break;
        }
    }
    sw.psi.normalize(sw.g)?;
    Ok(report)
}
