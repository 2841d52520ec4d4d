//! Real-time evolution by second-order Trotter splitting of nearest-neighbour
//! gates, with truncation-error and norm bookkeeping.

use ndarray::Array2;
use tnt_core::linalg::TruncationPolicy;
use tnt_core::{Direction, FunctionalDef, FunctionalForm, Graph, NodeId, Tensor, C64};

use crate::mpo::Hamiltonian;
use crate::observables::{evaluate_all, ObservableSpec, ObservableValue};
use crate::state::Mps;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TebdSettings {
    pub dt: f64,
    pub steps: usize,
    pub chi: usize,
    /// Observables are recorded every this many steps.
    pub save_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    /// Sum of the truncation errors of every SVD so far.
    pub trunc_err: f64,
    /// `1 - <psi|psi>`.
    pub norm_dev: f64,
    pub values: Vec<ObservableValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveReport {
    pub snapshots: Vec<Snapshot>,
    pub trunc_err: f64,
    /// Index of the last step performed.
    pub final_step: usize,
}

/// Where a run starts: global step index and the error accumulated before it.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Start {
    pub step: usize,
    pub trunc_err: f64,
}

/// Two-site gate nodes `exp(-i tau H_j)` for every bond, built as
/// exponential functional nodes with legs `D E U V` (`U`, `V` join the
/// incoming physical legs).
pub struct Gates {
    nodes: Vec<NodeId>,
}

impl Gates {
    /// `tau[j]` is the time step of bond `j`.
    pub fn new(g: &mut Graph, h: &Hamiltonian, tau: &[f64], symmetric: bool) -> Result<Gates> {
        let d = h.basis.dim();
        let mut nodes = Vec::new();
        for (j, &t) in tau.iter().enumerate() {
            let mut terms = h.bond_terms(j)?;
            if terms.is_empty() {
                terms.push((C64::new(0.0, 0.0), Array2::zeros((d * d, d * d))));
            }
            let ops: Vec<Array2<C64>> = terms.iter().map(|x| x.1.clone()).collect();
            let mut def = FunctionalDef::new(ops, FunctionalForm::Exponential, &[d, d, d, d])?;
            if symmetric {
                let b = &h.basis;
                def = def.with_indices(vec![
                    b.index(Direction::In),
                    b.index(Direction::In),
                    b.index(Direction::Out),
                    b.index(Direction::Out),
                ])?;
            }
            let node = g.func_create(def, "DEUV")?;
            for (i, (c, _)) in terms.iter().enumerate() {
                g.set_param(node, C64::new(0.0, -t) * c, i)?;
            }
            nodes.push(node);
        }
        Ok(Gates { nodes })
    }

    pub fn node(&self, bond: usize) -> NodeId {
        self.nodes[bond]
    }

    pub fn free(self, g: &mut Graph) -> Result<()> {
        for n in self.nodes {
            g.free(n)?;
        }
        Ok(())
    }
}

/// Applies a gate on bond `j` and re-splits the pair, leaving the gauge
/// centre on `j + 1` (moving right) or `j` (moving left). Returns the
/// truncation error of the split.
pub fn apply_gate(
    g: &mut Graph,
    psi: &mut Mps,
    gate: &Tensor,
    j: usize,
    right: bool,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let cfg = g.config_arc();
    let cache = cfg.cache();
    let settings = cfg.svd_settings();
    let theta = Tensor::contract(&*psi.site(g, j)?, &[2], &*psi.site(g, j + 1)?, &[0], cache)?;
    let theta = Tensor::contract(gate, &[2, 3], &theta, &[1, 2], cache)?.permute(&[2, 0, 1, 3], cache)?;
    let parts = theta.svd(&[0, 1], &[2, 3], policy, &settings, cache)?;
    let (a, b) = if right {
        (parts.u, Tensor::contract(&parts.s, &[1], &parts.vdag, &[0], cache)?)
    } else {
        (Tensor::contract(&parts.u, &[2], &parts.s, &[0], cache)?, parts.vdag)
    };
    psi.set_site(g, j, a)?;
    psi.set_site(g, j + 1, b)?;
    psi.record_schmidt(j, &parts.bond_values);
    Ok(parts.spectrum.truncation_error())
}

/// One pass over the chain applying the gates of the bonds in `layer` and
/// moving the centre across the others. Returns the summed truncation error.
fn sweep(
    g: &mut Graph,
    psi: &mut Mps,
    gates: &Gates,
    layer: usize,
    right: bool,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let l = psi.len();
    let mut err = 0.0;
    let bonds: Vec<usize> = if right { (0..l - 1).collect() } else { (0..l - 1).rev().collect() };
    for j in bonds {
        if j % 2 == layer {
            let gate = g.operand(gates.node(j))?;
            err += apply_gate(g, psi, &gate, j, right, policy)?;
        } else if right {
            err += psi.move_center_right(g, j, policy)?.truncation_error();
        } else {
            err += psi.move_center_left(g, j + 1, policy)?.truncation_error();
        }
    }
    Ok(err)
}

fn center_norm_dev(g: &Graph, psi: &Mps, center: usize) -> Result<f64> {
    let n = psi.site(g, center)?.frobenius_norm();
    Ok(1.0 - n * n)
}

pub fn tebd_evolve(
    g: &mut Graph,
    h: &Hamiltonian,
    psi: &mut Mps,
    settings: &TebdSettings,
    observables: &[ObservableSpec],
) -> Result<EvolveReport> {
    tebd_evolve_from(g, h, psi, settings, observables, Start::default(), |_| {})
}

/// Evolves `psi` in place for `settings.steps` steps starting at global step
/// `start.step`. Snapshots are taken at the start and at every global step
/// divisible by `save_every`; `progress` sees each one.
///
/// Step `s` runs its three layers left-right-left for even `s` and
/// right-left-right for odd `s`, so the gauge centre is on site 0 before an
/// even step and on the last site before an odd one.
pub fn tebd_evolve_from(
    g: &mut Graph,
    h: &Hamiltonian,
    psi: &mut Mps,
    settings: &TebdSettings,
    observables: &[ObservableSpec],
    start: Start,
    mut progress: impl FnMut(&Snapshot),
) -> Result<EvolveReport> {
    if !(settings.dt > 0.0) || !settings.dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {}", settings.dt)));
    }
    if settings.save_every == 0 || settings.chi == 0 {
        return Err(Error::InvalidArgument("chi and the save interval must be positive".into()));
    }
    let l = psi.len();
    if h.length != l || h.basis.dim() != psi.basis.dim() {
        return Err(Error::InvalidArgument("state does not match the Hamiltonian".into()));
    }
    for o in observables {
        o.check(&psi.basis)?;
    }
    let symmetric = psi.is_symmetric(g)?;
    let policy = g.config().truncation_policy(Some(settings.chi));
    let tau: Vec<f64> = (0..l.saturating_sub(1)).map(|j| if j % 2 == 0 { settings.dt / 2.0 } else { settings.dt }).collect();
    let gates = Gates::new(g, h, &tau, symmetric)?;

    let mut err = start.trunc_err;
    let mut report = EvolveReport { snapshots: Vec::new(), trunc_err: err, final_step: start.step };
    // the centre is unknown for the incoming state
    let mut snap = |g: &Graph, psi: &Mps, step: usize, err: f64, center: Option<usize>| -> Result<Snapshot> {
        let norm_dev = match center {
            Some(k) => center_norm_dev(g, psi, k)?,
            None => 1.0 - psi.norm_sqr(g)?,
        };
        let s = Snapshot {
            step,
            time: step as f64 * settings.dt,
            trunc_err: err,
            norm_dev,
            values: evaluate_all(g, psi, observables)?,
        };
        log::info!("step {step}: t = {:.4}, eps = {:.3e}, norm deviation = {:.3e}", s.time, s.trunc_err, s.norm_dev);
        progress(&s);
        Ok(s)
    };
    report.snapshots.push(snap(g, psi, start.step, err, None)?);
    let mut center = if start.step % 2 == 0 {
        psi.right_canonicalize(g)?;
        0
    } else {
        psi.left_canonicalize(g)?;
        l - 1
    };
    for step in start.step..start.step + settings.steps {
        if l > 1 {
            let first = step % 2 == 0;
            err += sweep(g, psi, &gates, 0, first, &policy)?;
            err += sweep(g, psi, &gates, 1, !first, &policy)?;
            err += sweep(g, psi, &gates, 0, first, &policy)?;
            center = if first { l - 1 } else { 0 };
        } else {
            // a single site only evolves under its on-site term
            let phase = h.onsite[0].mapv(|v| v * C64::new(0.0, -settings.dt));
            let u = tnt_core::linalg::matrix_exponential(&phase)?;
            let cfg = g.config_arc();
            let a = crate::env::apply_local(&Tensor::Dense(tnt_core::DenseTensor::from_matrix(u)), &*psi.site(g, 0)?, cfg.cache())?;
            psi.set_site(g, 0, a)?;
        }
        let done = step + 1;
        if done % settings.save_every == 0 {
            report.snapshots.push(snap(g, psi, done, err, Some(center))?);
        }
        report.final_step = done;
    }
    report.trunc_err = err;
    gates.free(g)?;
    Ok(report)
}
