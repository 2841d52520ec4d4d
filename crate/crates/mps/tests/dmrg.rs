mod common;

use std::sync::Arc;

use common::{ground_energy, Chain};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnt_core::{Graph, SystemConfig, Tensor};
use tnt_mps::env::{apply_heff, extend_right, left_boundary, right_boundary};
use tnt_mps::{dmrg, Basis, DmrgSettings, Hamiltonian, Mpo, Mps};

fn graph() -> Graph {
    Graph::new(Arc::new(SystemConfig::default()))
}

#[test]
fn two_site_hopping_ground_energy() {
    let mut g = graph();
    let h = Hamiltonian::bose_hubbard(2, 1, -1.0, 0.0, 0.0, None).unwrap();
    let mpo = Mpo::build(&mut g, &h, true).unwrap();
    let mut psi = Mps::random(&mut g, Basis::hard_core(), 2, 4, Some(1), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let r = dmrg(&mut g, &mpo, &mut psi, &DmrgSettings { chi: 4, ..Default::default() }).unwrap();
    assert!((r.energies.last().unwrap() + 1.0).abs() < 1e-10);
    assert!(r.converged);
}

#[test]
fn heisenberg_chain_matches_exact_diagonalization() {
    let l = 10;
    let exact = ground_energy(&Chain::xxz(l, 1, 1.0, 1.0, 0.0).sector(l / 2).h);
    for symmetric in [true, false] {
        let mut g = graph();
        let h = Hamiltonian::heisenberg(l, 1, 1.0).unwrap();
        let mpo = Mpo::build(&mut g, &h, symmetric).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let charge = symmetric.then_some((l / 2) as i32);
        let mut psi = Mps::random(&mut g, h.basis, l, 32, charge, &mut rng).unwrap();
        let settings = DmrgSettings { chi: 32, precision: 1e-12, ..Default::default() };
        let r = dmrg(&mut g, &mpo, &mut psi, &settings).unwrap();
        let e = *r.energies.last().unwrap();
        assert!((e - exact).abs() < 1e-8, "{e} vs {exact}");
        for w in r.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "energies increased: {:?}", r.energies);
        }
        let measured = tnt_mps::expect::mpo_expectation(&g, &psi, &mpo).unwrap().re;
        assert!((measured - e).abs() < 1e-8);
    }
}

#[test]
fn converged_site_is_an_eigenvector() {
    let mut g = graph();
    let l = 6;
    let h = Hamiltonian::bose_hubbard(l, 2, -1.0, 4.0, 0.0, None).unwrap();
    let mpo = Mpo::build(&mut g, &h, true).unwrap();
    let mut psi = Mps::random(&mut g, h.basis, l, 20, Some(6), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let r = dmrg(&mut g, &mpo, &mut psi, &DmrgSettings { chi: 20, precision: 1e-10, ..Default::default() }).unwrap();
    let e = *r.energies.last().unwrap();
    // the state ends with its centre on site 0
    let w: Vec<Tensor> = (0..l).map(|k| (*mpo.tensor(&g, k).unwrap()).clone()).collect();
    let a: Vec<Tensor> = (0..l).map(|k| (*psi.site(&g, k).unwrap()).clone()).collect();
    let left = left_boundary(&a[0], &w[0]).unwrap();
    let mut right = right_boundary(&a[l - 1], &w[l - 1]).unwrap();
    for k in (1..l).rev() {
        right = extend_right(&right, &a[k], &w[k], None).unwrap();
    }
    let ha = apply_heff(&left, &w[0], &right, &a[0], None).unwrap();
    let diff = ha.add(&a[0].scale(tnt_core::C64::new(-e, 0.0)), None).unwrap();
    assert!(diff.frobenius_norm() < 1e-6, "residual {}", diff.frobenius_norm());
}

#[test]
fn symmetric_and_dense_runs_agree() {
    // the ground state lies in the zero-magnetization sector, so the dense
    // run stays there as well
    let l = 8;
    let h = Hamiltonian::xxz(l, 1, 1.0, 0.7, 0.0).unwrap();
    let mut g = graph();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut blocked = Mps::random(&mut g, h.basis, l, 16, Some(l as i32 / 2), &mut rng).unwrap();
    let mut dense = blocked.densified(&mut g).unwrap();
    let settings = DmrgSettings { chi: 16, precision: 1e-9, ..Default::default() };
    let mpo_b = Mpo::build(&mut g, &h, true).unwrap();
    let mpo_d = Mpo::build(&mut g, &h, false).unwrap();
    let rb = dmrg(&mut g, &mpo_b, &mut blocked, &settings).unwrap();
    let rd = dmrg(&mut g, &mpo_d, &mut dense, &settings).unwrap();
    assert_eq!(rb.sweeps, rd.sweeps);
    assert!((rb.initial_energy - rd.initial_energy).abs() < 1e-10);
    for (x, y) in rb.energies.iter().zip(&rd.energies) {
        assert!((x - y).abs() < 1e-10, "{:?} vs {:?}", rb.energies, rd.energies);
    }
}

#[test]
fn subspace_expansion_reaches_ground_state() {
    let l = 8;
    let exact = ground_energy(&Chain::bose_hubbard(l, 3, -1.0, 2.0, 0.0, 4.0).sector(l).h);
    let mut g = graph();
    let h = Hamiltonian::bose_hubbard(l, 2, -1.0, 2.0, 0.0, None).unwrap();
    let mpo = Mpo::build(&mut g, &h, true).unwrap();
    // bond dimension 1: only expansion can grow it
    let cfg = vec![1; l];
    let mut psi = Mps::product_state(&mut g, h.basis, &cfg, true).unwrap();
    let settings = DmrgSettings { chi: 40, precision: 1e-9, max_sweeps: 30, expansion: 1e-3 };
    let r = dmrg(&mut g, &mpo, &mut psi, &settings).unwrap();
    let e = *r.energies.last().unwrap();
    assert!((e - exact).abs() < 1e-6, "{e} vs {exact}");
    assert!(psi.bond_dims(&g).unwrap().iter().any(|&d| d > 1));
}

#[test]
fn eigensolver_failure_reports_site_and_sweep() {
    let mut config = SystemConfig::default();
    config.set_max_eig_iter(1).unwrap();
    config.eig_tol = 1e-14;
    let mut g = Graph::new(Arc::new(config));
    let h = Hamiltonian::heisenberg(6, 1, 1.0).unwrap();
    let mpo = Mpo::build(&mut g, &h, true).unwrap();
    let mut psi = Mps::random(&mut g, h.basis, 6, 8, Some(3), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    match dmrg(&mut g, &mpo, &mut psi, &DmrgSettings::default()) {
        Err(tnt_mps::Error::Eigen { site, sweep, .. }) => assert_eq!((site, sweep), (0, 0)),
        other => panic!("expected an eigensolver failure, got {other:?}"),
    }
}

#[test]
fn rejects_mismatched_lengths() {
    let mut g = graph();
    let h = Hamiltonian::heisenberg(4, 1, 1.0).unwrap();
    let mpo = Mpo::build(&mut g, &h, false).unwrap();
    let mut psi = Mps::random(&mut g, h.basis, 5, 4, None, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert!(matches!(dmrg(&mut g, &mpo, &mut psi, &DmrgSettings::default()), Err(tnt_mps::Error::InvalidArgument(_))));
}
