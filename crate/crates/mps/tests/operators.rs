mod common;

use std::sync::Arc;

use common::{c, Chain};
use ndarray::Array2;
use tnt_core::{Graph, SystemConfig, C64};
use tnt_mps::mpo::default_trap_centre;
use tnt_mps::{Basis, Error, Hamiltonian, Mpo};

fn graph() -> Graph {
    Graph::new(Arc::new(SystemConfig::default()))
}

fn max_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn hopping_two_sites() {
    let mut g = graph();
    let h = Hamiltonian::bose_hubbard(2, 1, -1.0, 0.0, 0.0, None).unwrap();
    let m = Mpo::build(&mut g, &h, false).unwrap().to_matrix(&g).unwrap();
    // basis |00>, |01>, |10>, |11>; -(b1† b2 + b1 b2†) swaps |01> and |10>
    let mut want = Array2::zeros((4, 4));
    want[[1, 2]] = c(-1.0);
    want[[2, 1]] = c(-1.0);
    assert!(max_diff(&m, &want) < 1e-14);
}

#[test]
fn bose_hubbard_matches_dense_assembly() {
    for symmetric in [false, true] {
        let mut g = graph();
        let h = Hamiltonian::bose_hubbard(4, 2, -1.0, 5.0, 0.01, None).unwrap();
        let m = Mpo::build(&mut g, &h, symmetric).unwrap().to_matrix(&g).unwrap();
        let want = Chain::bose_hubbard(4, 3, -1.0, 5.0, 0.01, 2.0).dense();
        assert!(max_diff(&m, &want) < 1e-13, "symmetric = {symmetric}");
        assert!(max_diff(&m, &m.t().mapv(|v| v.conj())) < 1e-13);
    }
}

#[test]
fn spin_one_heisenberg_matches_dense_assembly() {
    let mut g = graph();
    let h = Hamiltonian::heisenberg(3, 2, 1.0).unwrap();
    let m = Mpo::build(&mut g, &h, true).unwrap().to_matrix(&g).unwrap();
    assert_eq!(m.dim(), (27, 27));
    assert!(max_diff(&m, &Chain::xxz(3, 2, 1.0, 1.0, 0.0).dense()) < 1e-13);
}

#[test]
fn xxz_with_field_matches_dense_assembly() {
    let mut g = graph();
    let h = Hamiltonian::xxz(4, 1, 0.7, 1.3, 0.4).unwrap();
    let m = Mpo::build(&mut g, &h, false).unwrap().to_matrix(&g).unwrap();
    assert!(max_diff(&m, &Chain::xxz(4, 1, 0.7, 1.3, 0.4).dense()) < 1e-13);
}

#[test]
fn single_site_and_bond_dimension() {
    let mut g = graph();
    let h = Hamiltonian::bose_hubbard(1, 2, -1.0, 2.0, 0.0, None).unwrap();
    let mpo = Mpo::build(&mut g, &h, true).unwrap();
    let m = mpo.to_matrix(&g).unwrap();
    assert!(max_diff(&m, &Chain::bose_hubbard(1, 3, -1.0, 2.0, 0.0, 1.0).dense()) < 1e-14);
    let h = Hamiltonian::bose_hubbard(5, 2, -1.0, 2.0, 0.0, None).unwrap();
    assert_eq!(Mpo::build(&mut g, &h, false).unwrap().bond_dim, 4);
    let h = Hamiltonian::heisenberg(5, 1, 1.0).unwrap();
    assert_eq!(Mpo::build(&mut g, &h, false).unwrap().bond_dim, 5);
}

#[test]
fn trap_centre_default() {
    assert_eq!(default_trap_centre(4), 2.0);
    assert_eq!(default_trap_centre(5), 3.0);
    assert_eq!(default_trap_centre(100), 50.0);
}

#[test]
fn symmetry_breaking_terms_are_rejected() {
    let mut g = graph();
    let basis = Basis::boson(2).unwrap();
    let mut h = Hamiltonian::new(basis, 3).unwrap();
    h.add_uniform_coupling(basis.raise(), basis.raise(), c(1.0)).unwrap();
    assert!(matches!(Mpo::build(&mut g, &h, true), Err(Error::UnsupportedTerm(_))));
    assert!(Mpo::build(&mut g, &h, false).is_ok());
    let mut h = Hamiltonian::new(basis, 3).unwrap();
    h.add_onsite(1, &(basis.raise() + basis.lower())).unwrap();
    assert!(matches!(Mpo::build(&mut g, &h, true), Err(Error::UnsupportedTerm(_))));
}
