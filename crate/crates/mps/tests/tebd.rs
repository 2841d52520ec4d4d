mod common;

use std::sync::Arc;

use common::{c, eigh, Chain};
use ndarray::{Array1, Array2};
use tnt_core::{Graph, SystemConfig, C64};
use tnt_mps::tebd::{tebd_evolve_from, Start};
use tnt_mps::{tebd_evolve, Basis, Hamiltonian, Mps, ObservableSpec, ObservableValue, TebdSettings};

fn graph() -> Graph {
    Graph::new(Arc::new(SystemConfig::default()))
}

/// Only the bond-dimension cap truncates.
fn untruncated_graph() -> Graph {
    let mut config = SystemConfig::default();
    config.set_rel_trunc_tol(-1.0);
    config.set_trunc_err_tol(-1.0);
    Graph::new(Arc::new(config))
}

/// `exp(-i H t) psi` through the eigendecomposition of `H`.
fn exact_evolve(h: &Array2<C64>, psi: &Array1<C64>, t: f64) -> Array1<C64> {
    let (e, v) = eigh(h);
    let vh = v.t().mapv(|x| x.conj());
    let coeffs = vh.dot(psi);
    let phased = Array1::from_iter(coeffs.iter().zip(&e).map(|(a, &w)| a * C64::new(0.0, -w * t).exp()));
    v.dot(&phased)
}

fn product_vector(cfg: &[usize], d: usize) -> Array1<C64> {
    let mut v = Array1::zeros(d.pow(cfg.len() as u32));
    v[common::flat_index(cfg, d)] = c(1.0);
    v
}

fn distance(a: &[C64], b: &Array1<C64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn site_values(v: &ObservableValue) -> &[C64] {
    match v {
        ObservableValue::Site(x) => x,
        other => panic!("expected site values, got {other:?}"),
    }
}

#[test]
fn two_site_hopping_oscillates_exactly() {
    let mut g = graph();
    let h = Hamiltonian::bose_hubbard(2, 1, -1.0, 0.0, 0.0, None).unwrap();
    let mut psi = Mps::product_state(&mut g, Basis::hard_core(), &[1, 0], true).unwrap();
    let settings = TebdSettings { dt: 0.05, steps: 40, chi: 4, save_every: 1 };
    let obs = [ObservableSpec::parse("Ex1N").unwrap()];
    let r = tebd_evolve(&mut g, &h, &mut psi, &settings, &obs).unwrap();
    assert_eq!(r.snapshots.len(), 41);
    for s in &r.snapshots {
        let n = site_values(&s.values[0]);
        assert!((n[0].re - s.time.cos().powi(2)).abs() < 1e-10, "t = {}: {}", s.time, n[0].re);
        assert!((n[0].re + n[1].re - 1.0).abs() < 1e-10);
    }
}

#[test]
fn matches_exact_evolution_and_error_scales_quadratically() {
    let l = 6;
    let chain = Chain::bose_hubbard(l, 3, -1.0, 2.5, 0.1, 3.0);
    let h = Hamiltonian::bose_hubbard(l, 2, -1.0, 2.5, 0.1, Some(3.0)).unwrap();
    let cfg = [1, 0, 2, 0, 1, 1];
    let t = 1.0;
    let exact = exact_evolve(&chain.dense(), &product_vector(&cfg, 3), t);
    let mut errors = Vec::new();
    for steps in [20, 40] {
        let mut g = untruncated_graph();
        let mut psi = Mps::product_state(&mut g, h.basis, &cfg, false).unwrap();
        let settings = TebdSettings { dt: t / steps as f64, steps, chi: 64, save_every: steps };
        let r = tebd_evolve(&mut g, &h, &mut psi, &settings, &[]).unwrap();
        assert_eq!(r.trunc_err, 0.0);
        errors.push(distance(&psi.amplitudes(&g).unwrap(), &exact));
    }
    assert!(errors[0] < 1e-2, "{errors:?}");
    let ratio = errors[0] / errors[1];
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}, errors {errors:?}");
}

#[test]
fn energy_drift_shrinks_with_time_step() {
    // Trotter splitting conserves a shifted energy; the drift of <H> scales as dt^2
    let l = 8;
    let h = Hamiltonian::xxz(l, 1, 1.0, 0.5, 0.2).unwrap();
    let chain = Chain::xxz(l, 1, 1.0, 0.5, 0.2);
    let hd = chain.dense();
    let cfg = [1, 0, 1, 0, 1, 0, 1, 0];
    let energy = |amps: &[C64]| {
        let v = Array1::from_vec(amps.to_vec());
        v.mapv(|x| x.conj()).dot(&hd.dot(&v)).re
    };
    let e0 = energy(product_vector(&cfg, 2).as_slice().unwrap());
    let mut drift = Vec::new();
    for (dt, steps) in [(0.1, 10), (0.05, 20)] {
        let mut g = untruncated_graph();
        let mut psi = Mps::product_state(&mut g, h.basis, &cfg, true).unwrap();
        tebd_evolve(&mut g, &h, &mut psi, &TebdSettings { dt, steps, chi: 64, save_every: steps }, &[]).unwrap();
        drift.push((energy(&psi.amplitudes(&g).unwrap()) - e0).abs());
    }
    let ratio = drift[0] / drift[1];
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}, drift {drift:?}");
}

#[test]
fn norm_is_conserved_without_truncation() {
    let mut g = untruncated_graph();
    let l = 6;
    let h = Hamiltonian::bose_hubbard(l, 2, -1.0, 2.0, 0.0, None).unwrap();
    let mut psi = Mps::product_state(&mut g, h.basis, &[1, 0, 1, 0, 1, 0], true).unwrap();
    let settings = TebdSettings { dt: 0.05, steps: 100, chi: 256, save_every: 5 };
    let r = tebd_evolve(&mut g, &h, &mut psi, &settings, &[]).unwrap();
    assert_eq!(r.snapshots.len(), 21);
    for s in &r.snapshots {
        assert_eq!(s.trunc_err, 0.0);
        assert!(s.norm_dev.abs() < 1e-10, "step {}: {}", s.step, s.norm_dev);
    }
    assert!((psi.norm_sqr(&g).unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn snapshots_follow_the_save_interval() {
    let mut g = graph();
    let h = Hamiltonian::heisenberg(4, 1, 1.0).unwrap();
    let mut psi = Mps::product_state(&mut g, h.basis, &[1, 0, 1, 0], true).unwrap();
    let settings = TebdSettings { dt: 0.01, steps: 400, chi: 8, save_every: 10 };
    let r = tebd_evolve(&mut g, &h, &mut psi, &settings, &[]).unwrap();
    assert_eq!(r.snapshots.len(), 41);
    let steps: Vec<usize> = r.snapshots.iter().map(|s| s.step).collect();
    assert_eq!(steps, (0..=400).step_by(10).collect::<Vec<_>>());
    assert_eq!(r.final_step, 400);
    assert!((r.snapshots[40].time - 4.0).abs() < 1e-12);
}

#[test]
fn symmetric_and_dense_runs_agree() {
    let l = 6;
    let h = Hamiltonian::bose_hubbard(l, 2, -1.0, 3.0, 0.05, None).unwrap();
    let cfg = [2, 0, 1, 1, 0, 2];
    let obs = [ObservableSpec::parse("Ex1N").unwrap(), ObservableSpec::parse("Ex2bdagb=ap").unwrap()];
    let settings = TebdSettings { dt: 0.02, steps: 50, chi: 64, save_every: 10 };
    let mut g = graph();
    let mut blocked = Mps::product_state(&mut g, h.basis, &cfg, true).unwrap();
    let mut dense = Mps::product_state(&mut g, h.basis, &cfg, false).unwrap();
    let rb = tebd_evolve(&mut g, &h, &mut blocked, &settings, &obs).unwrap();
    let rd = tebd_evolve(&mut g, &h, &mut dense, &settings, &obs).unwrap();
    assert_eq!(rb.snapshots.len(), rd.snapshots.len());
    for (a, b) in rb.snapshots.iter().zip(&rd.snapshots) {
        assert!((a.norm_dev - b.norm_dev).abs() < 1e-10);
        for (x, y) in a.values.iter().zip(&b.values) {
            match (x, y) {
                (ObservableValue::Site(x), ObservableValue::Site(y)) => {
                    x.iter().zip(y).for_each(|(p, q)| assert!((p - q).norm() < 1e-10));
                }
                (ObservableValue::Pairs(x), ObservableValue::Pairs(y)) => {
                    x.iter().zip(y).for_each(|(p, q)| assert!((p - q).norm() < 1e-10));
                }
                _ => panic!("observable kinds differ"),
            }
        }
    }
    assert!(distance(&blocked.amplitudes(&g).unwrap(), &Array1::from_vec(dense.amplitudes(&g).unwrap())) < 1e-10);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let h = Hamiltonian::bose_hubbard(5, 2, -1.0, 1.0, 0.0, None).unwrap();
    let cfg = [1, 1, 0, 2, 0];
    let mut g = graph();
    let mut whole = Mps::product_state(&mut g, h.basis, &cfg, true).unwrap();
    tebd_evolve(&mut g, &h, &mut whole, &TebdSettings { dt: 0.05, steps: 21, chi: 32, save_every: 7 }, &[]).unwrap();
    let mut split = Mps::product_state(&mut g, h.basis, &cfg, true).unwrap();
    let first = TebdSettings { dt: 0.05, steps: 7, chi: 32, save_every: 7 };
    let r = tebd_evolve(&mut g, &h, &mut split, &first, &[]).unwrap();
    let start = Start { step: r.final_step, trunc_err: r.trunc_err };
    let rest = TebdSettings { steps: 14, ..first };
    let r = tebd_evolve_from(&mut g, &h, &mut split, &rest, &[], start, |_| {}).unwrap();
    assert_eq!(r.final_step, 21);
    assert_eq!(r.snapshots.first().unwrap().step, 7);
    let a = split.amplitudes(&g).unwrap();
    let b = Array1::from_vec(whole.amplitudes(&g).unwrap());
    assert!(distance(&a, &b) < 1e-10);
}

#[test]
fn truncation_error_accumulates_monotonically() {
    let mut g = graph();
    let l = 10;
    let h = Hamiltonian::bose_hubbard(l, 2, -1.0, 1.0, 0.0, None).unwrap();
    let cfg: Vec<usize> = (0..l).map(|k| if k % 2 == 0 { 2 } else { 0 }).collect();
    let mut psi = Mps::product_state(&mut g, h.basis, &cfg, true).unwrap();
    let settings = TebdSettings { dt: 0.05, steps: 60, chi: 4, save_every: 2 };
    let r = tebd_evolve(&mut g, &h, &mut psi, &settings, &[]).unwrap();
    let eps: Vec<f64> = r.snapshots.iter().map(|s| s.trunc_err).collect();
    assert!(*eps.last().unwrap() > 0.0);
    assert!(eps.windows(2).all(|w| w[1] >= w[0]));
    assert!(psi.bond_dims(&g).unwrap().iter().all(|&d| d <= 4));
}

#[test]
fn rejects_invalid_settings() {
    let mut g = graph();
    let h = Hamiltonian::heisenberg(3, 1, 1.0).unwrap();
    let mut psi = Mps::product_state(&mut g, h.basis, &[1, 0, 1], true).unwrap();
    let base = TebdSettings { dt: 0.1, steps: 1, chi: 4, save_every: 1 };
    for bad in [
        TebdSettings { dt: 0.0, ..base },
        TebdSettings { dt: -0.1, ..base },
        TebdSettings { dt: f64::NAN, ..base },
        TebdSettings { save_every: 0, ..base },
        TebdSettings { chi: 0, ..base },
    ] {
        assert!(matches!(tebd_evolve(&mut g, &h, &mut psi, &bad, &[]), Err(tnt_mps::Error::InvalidArgument(_))));
    }
    let bad_obs = [ObservableSpec::parse("Ex1B").unwrap()];
    assert!(tebd_evolve(&mut g, &h, &mut psi, &base, &bad_obs).is_err());
}
