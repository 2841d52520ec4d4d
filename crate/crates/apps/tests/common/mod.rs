#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use tnt_core::C64;

pub fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// Truncated boson operators on `d` levels: (b, b†, n).
pub fn boson_ops(d: usize) -> (Array2<C64>, Array2<C64>, Array2<C64>) {
    let mut b = Array2::zeros((d, d));
    for k in 1..d {
        b[[k - 1, k]] = c((k as f64).sqrt());
    }
    let bd = b.t().to_owned();
    let n = Array2::from_diag(&Array1::from_iter((0..d).map(|k| c(k as f64))));
    (b, bd, n)
}

/// Spin operators (S+, S-, Sz) for spin `twice_s / 2`, states m = -s..s.
pub fn spin_ops(twice_s: usize) -> (Array2<C64>, Array2<C64>, Array2<C64>) {
    let d = twice_s + 1;
    let s = twice_s as f64 / 2.0;
    let mut sp = Array2::zeros((d, d));
    for k in 0..d - 1 {
        let m = k as f64 - s;
        sp[[k + 1, k]] = c((s * (s + 1.0) - m * (m + 1.0)).sqrt());
    }
    let sm = sp.t().to_owned();
    let sz = Array2::from_diag(&Array1::from_iter((0..d).map(|k| c(k as f64 - s))));
    (sp, sm, sz)
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = a[[i, j]] * b[[k, l]];
                }
            }
        }
    }
    out
}

/// `op` on site `j` of an `l`-site chain, identity elsewhere.
pub fn embed(op: &Array2<C64>, j: usize, l: usize) -> Array2<C64> {
    let d = op.nrows();
    let mut m = Array2::eye(1);
    for k in 0..l {
        m = kron(&m, &if k == j { op.clone() } else { Array2::eye(d) });
    }
    m
}

/// Nearest-neighbour chain operator as explicit terms.
pub struct Chain {
    pub d: usize,
    pub l: usize,
    /// (site, operator)
    pub onsite: Vec<(usize, Array2<C64>)>,
    /// (left site, coefficient, left operator, right operator)
    pub bonds: Vec<(usize, C64, Array2<C64>, Array2<C64>)>,
}

impl Chain {
    /// `jb Σ (b†b + h.c.) + U/2 Σ n(n-1) + V Σ (j - jc)² n`, sites numbered from 1.
    pub fn bose_hubbard(l: usize, d: usize, jb: f64, u: f64, v: f64, jc: f64) -> Chain {
        let (b, bd, n) = boson_ops(d);
        let mut onsite = Vec::new();
        for j in 0..l {
            let mut h = Array2::zeros((d, d));
            for k in 0..d {
                let nk = k as f64;
                h[[k, k]] = c(u / 2.0 * nk * (nk - 1.0) + v * ((j + 1) as f64 - jc).powi(2) * nk);
            }
            onsite.push((j, h));
        }
        let mut bonds = Vec::new();
        for j in 0..l.saturating_sub(1) {
            bonds.push((j, c(jb), bd.clone(), b.clone()));
            bonds.push((j, c(jb), b.clone(), bd.clone()));
        }
        let _ = n;
        Chain { d, l, onsite, bonds }
    }

    /// `J Σ (Sx Sx + Sy Sy + Δ Sz Sz) + h Σ Sz`.
    pub fn xxz(l: usize, twice_s: usize, j: f64, delta: f64, h: f64) -> Chain {
        let (sp, sm, sz) = spin_ops(twice_s);
        let onsite = (0..l).map(|k| (k, sz.mapv(|x| x * h))).collect();
        let mut bonds = Vec::new();
        for k in 0..l.saturating_sub(1) {
            bonds.push((k, c(j / 2.0), sp.clone(), sm.clone()));
            bonds.push((k, c(j / 2.0), sm.clone(), sp.clone()));
            bonds.push((k, c(j * delta), sz.clone(), sz.clone()));
        }
        Chain { d: twice_s + 1, l, onsite, bonds }
    }

    /// Full matrix, site 0 most significant.
    pub fn dense(&self) -> Array2<C64> {
        let n = self.d.pow(self.l as u32);
        let mut h = Array2::zeros((n, n));
        for (j, op) in &self.onsite {
            h = h + embed(op, *j, self.l);
        }
        for (j, cf, a, b) in &self.bonds {
            h = h + embed(a, *j, self.l).dot(&embed(b, j + 1, self.l)).mapv(|x| x * cf);
        }
        h
    }

    /// Matrix restricted to the configurations with the given sum of local
    /// indices.
    pub fn sector(&self, total: usize) -> Sector {
        let n_all = self.d.pow(self.l as u32);
        let configs: Vec<Vec<usize>> = (0..n_all)
            .map(|mut x| {
                let mut cfg = vec![0; self.l];
                for k in (0..self.l).rev() {
                    cfg[k] = x % self.d;
                    x /= self.d;
                }
                cfg
            })
            .filter(|cfg| cfg.iter().sum::<usize>() == total)
            .collect();
        let index: HashMap<Vec<usize>, usize> = configs.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let n = configs.len();
        let mut h = Array2::zeros((n, n));
        for (col, cfg) in configs.iter().enumerate() {
            for (j, op) in &self.onsite {
                for a in 0..self.d {
                    let v = op[[a, cfg[*j]]];
                    if v != c(0.0) {
                        let mut to = cfg.clone();
                        to[*j] = a;
                        if let Some(&row) = index.get(&to) {
                            h[[row, col]] += v;
                        }
                    }
                }
            }
            for (j, cf, x, y) in &self.bonds {
                for a in 0..self.d {
                    for b in 0..self.d {
                        let v = x[[a, cfg[*j]]] * y[[b, cfg[j + 1]]];
                        if v != c(0.0) {
                            let mut to = cfg.clone();
                            to[*j] = a;
                            to[j + 1] = b;
                            if let Some(&row) = index.get(&to) {
                                h[[row, col]] += v * cf;
                            }
                        }
                    }
                }
            }
        }
        Sector { configs, index, h }
    }
}

pub struct Sector {
    pub configs: Vec<Vec<usize>>,
    pub index: HashMap<Vec<usize>, usize>,
    pub h: Array2<C64>,
}

/// Eigenvalues (ascending) and column eigenvectors of a Hermitian matrix.
pub fn eigh(h: &Array2<C64>) -> (Vec<f64>, Array2<C64>) {
    let col_major = h.t().to_owned().reversed_axes();
    let (w, v) = col_major.eigh(UPLO::Lower).expect("eigh");
    (w.to_vec(), v)
}

pub fn ground_energy(h: &Array2<C64>) -> f64 {
    eigh(h).0[0]
}

/// Index of a configuration in the full product basis, site 0 most significant.
pub fn flat_index(cfg: &[usize], d: usize) -> usize {
    cfg.iter().fold(0, |acc, &k| acc * d + k)
}

pub fn assert_close(a: C64, b: C64, tol: f64, what: &str) {
    assert!((a - b).norm() <= tol, "{what}: {a} vs {b} (tol {tol})");
}

/// Exact evolution inside a sector: `exp(-i H t) psi` by eigendecomposition.
pub struct Propagator {
    energies: Vec<f64>,
    vectors: Array2<C64>,
}

impl Propagator {
    pub fn new(h: &Array2<C64>) -> Self {
        let (energies, vectors) = eigh(h);
        Propagator { energies, vectors }
    }

    pub fn evolve(&self, psi: &Array1<C64>, t: f64) -> Array1<C64> {
        let vh = self.vectors.t().mapv(|x| x.conj());
        let coeffs = vh.dot(psi);
        let phased = Array1::from_iter(coeffs.iter().zip(&self.energies).map(|(a, &w)| a * C64::new(0.0, -w * t).exp()));
        self.vectors.dot(&phased)
    }
}

/// Occupation of every site, `Σ |ψ_c|² c_j`, for a sector vector.
pub fn densities(sector: &Sector, psi: &Array1<C64>) -> Vec<f64> {
    let l = sector.configs[0].len();
    let mut n = vec![0.0; l];
    for (cfg, a) in sector.configs.iter().zip(psi) {
        let w = a.norm_sqr();
        for (j, &k) in cfg.iter().enumerate() {
            n[j] += w * k as f64;
        }
    }
    n
}

/// Sector vector of a product configuration.
pub fn basis_vector(sector: &Sector, cfg: &[usize]) -> Array1<C64> {
    let mut v = Array1::zeros(sector.configs.len());
    v[sector.index[cfg]] = c(1.0);
    v
}
