use ndarray::Array2;

use crate::dense::C64;
use crate::error::{invalid, Result, TntError};
use crate::linalg::hermitian_eigh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    /// Maximum number of operator applications.
    pub max_iter: usize,
    /// Convergence bound on the residual norm of the normalised eigenvector.
    pub tol: f64,
    /// Krylov subspace size before a restart (capped by the problem size).
    pub krylov_dim: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-10, krylov_dim: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub value: f64,
    pub vector: Vec<C64>,
    pub iterations: usize,
    pub residual: f64,
    /// Ritz value at every restart, in order.
    pub restart_values: Vec<f64>,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn combine(basis: &[Vec<C64>], coeffs: impl Iterator<Item = C64>, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (v, c) in basis.iter().zip(coeffs) {
        axpy(&mut out, c, v);
    }
    out
}

fn fallback_start(n: usize) -> Vec<C64> {
    // deterministic, not orthogonal to any structured eigenvector in practice
    (0..n).map(|i| C64::new(1.0 + 0.1 * ((i * 7919) % 101) as f64 / 101.0, 0.0)).collect()
}

/// Lowest eigenpair of the Hermitian operator defined by `apply`.
///
/// Restarted Lanczos with full reorthogonalisation: the basis is grown by the
/// Ritz residual (which spans the Krylov sequence), and on reaching
/// `krylov_dim` it is collapsed onto the lowest half of the Ritz vectors.
pub fn min_site_eigen<F>(initial: &[C64], mut apply: F, settings: &EigenSettings) -> Result<EigenResult>
where
    F: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    let n = initial.len();
    if n == 0 {
        return Err(invalid("eigensolver needs a nonempty start vector"));
    }
    if settings.max_iter == 0 {
        return Err(invalid("max_iter must be positive"));
    }
    let m = settings.krylov_dim.max(2).min(n);
    let mut v0 = initial.to_vec();
    let mut nv = norm(&v0);
    if !(nv > 1e-300) || !nv.is_finite() {
        v0 = fallback_start(n);
        nv = norm(&v0);
    }
    v0.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m);
    let mut images: Vec<Vec<C64>> = Vec::with_capacity(m);
    // projected matrix, row-major m x m, Hermitian
    let mut proj = vec![C64::new(0.0, 0.0); m * m];
    let mut iterations = 0usize;
    let mut restart_values = Vec::new();
    let mut best: Option<(f64, f64, Vec<C64>)> = None; // (residual, value, vector)

    let mut push = |v: Vec<C64>,
                    basis: &mut Vec<Vec<C64>>,
                    images: &mut Vec<Vec<C64>>,
                    proj: &mut Vec<C64>,
                    iterations: &mut usize|
     -> Result<()> {
        let w = apply(&v)?;
        if w.len() != n {
            return Err(invalid(format!("operator returned length {} for input length {n}", w.len())));
        }
        *iterations += 1;
        let k = basis.len();
        basis.push(v);
        for i in 0..=k {
            let h = dot(&basis[i], &w);
            proj[i * m + k] = h;
            proj[k * m + i] = h.conj();
        }
        images.push(w);
        Ok(())
    };

    push(v0, &mut basis, &mut images, &mut proj, &mut iterations)?;
    loop {
        let k = basis.len();
        let mut h = Array2::<C64>::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                h[[i, j]] = 0.5 * (proj[i * m + j] + proj[j * m + i].conj());
            }
        }
        let (evals, evecs) = hermitian_eigh(h.view())?;
        let theta = evals[0];
        let x = combine(&basis, evecs.column(0).iter().copied(), n);
        let ax = combine(&images, evecs.column(0).iter().copied(), n);
        let mut r = ax.clone();
        axpy(&mut r, C64::new(-theta, 0.0), &x);
        let res = norm(&r);
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, theta, x.clone()));
        }
        if res <= settings.tol {
            let nx = norm(&x);
            return Ok(EigenResult {
                value: theta,
                vector: x.into_iter().map(|v| v / nx).collect(),
                iterations,
                residual: res,
                restart_values,
            });
        }
        if iterations >= settings.max_iter {
            let (residual, _, _) = best.unwrap();
            return Err(TntError::ConvergenceFailure { iterations, residual });
        }
        if k == m {
            restart_values.push(theta);
            let keep = (m / 2).max(2).min(k);
            let new_basis: Vec<Vec<C64>> =
                (0..keep).map(|c| combine(&basis, evecs.column(c).iter().copied(), n)).collect();
            let new_images: Vec<Vec<C64>> =
                (0..keep).map(|c| combine(&images, evecs.column(c).iter().copied(), n)).collect();
            basis = new_basis;
            images = new_images;
            proj.iter_mut().for_each(|p| *p = C64::new(0.0, 0.0));
            for i in 0..keep {
                for j in 0..keep {
                    proj[i * m + j] = dot(&basis[i], &images[j]);
                }
            }
            continue;
        }
        // residual is orthogonal to the basis in exact arithmetic; reorthogonalise twice
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &r);
                axpy(&mut r, -c, b);
            }
        }
        let nr = norm(&r);
        if nr <= 1e-14 * res.max(1e-300) || nr == 0.0 {
            // invariant subspace: the Ritz pair is as exact as arithmetic allows
            let nx = norm(&x);
            return Ok(EigenResult {
                value: theta,
                vector: x.into_iter().map(|v| v / nx).collect(),
                iterations,
                residual: res,
                restart_values,
            });
        }
        r.iter_mut().for_each(|v| *v /= nr);
        push(r, &mut basis, &mut images, &mut proj, &mut iterations)?;
    }
}
