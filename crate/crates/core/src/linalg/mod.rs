//! Dense numerical kernels: matrix products, truncated SVD, the extremal
//! eigensolver used for local minimisation, and the matrix exponential.

mod eigen;
mod expm;
mod svd;

use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};

use crate::dense::C64;
use crate::error::{invalid, Result, TntError};

pub use eigen::{min_site_eigen, EigenResult, EigenSettings};
pub use expm::matrix_exponential;
pub use svd::{
    choose_kept_dim, svd_decompose, truncated_svd, truncation_error, SingularSpectrum, SvdSettings, SvdVariant,
    TruncErrorType, TruncatedSvd, TruncationPolicy,
};

/// Dense matrix-product provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// BLAS `zgemm` through ndarray.
    Blas,
    /// Plain triple loop, no external library.
    Reference,
}

impl Backend {
    pub fn parse(name: &str) -> Option<Backend> {
        match name.to_ascii_lowercase().as_str() {
            "blas" | "lapack" | "openblas" => Some(Backend::Blas),
            "reference" | "native" => Some(Backend::Reference),
            _ => None,
        }
    }

    /// Backend chosen by `TNT_LINALG_BACKEND`, read once per process. Defaults to BLAS.
    pub fn from_env() -> Backend {
        static CHOSEN: OnceLock<Backend> = OnceLock::new();
        *CHOSEN.get_or_init(|| match std::env::var("TNT_LINALG_BACKEND") {
            Ok(name) => Backend::parse(&name).unwrap_or_else(|| {
                log::warn!("unknown TNT_LINALG_BACKEND '{name}', using blas");
                Backend::Blas
            }),
            Err(_) => Backend::Blas,
        })
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvector columns of a Hermitian matrix.
pub fn hermitian_eigh(h: ArrayView2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(invalid(format!("eigendecomposition of non-square {}x{} matrix", n, h.ncols())));
    }
    // column-major input: LAPACK otherwise sees the transpose and returns conjugated vectors
    let mut f = Array2::<C64>::zeros((n, n).f());
    f.assign(&h);
    let (w, v) = f
        .eigh(UPLO::Lower)
        .map_err(|e| TntError::DecompositionFailed(format!("Hermitian {n}x{n} eigenproblem: {e}")))?;
    Ok((w.to_vec(), v.as_standard_layout().to_owned()))
}

pub fn contract_matrices(a: ArrayView2<C64>, b: ArrayView2<C64>) -> Result<Array2<C64>> {
    contract_matrices_with(Backend::from_env(), a, b)
}

pub fn contract_matrices_with(backend: Backend, a: ArrayView2<C64>, b: ArrayView2<C64>) -> Result<Array2<C64>> {
    if a.ncols() != b.nrows() {
        return Err(invalid(format!(
            "inner dimensions differ: {}x{} times {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(match backend {
        Backend::Blas => a.dot(&b),
        Backend::Reference => {
            let (n, k, m) = (a.nrows(), a.ncols(), b.ncols());
            let mut c = Array2::<C64>::zeros((n, m));
            for i in 0..n {
                for p in 0..k {
                    let aip = a[[i, p]];
                    if aip == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for j in 0..m {
                        c[[i, j]] += aip * b[[p, j]];
                    }
                }
            }
            c
        }
    })
}
