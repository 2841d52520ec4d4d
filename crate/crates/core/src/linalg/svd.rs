use ndarray::{s, Array2, ArrayView2};
use ndarray_linalg::{JobSvd, SVDDC, SVD};
use serde::{Deserialize, Serialize};

use crate::dense::C64;
use crate::error::{invalid, Result, TntError};
use crate::symmetric::auto_block;

/// Function used to measure the discarded part of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruncErrorType {
    /// `sqrt(sum of discarded squares)`.
    #[serde(rename = "2norm")]
    TwoNorm,
    #[serde(rename = "sumsquares")]
    SumSquares,
    #[serde(rename = "1norm")]
    OneNorm,
}

impl TruncErrorType {
    pub fn name(self) -> &'static str {
        match self {
            TruncErrorType::TwoNorm => "2norm",
            TruncErrorType::SumSquares => "sumsquares",
            TruncErrorType::OneNorm => "1norm",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "2norm" => Some(TruncErrorType::TwoNorm),
            "sumsquares" => Some(TruncErrorType::SumSquares),
            "1norm" => Some(TruncErrorType::OneNorm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvdVariant {
    /// LAPACK `gesdd`.
    DivideConquer,
    /// LAPACK `gesvd`.
    Standard,
}

impl SvdVariant {
    pub fn description(self) -> &'static str {
        match self {
            SvdVariant::DivideConquer => "LAPACK divide and conquer",
            SvdVariant::Standard => "LAPACK standard",
        }
    }
}

/// Bounds on the kept singular values. A tolerance of exactly `-1.0` is disabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub max_dim: Option<usize>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub err_tol: f64,
    pub error_type: TruncErrorType,
}

pub(crate) fn enabled(tol: f64) -> bool {
    tol >= 0.0
}

impl TruncationPolicy {
    /// No bound enabled: exact SVD.
    pub fn exact() -> Self {
        Self { max_dim: None, abs_tol: -1.0, rel_tol: -1.0, err_tol: -1.0, error_type: TruncErrorType::TwoNorm }
    }

    pub fn with_max_dim(mut self, max_dim: usize) -> Self {
        self.max_dim = Some(max_dim);
        self
    }

    pub fn error(&self, discarded: &[f64]) -> f64 {
        truncation_error(discarded, self.error_type)
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self::exact()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvdSettings {
    pub variant: SvdVariant,
    /// Entries with magnitude `<=` this are zeroed and the matrix is split into
    /// independent blocks before decomposition. Negative disables.
    pub auto_block_tol: f64,
}

impl Default for SvdSettings {
    fn default() -> Self {
        Self { variant: SvdVariant::DivideConquer, auto_block_tol: -1.0 }
    }
}

/// Singular values in nonincreasing order with the retained count.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    values: Vec<f64>,
    kept_dim: usize,
    truncation_error: f64,
}

impl SingularSpectrum {
    pub fn new(values: Vec<f64>, kept_dim: usize, truncation_error: f64) -> Self {
        debug_assert!(values.windows(2).all(|w| w[0] >= w[1]));
        Self { values, kept_dim, truncation_error }
    }

    /// Full spectrum, including discarded values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kept(&self) -> &[f64] {
        &self.values[..self.kept_dim]
    }

    pub fn discarded(&self) -> &[f64] {
        &self.values[self.kept_dim..]
    }

    pub fn kept_dim(&self) -> usize {
        self.kept_dim
    }

    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }
}

pub fn truncation_error(discarded: &[f64], ty: TruncErrorType) -> f64 {
    match ty {
        TruncErrorType::TwoNorm => discarded.iter().map(|v| v * v).sum::<f64>().sqrt(),
        TruncErrorType::SumSquares => discarded.iter().map(|v| v * v).sum(),
        TruncErrorType::OneNorm => discarded.iter().sum(),
    }
}

/// Number of leading values kept under `policy`: the smallest count implied by
/// any enabled bound, never less than one.
pub fn choose_kept_dim(values: &[f64], policy: &TruncationPolicy) -> usize {
    let n = values.len();
    if n == 0 {
        return 0;
    }
    let mut keep = n;
    if let Some(chi) = policy.max_dim {
        keep = keep.min(chi);
    }
    if enabled(policy.abs_tol) {
        keep = keep.min(values.iter().take_while(|&&v| v >= policy.abs_tol).count());
    }
    if enabled(policy.rel_tol) && values[0] > 0.0 {
        let top = values[0];
        keep = keep.min(values.iter().take_while(|&&v| v / top >= policy.rel_tol).count());
    }
    if enabled(policy.err_tol) {
        // largest discard count whose error stays strictly below the bound
        let mut best = n;
        for k in (0..n).rev() {
            if truncation_error(&values[k..], policy.error_type) < policy.err_tol {
                best = k;
            } else {
                break;
            }
        }
        keep = keep.min(best);
    }
    keep.max(1)
}

/// Thin SVD `m = U diag(s) Vt` with singular values nonincreasing.
pub fn svd_decompose(m: ArrayView2<C64>, variant: SvdVariant) -> Result<(Array2<C64>, Vec<f64>, Array2<C64>)> {
    let (nr, nc) = m.dim();
    if nr == 0 || nc == 0 {
        return Err(invalid(format!("cannot decompose an empty {nr}x{nc} matrix")));
    }
    let k = nr.min(nc);
    let failed = |e: ndarray_linalg::error::LinalgError| {
        TntError::DecompositionFailed(format!("SVD of {nr}x{nc} matrix: {e}"))
    };
    let owned = Array2::from_shape_vec((nr, nc), m.iter().copied().collect()).expect("shape matches");
    let (u, s, vt) = match variant {
        SvdVariant::DivideConquer => owned.svddc(JobSvd::Some).map_err(failed)?,
        SvdVariant::Standard => owned.svd(true, true).map_err(failed)?,
    };
    let u = u.ok_or_else(|| TntError::DecompositionFailed(format!("SVD of {nr}x{nc}: no U")))?;
    let vt = vt.ok_or_else(|| TntError::DecompositionFailed(format!("SVD of {nr}x{nc}: no Vt")))?;
    let u = u.slice(s![.., ..k]).to_owned();
    let vt = vt.slice(s![..k, ..]).to_owned();
    let s: Vec<f64> = s.iter().take(k).copied().collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(TntError::DecompositionFailed(format!("SVD of {nr}x{nc} produced non-finite values")));
    }
    Ok((u, s, vt))
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Array2<C64>,
    pub spectrum: SingularSpectrum,
    pub vdag: Array2<C64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> Array2<C64> {
        let mut us = self.u.clone();
        for (j, &s) in self.spectrum.kept().iter().enumerate() {
            us.column_mut(j).mapv_inplace(|v| v * s);
        }
        us.dot(&self.vdag)
    }
}

/// SVD truncated by `policy`. Discarded singular vectors are dropped from `U` and `Vdag`.
pub fn truncated_svd(m: ArrayView2<C64>, policy: &TruncationPolicy, settings: &SvdSettings) -> Result<TruncatedSvd> {
    if enabled(settings.auto_block_tol) {
        return blocked_truncated_svd(m, policy, settings);
    }
    let (u, s, vt) = svd_decompose(m, settings.variant)?;
    let keep = choose_kept_dim(&s, policy);
    let err = policy.error(&s[keep..]);
    Ok(TruncatedSvd {
        u: u.slice(s![.., ..keep]).to_owned(),
        vdag: vt.slice(s![..keep, ..]).to_owned(),
        spectrum: SingularSpectrum::new(s, keep, err),
    })
}

fn blocked_truncated_svd(m: ArrayView2<C64>, policy: &TruncationPolicy, settings: &SvdSettings) -> Result<TruncatedSvd> {
    let (nr, nc) = m.dim();
    if nr == 0 || nc == 0 {
        return Err(invalid(format!("cannot decompose an empty {nr}x{nc} matrix")));
    }
    let blocking = auto_block(m, settings.auto_block_tol);
    // (value, block, index within block)
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    let mut parts = Vec::with_capacity(blocking.blocks.len());
    for (b, block) in blocking.blocks.iter().enumerate() {
        let (u, s, vt) = svd_decompose(block.values.view(), settings.variant)?;
        all.extend(s.iter().enumerate().map(|(i, &v)| (v, b, i)));
        parts.push((u, vt));
    }
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    if all.is_empty() {
        let mut u = Array2::zeros((nr, 1));
        u[[0, 0]] = C64::new(1.0, 0.0);
        let mut vdag = Array2::zeros((1, nc));
        vdag[[0, 0]] = C64::new(1.0, 0.0);
        return Ok(TruncatedSvd { u, vdag, spectrum: SingularSpectrum::new(vec![0.0], 1, 0.0) });
    }
    let values: Vec<f64> = all.iter().map(|x| x.0).collect();
    let keep = choose_kept_dim(&values, policy);
    let err = policy.error(&values[keep..]);
    let mut u = Array2::zeros((nr, keep));
    let mut vdag = Array2::zeros((keep, nc));
    for (j, &(_, b, i)) in all[..keep].iter().enumerate() {
        let block = &blocking.blocks[b];
        let (bu, bvt) = &parts[b];
        for (r, &row) in block.rows.iter().enumerate() {
            u[[row, j]] = bu[[r, i]];
        }
        for (c, &col) in block.cols.iter().enumerate() {
            vdag[[j, col]] = bvt[[i, c]];
        }
    }
    Ok(TruncatedSvd { u, vdag, spectrum: SingularSpectrum::new(values, keep, err) })
}
