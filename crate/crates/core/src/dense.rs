//! Dense complex tensors stored row-major (last index fastest).

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cache::ReshapeCache;
use crate::error::{invalid, Result, TntError};

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Real,
    Complex,
}

impl ElementKind {
    fn join(self, other: ElementKind) -> ElementKind {
        if self == ElementKind::Real && other == ElementKind::Real {
            ElementKind::Real
        } else {
            ElementKind::Complex
        }
    }
}

/// Flattened complex array plus its ordered index dimensions.
///
/// Rank-0 tensors (no dims, one value) represent the scalar result of a full
/// contraction.
#[derive(Debug, Clone)]
pub struct DenseTensor {
    values: Vec<C64>,
    dims: Vec<usize>,
    kind: ElementKind,
}

/// Equality of dims and values; the element-kind marker is not observable.
impl PartialEq for DenseTensor {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.values == other.values
    }
}

pub(crate) fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(invalid(format!("index {pos} has dimension 0")));
    }
    Ok(dims.iter().product())
}

impl DenseTensor {
    pub fn new(values: Vec<C64>, dims: Vec<usize>) -> Result<Self> {
        let size = check_dims(&dims)?;
        if values.len() != size {
            return Err(invalid(format!(
                "{} values supplied for dims {:?} (expected {size})",
                values.len(),
                dims
            )));
        }
        let kind = if values.iter().all(|v| v.im == 0.0) {
            ElementKind::Real
        } else {
            ElementKind::Complex
        };
        Ok(Self { values, dims, kind })
    }

    pub fn from_real(values: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        Self::new(values.into_iter().map(|v| C64::new(v, 0.0)).collect(), dims)
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let size = check_dims(&dims)?;
        Ok(Self { values: vec![C64::new(0.0, 0.0); size], dims, kind: ElementKind::Real })
    }

    pub fn scalar(value: C64) -> Self {
        Self::new(vec![value], vec![]).expect("scalar")
    }

    /// Square matrix with the given diagonal.
    pub fn diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut values = vec![C64::new(0.0, 0.0); n * n];
        for (i, &d) in diag.iter().enumerate() {
            values[i * n + i] = d;
        }
        Self::new(values, vec![n, n]).expect("diagonal")
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    /// Complex Gaussian entries (independent standard normal real and imaginary parts).
    pub fn random<R: Rng + ?Sized>(dims: Vec<usize>, rng: &mut R) -> Result<Self> {
        let size = check_dims(&dims)?;
        let values = (0..size)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Ok(Self { values, dims, kind: ElementKind::Complex })
    }

    pub fn random_real<R: Rng + ?Sized>(dims: Vec<usize>, rng: &mut R) -> Result<Self> {
        let size = check_dims(&dims)?;
        let values = (0..size).map(|_| C64::new(rng.sample(StandardNormal), 0.0)).collect();
        Ok(Self { values, dims, kind: ElementKind::Real })
    }

    pub fn from_matrix(m: Array2<C64>) -> Self {
        let dims = vec![m.nrows(), m.ncols()];
        let values = if m.is_standard_layout() {
            m.into_raw_vec_and_offset().0
        } else {
            m.iter().copied().collect()
        };
        Self::new(values, dims).expect("matrix dims")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() {
            return Err(invalid(format!("index rank {} != tensor rank {}", index.len(), self.rank())));
        }
        let mut off = 0;
        for (k, (&i, &d)) in index.iter().zip(&self.dims).enumerate() {
            if i >= d {
                return Err(invalid(format!("index {i} out of range for axis {k} of dim {d}")));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<C64> {
        Ok(self.values[self.offset(index)?])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn conj(&self) -> Self {
        if self.kind == ElementKind::Real {
            return self.clone();
        }
        Self {
            values: self.values.iter().map(|v| v.conj()).collect(),
            dims: self.dims.clone(),
            kind: self.kind,
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        let kind = if factor.im == 0.0 { self.kind } else { ElementKind::Complex };
        Self { values: self.values.iter().map(|v| v * factor).collect(), dims: self.dims.clone(), kind }
    }

    pub fn add(&self, other: &DenseTensor) -> Result<Self> {
        if self.dims != other.dims {
            return Err(TntError::IncompatibleNodes(format!(
                "cannot add dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            dims: self.dims.clone(),
            kind: self.kind.join(other.kind),
        })
    }

    /// Reinterprets the flat values under new dims of equal total size.
    pub fn reshape(&self, dims: Vec<usize>) -> Result<Self> {
        let size = check_dims(&dims)?;
        if size != self.values.len() {
            return Err(invalid(format!("cannot reshape {:?} into {:?}", self.dims, dims)));
        }
        Ok(Self { values: self.values.clone(), dims, kind: self.kind })
    }

    pub(crate) fn with_values(values: Vec<C64>, dims: Vec<usize>, kind: ElementKind) -> Self {
        debug_assert_eq!(values.len(), dims.iter().product::<usize>());
        Self { values, dims, kind }
    }

    /// Reorders indices so that result index `k` is input index `order[k]`.
    pub fn permute(&self, order: &[usize], cache: Option<&ReshapeCache>) -> Result<Self> {
        validate_permutation(order, self.rank())?;
        if order.iter().enumerate().all(|(k, &o)| k == o) {
            return Ok(self.clone());
        }
        let apply = |plan: &PermutationPlan| -> Vec<C64> {
            plan.gather_map.iter().map(|&src| self.values[src]).collect()
        };
        let values = match cache {
            Some(cache) => {
                let plan = cache.permutation((self.dims.clone(), order.to_vec()), || {
                    PermutationPlan::build(&self.dims, order)
                });
                apply(&plan)
            }
            None => apply(&PermutationPlan::build(&self.dims, order)),
        };
        let dims = order.iter().map(|&o| self.dims[o]).collect();
        Ok(Self { values, dims, kind: self.kind })
    }

    /// Permutes `rows` to the front (in the listed order) and flattens into a matrix.
    /// Remaining indices keep their relative input order as columns.
    pub fn matricize(&self, rows: &[usize], cache: Option<&ReshapeCache>) -> Result<Matricized> {
        let mut seen = vec![false; self.rank()];
        for &r in rows {
            if r >= self.rank() {
                return Err(invalid(format!("row position {r} out of range for rank {}", self.rank())));
            }
            if std::mem::replace(&mut seen[r], true) {
                return Err(invalid(format!("duplicate row position {r}")));
            }
        }
        let mut order = rows.to_vec();
        order.extend((0..self.rank()).filter(|k| !seen[*k]));
        let permuted = self.permute(&order, cache)?;
        let row_dims: Vec<usize> = permuted.dims[..rows.len()].to_vec();
        let col_dims: Vec<usize> = permuted.dims[rows.len()..].to_vec();
        let nr = row_dims.iter().product();
        let nc = col_dims.iter().product();
        let matrix = Array2::from_shape_vec((nr, nc), permuted.values).expect("matricize shape");
        Ok(Matricized { matrix, order, row_dims, col_dims, kind: self.kind })
    }

    pub fn to_matrix(&self, rows: &[usize]) -> Result<Array2<C64>> {
        Ok(self.matricize(rows, None)?.matrix)
    }
}

/// A tensor flattened to a matrix together with the permutation that produced it.
#[derive(Debug, Clone)]
pub struct Matricized {
    pub matrix: Array2<C64>,
    pub order: Vec<usize>,
    pub row_dims: Vec<usize>,
    pub col_dims: Vec<usize>,
    kind: ElementKind,
}

impl Matricized {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Inverse of [`DenseTensor::matricize`].
    pub fn dematricize(&self, cache: Option<&ReshapeCache>) -> Result<DenseTensor> {
        let mut dims = self.row_dims.clone();
        dims.extend(&self.col_dims);
        let values: Vec<C64> = self.matrix.iter().copied().collect();
        let permuted = DenseTensor::with_values(values, dims, self.kind);
        permuted.permute(&inverse_permutation(&self.order), cache)
    }
}

pub fn validate_permutation(order: &[usize], rank: usize) -> Result<()> {
    if order.len() != rank {
        return Err(TntError::InvalidPermutation(format!(
            "order has length {} but tensor has rank {rank}",
            order.len()
        )));
    }
    let mut seen = vec![false; rank];
    for &o in order {
        if o >= rank || std::mem::replace(&mut seen[o], true) {
            return Err(TntError::InvalidPermutation(format!("{order:?} is not a permutation of 0..{rank}")));
        }
    }
    Ok(())
}

pub fn inverse_permutation(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (k, &o) in order.iter().enumerate() {
        inv[o] = k;
    }
    inv
}

/// Precomputed source offsets for one `(dims, order)` permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPlan {
    pub source_dims: Vec<usize>,
    pub target_order: Vec<usize>,
    pub gather_map: Vec<usize>,
}

impl PermutationPlan {
    pub fn build(dims: &[usize], order: &[usize]) -> Self {
        let src_strides = row_major_strides(dims);
        let tdims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
        let tstrides: Vec<usize> = order.iter().map(|&o| src_strides[o]).collect();
        let size: usize = dims.iter().product();
        let mut gather_map = Vec::with_capacity(size);
        let rank = tdims.len();
        if rank == 0 {
            gather_map.push(0);
        } else {
            let last = rank - 1;
            let mut idx = vec![0usize; rank];
            let mut base = 0usize;
            'outer: loop {
                let s = tstrides[last];
                for i in 0..tdims[last] {
                    gather_map.push(base + i * s);
                }
                let mut k = last;
                loop {
                    if k == 0 {
                        break 'outer;
                    }
                    k -= 1;
                    idx[k] += 1;
                    base += tstrides[k];
                    if idx[k] < tdims[k] {
                        break;
                    }
                    base -= tstrides[k] * tdims[k];
                    idx[k] = 0;
                }
            }
        }
        Self { source_dims: dims.to_vec(), target_order: order.to_vec(), gather_map }
    }
}

/// Bookkeeping record for legs fused into one. No tensor values move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedLeg {
    children: Vec<(char, usize)>,
}

impl FusedLeg {
    pub fn record(legs: &[(char, usize)]) -> Result<Self> {
        if legs.len() < 2 {
            return Err(invalid("fusing requires at least two legs"));
        }
        Ok(Self { children: legs.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.children.iter().map(|c| c.1).product()
    }

    pub fn children(&self) -> &[(char, usize)] {
        &self.children
    }

    pub fn split(&self) -> Vec<(char, usize)> {
        self.children.clone()
    }
}
