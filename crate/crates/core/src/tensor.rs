//! Payload of a node: a dense tensor or a U(1) block-sparse tensor, with the
//! axis-level kernels shared by both.

use std::borrow::Cow;
use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2};

use crate::cache::ReshapeCache;
use crate::dense::{DenseTensor, C64};
use crate::error::{invalid, Result, TntError};
use crate::linalg::{
    choose_kept_dim, contract_matrices, svd_decompose, truncated_svd, SingularSpectrum, SvdSettings, TruncationPolicy,
};
use crate::symmetric::{BlockTensor, ChargedIndex, Direction, Qn};

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Dense(DenseTensor),
    Block(BlockTensor),
}

impl From<DenseTensor> for Tensor {
    fn from(t: DenseTensor) -> Self {
        Tensor::Dense(t)
    }
}

impl From<BlockTensor> for Tensor {
    fn from(t: BlockTensor) -> Self {
        Tensor::Block(t)
    }
}

/// Factors of a tensor SVD. `u` carries the row axes then the new axis, `vdag`
/// the new axis then the column axes, and `s` is diagonal over the new axis.
#[derive(Debug, Clone)]
pub struct SvdParts {
    pub u: Tensor,
    pub s: Tensor,
    pub vdag: Tensor,
    /// Full spectrum (all sectors) in nonincreasing order with the kept count.
    pub spectrum: SingularSpectrum,
    /// Kept singular values in the order of the new axis.
    pub bond_values: Vec<f64>,
}

fn check_axes(rank: usize, axes: &[usize]) -> Result<()> {
    let mut seen = vec![false; rank];
    for &a in axes {
        if a >= rank || std::mem::replace(&mut seen[a], true) {
            return Err(invalid(format!("axis list {axes:?} invalid for rank {rank}")));
        }
    }
    Ok(())
}

fn permuted<'a>(t: &'a DenseTensor, order: &[usize], cache: Option<&ReshapeCache>) -> Result<Cow<'a, DenseTensor>> {
    if order.iter().enumerate().all(|(k, &o)| k == o) {
        Ok(Cow::Borrowed(t))
    } else {
        Ok(Cow::Owned(t.permute(order, cache)?))
    }
}

fn contract_dense(
    a: &DenseTensor,
    a_axes: &[usize],
    b: &DenseTensor,
    b_axes: &[usize],
    cache: Option<&ReshapeCache>,
) -> Result<DenseTensor> {
    if a_axes.len() != b_axes.len() {
        return Err(invalid("contracted axis lists differ in length"));
    }
    check_axes(a.rank(), a_axes)?;
    check_axes(b.rank(), b_axes)?;
    for (&x, &y) in a_axes.iter().zip(b_axes) {
        if a.dims()[x] != b.dims()[y] {
            return Err(TntError::IncompatibleLegs(format!(
                "axis {x} has dimension {} but axis {y} has {}",
                a.dims()[x],
                b.dims()[y]
            )));
        }
    }
    let a_free: Vec<usize> = (0..a.rank()).filter(|k| !a_axes.contains(k)).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|k| !b_axes.contains(k)).collect();
    let mut a_order = a_free.clone();
    a_order.extend(a_axes);
    let mut b_order = b_axes.to_vec();
    b_order.extend(&b_free);
    let ap = permuted(a, &a_order, cache)?;
    let bp = permuted(b, &b_order, cache)?;
    let m: usize = a_free.iter().map(|&k| a.dims()[k]).product();
    let k: usize = a_axes.iter().map(|&x| a.dims()[x]).product();
    let n: usize = b_free.iter().map(|&x| b.dims()[x]).product();
    let av = ArrayView2::from_shape((m, k), ap.values()).expect("left operand shape");
    let bv = ArrayView2::from_shape((k, n), bp.values()).expect("right operand shape");
    let c = contract_matrices(av, bv)?;
    let mut dims: Vec<usize> = a_free.iter().map(|&x| a.dims()[x]).collect();
    dims.extend(b_free.iter().map(|&x| b.dims()[x]));
    DenseTensor::new(c.into_raw_vec_and_offset().0, dims)
}

fn trace_dense(t: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let xs: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mut all = xs.clone();
    all.extend(&ys);
    check_axes(t.rank(), &all)?;
    for &(x, y) in pairs {
        if t.dims()[x] != t.dims()[y] {
            return Err(TntError::IncompatibleLegs(format!("cannot trace axes of dimension {} and {}", t.dims()[x], t.dims()[y])));
        }
    }
    let rest: Vec<usize> = (0..t.rank()).filter(|k| !all.contains(k)).collect();
    let mut order = rest.clone();
    order.extend(&all);
    let p = t.permute(&order, None)?;
    let block: usize = xs.iter().map(|&x| t.dims()[x]).product();
    let outer: usize = rest.iter().map(|&x| t.dims()[x]).product();
    let v = p.values();
    let values: Vec<C64> = (0..outer)
        .map(|r| (0..block).map(|i| v[r * block * block + i * block + i]).sum())
        .collect();
    DenseTensor::new(values, rest.iter().map(|&x| t.dims()[x]).collect())
}

/// Copies `src` into `dst` shifted by `shift` along each axis.
fn place(src: &DenseTensor, dst: &mut [C64], dst_dims: &[usize], shift: &[usize]) {
    let rank = src.rank();
    let strides = crate::dense::row_major_strides(dst_dims);
    let mut idx = vec![0usize; rank];
    for &v in src.values() {
        let off: usize = (0..rank).map(|k| (idx[k] + shift[k]) * strides[k]).sum();
        dst[off] = v;
        for k in (0..rank).rev() {
            idx[k] += 1;
            if idx[k] < src.dims()[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn direct_sum_dense(a: &DenseTensor, b: &DenseTensor, axes: &[usize]) -> Result<DenseTensor> {
    if a.rank() != b.rank() {
        return Err(TntError::IncompatibleNodes(format!("ranks {} and {} differ", a.rank(), b.rank())));
    }
    check_axes(a.rank(), axes)?;
    let mut dims = a.dims().to_vec();
    let mut shift = vec![0; a.rank()];
    for k in 0..a.rank() {
        if axes.contains(&k) {
            dims[k] += b.dims()[k];
            shift[k] = a.dims()[k];
        } else if a.dims()[k] != b.dims()[k] {
            return Err(TntError::IncompatibleNodes(format!(
                "axis {k} is not expanded but has dimensions {} and {}",
                a.dims()[k],
                b.dims()[k]
            )));
        }
    }
    let mut values = vec![C64::new(0.0, 0.0); dims.iter().product()];
    place(a, &mut values, &dims, &vec![0; a.rank()]);
    place(b, &mut values, &dims, &shift);
    DenseTensor::new(values, dims)
}

impl Tensor {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Tensor::Dense(t) => t.dims().to_vec(),
            Tensor::Block(t) => t.dims(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Tensor::Dense(t) => t.rank(),
            Tensor::Block(t) => t.rank(),
        }
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, Tensor::Block(_))
    }

    pub fn charges(&self) -> Option<&[ChargedIndex]> {
        match self {
            Tensor::Dense(_) => None,
            Tensor::Block(t) => Some(t.indices()),
        }
    }

    pub fn to_dense(&self) -> Cow<'_, DenseTensor> {
        match self {
            Tensor::Dense(t) => Cow::Borrowed(t),
            Tensor::Block(t) => Cow::Owned(t.to_dense()),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Tensor::Dense(t) => t.frobenius_norm(),
            Tensor::Block(t) => t.frobenius_norm(),
        }
    }

    pub fn conj(&self) -> Tensor {
        match self {
            Tensor::Dense(t) => Tensor::Dense(t.conj()),
            Tensor::Block(t) => Tensor::Block(t.conj()),
        }
    }

    pub fn scale(&self, factor: C64) -> Tensor {
        match self {
            Tensor::Dense(t) => Tensor::Dense(t.scale(factor)),
            Tensor::Block(t) => Tensor::Block(t.scale(factor)),
        }
    }

    pub fn add(&self, other: &Tensor, cache: Option<&ReshapeCache>) -> Result<Tensor> {
        match (self, other) {
            (Tensor::Dense(a), Tensor::Dense(b)) => Ok(Tensor::Dense(a.add(b)?)),
            (Tensor::Block(a), Tensor::Block(b)) => Ok(Tensor::Block(a.add(b, cache)?)),
            _ => Err(TntError::IncompatibleNodes("cannot add a dense and a blocked tensor".into())),
        }
    }

    /// Result axis `k` is input axis `order[k]`.
    pub fn permute(&self, order: &[usize], cache: Option<&ReshapeCache>) -> Result<Tensor> {
        match self {
            Tensor::Dense(t) => Ok(Tensor::Dense(t.permute(order, cache)?)),
            Tensor::Block(t) => Ok(Tensor::Block(t.permute(order)?)),
        }
    }

    /// Sums over axis pairs; result axes are the free axes of `a` then of `b`.
    pub fn contract(a: &Tensor, a_axes: &[usize], b: &Tensor, b_axes: &[usize], cache: Option<&ReshapeCache>) -> Result<Tensor> {
        match (a, b) {
            (Tensor::Dense(x), Tensor::Dense(y)) => Ok(Tensor::Dense(contract_dense(x, a_axes, y, b_axes, cache)?)),
            (Tensor::Block(x), Tensor::Block(y)) => Ok(Tensor::Block(BlockTensor::contract(x, a_axes, y, b_axes, cache)?)),
            _ => Err(TntError::IncompatibleNodes("cannot contract a dense with a blocked tensor".into())),
        }
    }

    pub fn partial_trace(&self, pairs: &[(usize, usize)]) -> Result<Tensor> {
        if pairs.is_empty() {
            return Ok(self.clone());
        }
        match self {
            Tensor::Dense(t) => Ok(Tensor::Dense(trace_dense(t, pairs)?)),
            Tensor::Block(t) => Ok(Tensor::Block(t.partial_trace(pairs)?)),
        }
    }

    pub fn insert_singleton(&self, pos: usize, index: Option<ChargedIndex>) -> Result<Tensor> {
        match self {
            Tensor::Dense(t) => {
                if pos > t.rank() {
                    return Err(invalid(format!("axis position {pos} beyond rank {}", t.rank())));
                }
                let mut dims = t.dims().to_vec();
                dims.insert(pos, 1);
                Ok(Tensor::Dense(t.reshape(dims)?))
            }
            Tensor::Block(t) => {
                let index = match index {
                    Some(i) => i,
                    None => ChargedIndex::new(Direction::In, vec![Qn::zero(t.m())])?,
                };
                Ok(Tensor::Block(t.insert_singleton(pos, index)?))
            }
        }
    }

    pub fn remove_singleton(&self, pos: usize) -> Result<Tensor> {
        match self {
            Tensor::Dense(t) => {
                if pos >= t.rank() || t.dims()[pos] != 1 {
                    return Err(invalid(format!("axis {pos} is not a singleton")));
                }
                let mut dims = t.dims().to_vec();
                dims.remove(pos);
                Ok(Tensor::Dense(t.reshape(dims)?))
            }
            Tensor::Block(t) => Ok(Tensor::Block(t.remove_singleton(pos)?)),
        }
    }

    /// Merges `count` consecutive axes starting at `first` into one.
    pub fn merge_axes(&self, first: usize, count: usize, cache: Option<&ReshapeCache>) -> Result<Tensor> {
        match self {
            Tensor::Dense(t) => {
                if count == 0 || first + count > t.rank() {
                    return Err(invalid("merge range out of bounds"));
                }
                let d = t.dims();
                let mut dims = d[..first].to_vec();
                dims.push(d[first..first + count].iter().product());
                dims.extend(&d[first + count..]);
                Ok(Tensor::Dense(t.reshape(dims)?))
            }
            Tensor::Block(t) => Ok(Tensor::Block(t.merge_axes(first, count, cache)?)),
        }
    }

    /// Block-diagonal sum along `axes`; other axes must agree.
    pub fn direct_sum(a: &Tensor, b: &Tensor, axes: &[usize]) -> Result<Tensor> {
        match (a, b) {
            (Tensor::Dense(x), Tensor::Dense(y)) => Ok(Tensor::Dense(direct_sum_dense(x, y, axes)?)),
            (Tensor::Block(x), Tensor::Block(y)) => {
                if x.flux() != y.flux() || x.rank() != y.rank() {
                    return Err(TntError::IncompatibleNodes("direct sum needs equal flux and rank".into()));
                }
                let mut indices = Vec::with_capacity(x.rank());
                for k in 0..x.rank() {
                    let (ix, iy) = (&x.indices()[k], &y.indices()[k]);
                    if ix.direction() != iy.direction() {
                        return Err(TntError::IncompatibleNodes(format!("axis {k} directions differ")));
                    }
                    if axes.contains(&k) {
                        let mut labels = ix.labels().to_vec();
                        labels.extend_from_slice(iy.labels());
                        indices.push(ChargedIndex::new(ix.direction(), labels)?);
                    } else if !ix.same_labels(iy) {
                        return Err(TntError::IncompatibleNodes(format!("axis {k} is not expanded but its labels differ")));
                    } else {
                        indices.push(ix.clone());
                    }
                }
                let dense = direct_sum_dense(&x.to_dense(), &y.to_dense(), axes)?;
                let (t, discarded) = BlockTensor::from_dense(&dense, indices, x.flux())?;
                debug_assert_eq!(discarded, 0.0);
                Ok(Tensor::Block(t))
            }
            _ => Err(TntError::IncompatibleNodes("cannot sum a dense and a blocked tensor".into())),
        }
    }

    /// Flattened values: dense order, or concatenated allowed sectors.
    pub fn flat_values(&self) -> Vec<C64> {
        match self {
            Tensor::Dense(t) => t.values().to_vec(),
            Tensor::Block(t) => t.flat_values(),
        }
    }

    /// Flattened values laid out like `template`, which must have the same
    /// axes (and charges) but may store its blocks under another partition.
    pub fn flat_values_like(&self, template: &Tensor, cache: Option<&ReshapeCache>) -> Result<Vec<C64>> {
        match (self, template) {
            (Tensor::Dense(a), Tensor::Dense(t)) if a.dims() == t.dims() => Ok(a.values().to_vec()),
            (Tensor::Block(a), Tensor::Block(t)) if a.indices() == t.indices() && a.flux() == t.flux() => {
                let (rows, cols) = t.partition();
                Ok(a.repartition(rows, cols, cache)?.flat_values())
            }
            _ => Err(TntError::IncompatibleNodes("tensor does not match the template layout".into())),
        }
    }

    /// Same structure, new flattened values.
    pub fn with_flat_values(&self, values: &[C64]) -> Result<Tensor> {
        match self {
            Tensor::Dense(t) => Ok(Tensor::Dense(DenseTensor::new(values.to_vec(), t.dims().to_vec())?)),
            Tensor::Block(t) => Ok(Tensor::Block(t.with_flat_values(values)?)),
        }
    }

    /// Truncated SVD splitting `rows` from `cols`. For blocked tensors each
    /// sector is decomposed separately and the largest values across all
    /// sectors are kept.
    pub fn svd(
        &self,
        rows: &[usize],
        cols: &[usize],
        policy: &TruncationPolicy,
        settings: &SvdSettings,
        cache: Option<&ReshapeCache>,
    ) -> Result<SvdParts> {
        let mut all = rows.to_vec();
        all.extend(cols);
        check_axes(self.rank(), &all)?;
        if all.len() != self.rank() {
            return Err(invalid("row and column axes must cover every axis"));
        }
        match self {
            Tensor::Dense(t) => svd_dense(t, rows, cols, policy, settings, cache),
            Tensor::Block(t) => svd_blocked(t, rows, cols, policy, settings, cache),
        }
    }
}

fn svd_dense(
    t: &DenseTensor,
    rows: &[usize],
    cols: &[usize],
    policy: &TruncationPolicy,
    settings: &SvdSettings,
    cache: Option<&ReshapeCache>,
) -> Result<SvdParts> {
    let mut order = rows.to_vec();
    order.extend(cols);
    let p = permuted(t, &order, cache)?;
    let row_dims: Vec<usize> = rows.iter().map(|&a| t.dims()[a]).collect();
    let col_dims: Vec<usize> = cols.iter().map(|&a| t.dims()[a]).collect();
    let nr: usize = row_dims.iter().product();
    let nc: usize = col_dims.iter().product();
    let m = ArrayView2::from_shape((nr, nc), p.values()).expect("svd matrix shape");
    let r = truncated_svd(m, policy, settings)?;
    let k = r.spectrum.kept_dim();
    let mut udims = row_dims;
    udims.push(k);
    let mut vdims = vec![k];
    vdims.extend(col_dims);
    let kept: Vec<C64> = r.spectrum.kept().iter().map(|&v| C64::new(v, 0.0)).collect();
    Ok(SvdParts {
        u: Tensor::Dense(DenseTensor::new(r.u.as_standard_layout().iter().copied().collect(), udims)?),
        s: Tensor::Dense(DenseTensor::diagonal(&kept)),
        vdag: Tensor::Dense(DenseTensor::new(r.vdag.as_standard_layout().iter().copied().collect(), vdims)?),
        bond_values: r.spectrum.kept().to_vec(),
        spectrum: r.spectrum,
    })
}

fn svd_blocked(
    t: &BlockTensor,
    rows: &[usize],
    cols: &[usize],
    policy: &TruncationPolicy,
    settings: &SvdSettings,
    cache: Option<&ReshapeCache>,
) -> Result<SvdParts> {
    let m = t.repartition(rows, cols, cache)?;
    let mut sectors: Vec<(Qn, Array2<C64>, Vec<f64>, Array2<C64>)> = Vec::new();
    for (q, block) in m.blocks() {
        if block.is_empty() {
            continue;
        }
        let (u, s, vt) = svd_decompose(block.view(), settings.variant)?;
        sectors.push((*q, u, s, vt));
    }
    let mut all: Vec<(f64, usize, usize)> = sectors
        .iter()
        .enumerate()
        .flat_map(|(k, sec)| sec.2.iter().enumerate().map(move |(i, &v)| (v, k, i)))
        .collect();
    all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let row_idx: Vec<ChargedIndex> = rows.iter().map(|&a| t.indices()[a].clone()).collect();
    let col_idx: Vec<ChargedIndex> = cols.iter().map(|&a| t.indices()[a].clone()).collect();
    let nrow = rows.len();
    let ncol = cols.len();

    let mut kept_per: BTreeMap<usize, usize> = BTreeMap::new();
    let (values, keep) = if all.is_empty() {
        // zero tensor: one zero singular value in the first allowed sector
        let (q, nr, nc) = *m
            .allowed_blocks()
            .first()
            .ok_or_else(|| TntError::DecompositionFailed("tensor has no symmetry-allowed elements".into()))?;
        let mut u = Array2::zeros((nr, 1));
        u[[0, 0]] = C64::new(1.0, 0.0);
        let mut vt = Array2::zeros((1, nc));
        vt[[0, 0]] = C64::new(1.0, 0.0);
        sectors.push((q, u, vec![0.0], vt));
        kept_per.insert(0, 1);
        (vec![0.0], 1)
    } else {
        let values: Vec<f64> = all.iter().map(|x| x.0).collect();
        let keep = choose_kept_dim(&values, policy);
        for &(_, k, _) in &all[..keep] {
            *kept_per.entry(k).or_default() += 1;
        }
        (values, keep)
    };
    let err = policy.error(&values[keep..]);

    let mut labels = Vec::new();
    let mut bond_values = Vec::new();
    let mut ublocks = BTreeMap::new();
    let mut sblocks = BTreeMap::new();
    let mut vblocks = BTreeMap::new();
    for (k, (q, u, s, vt)) in sectors.iter().enumerate() {
        let Some(&n) = kept_per.get(&k) else { continue };
        labels.extend(std::iter::repeat_n(*q, n));
        bond_values.extend_from_slice(&s[..n]);
        ublocks.insert(*q, u.slice(s![.., ..n]).to_owned());
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            d[[i, i]] = C64::new(s[i], 0.0);
        }
        sblocks.insert(*q, d);
        vblocks.insert(*q, vt.slice(s![..n, ..]).to_owned());
    }
    let bond_out = ChargedIndex::new(Direction::Out, labels)?;
    let bond_in = bond_out.flipped();
    let zero = Qn::zero(t.m());

    let mut uidx = row_idx;
    uidx.push(bond_out.clone());
    let u = BlockTensor::from_blocks(uidx, zero, (0..nrow).collect(), vec![nrow], ublocks)?;
    let sm = BlockTensor::from_blocks(vec![bond_in.clone(), bond_out], zero, vec![0], vec![1], sblocks)?;
    let mut vidx = vec![bond_in];
    vidx.extend(col_idx);
    let vdag = BlockTensor::from_blocks(vidx, t.flux(), vec![0], (1..=ncol).collect(), vblocks)?;
    Ok(SvdParts {
        u: Tensor::Block(u),
        s: Tensor::Block(sm),
        vdag: Tensor::Block(vdag),
        spectrum: SingularSpectrum::new(values, keep, err),
        bond_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diff(a: &Tensor, b: &Tensor) -> f64 {
        let (x, y) = (a.to_dense(), b.to_dense());
        assert_eq!(x.dims(), y.dims());
        x.values().iter().zip(y.values()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt()
    }

    fn random_index(rng: &mut ChaCha8Rng, dim: usize, dir: Direction) -> ChargedIndex {
        let charges: Vec<i32> = (0..dim).map(|_| rng.random_range(0..3)).collect();
        ChargedIndex::from_charges(dir, &charges).unwrap()
    }

    #[test]
    fn dense_contraction_matches_nested_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseTensor::random(vec![2, 3, 4], &mut rng).unwrap();
        let b = DenseTensor::random(vec![4, 5, 2, 3], &mut rng).unwrap();
        // sum over a1=b3 and a2=b0
        let c = Tensor::contract(&a.clone().into(), &[1, 2], &b.clone().into(), &[3, 0], None).unwrap();
        let c = c.to_dense();
        assert_eq!(c.dims(), &[2, 5, 2]);
        for i in 0..2 {
            for j in 0..5 {
                for k in 0..2 {
                    let mut acc = C64::new(0.0, 0.0);
                    for x in 0..3 {
                        for y in 0..4 {
                            acc += a.get(&[i, x, y]).unwrap() * b.get(&[y, j, k, x]).unwrap();
                        }
                    }
                    assert!((c.get(&[i, j, k]).unwrap() - acc).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn outer_product_and_full_contraction() {
        let a = DenseTensor::from_real(vec![1.0, 2.0], vec![2]).unwrap();
        let b = DenseTensor::from_real(vec![3.0, 4.0, 5.0], vec![3]).unwrap();
        let c = Tensor::contract(&a.clone().into(), &[], &b.into(), &[], None).unwrap();
        assert_eq!(c.dims(), vec![2, 3]);
        assert_eq!(c.to_dense().get(&[1, 2]).unwrap(), C64::new(10.0, 0.0));
        let s = Tensor::contract(&a.clone().into(), &[0], &a.into(), &[0], None).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.to_dense().values()[0], C64::new(5.0, 0.0));
    }

    #[test]
    fn dense_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = DenseTensor::random(vec![3, 2, 3], &mut rng).unwrap();
        let r = Tensor::Dense(t.clone()).partial_trace(&[(0, 2)]).unwrap();
        for j in 0..2 {
            let acc: C64 = (0..3).map(|k| t.get(&[k, j, k]).unwrap()).sum();
            assert!((r.to_dense().get(&[j]).unwrap() - acc).norm() < 1e-14);
        }
    }

    #[test]
    fn direct_sum_contains_operands() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DenseTensor::random(vec![2, 3, 2], &mut rng).unwrap();
        let b = DenseTensor::random(vec![3, 3, 1], &mut rng).unwrap();
        let s = Tensor::direct_sum(&a.clone().into(), &b.clone().into(), &[0, 2]).unwrap();
        let d = s.to_dense();
        assert_eq!(d.dims(), &[5, 3, 3]);
        for i in 0..5 {
            for j in 0..3 {
                for k in 0..3 {
                    let v = d.get(&[i, j, k]).unwrap();
                    let expect = if i < 2 && k < 2 {
                        a.get(&[i, j, k]).unwrap()
                    } else if i >= 2 && k >= 2 {
                        b.get(&[i - 2, j, k - 2]).unwrap()
                    } else {
                        C64::new(0.0, 0.0)
                    };
                    assert_eq!(v, expect);
                }
            }
        }
        let bad = DenseTensor::random(vec![2, 4, 2], &mut rng).unwrap();
        assert!(matches!(
            Tensor::direct_sum(&a.into(), &bad.into(), &[0]),
            Err(TntError::IncompatibleNodes(_))
        ));
    }

    fn reconstruct(p: &SvdParts) -> Tensor {
        let r = p.u.rank();
        let us = Tensor::contract(&p.u, &[r - 1], &p.s, &[0], None).unwrap();
        Tensor::contract(&us, &[r - 1], &p.vdag, &[0], None).unwrap()
    }

    #[test]
    fn dense_svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = Tensor::Dense(DenseTensor::random(vec![2, 3, 4], &mut rng).unwrap());
        let p = t.svd(&[2, 0], &[1], &TruncationPolicy::exact(), &SvdSettings::default(), None).unwrap();
        let back = reconstruct(&p).permute(&[1, 2, 0], None).unwrap();
        assert!(diff(&back, &t) < 1e-12 * t.frobenius_norm());
    }

    #[test]
    fn blocked_svd_matches_dense_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let idx = vec![
                random_index(&mut rng, 3, Direction::In),
                random_index(&mut rng, 2, Direction::In),
                random_index(&mut rng, 4, Direction::Out),
            ];
            let b = BlockTensor::random(idx, Qn::single(trial % 2), &mut rng).unwrap();
            let tb = Tensor::Block(b.clone());
            let td = Tensor::Dense(b.to_dense());
            for chi in [1usize, 2, 3, 100] {
                let policy = TruncationPolicy::exact().with_max_dim(chi);
                let pb = tb.svd(&[0, 2], &[1], &policy, &SvdSettings::default(), None).unwrap();
                let pd = td.svd(&[0, 2], &[1], &policy, &SvdSettings::default(), None).unwrap();
                let nz: Vec<f64> = pd.spectrum.values().iter().copied().filter(|&v| v > 1e-12).collect();
                let nb: Vec<f64> = pb.spectrum.values().iter().copied().filter(|&v| v > 1e-12).collect();
                assert_eq!(nz.len(), nb.len());
                for (x, y) in nz.iter().zip(&nb) {
                    assert!((x - y).abs() < 1e-10);
                }
                if pb.spectrum.kept().iter().all(|&v| v > 1e-12) && pd.spectrum.kept_dim() == pb.spectrum.kept_dim() {
                    let err_b = diff(&reconstruct(&pb), &td.permute(&[0, 2, 1], None).unwrap());
                    assert!((err_b - pb.spectrum.truncation_error()).abs() < 1e-10);
                }
                if let (Tensor::Block(u), Tensor::Block(v)) = (&pb.u, &pb.vdag) {
                    u.check_invariants().unwrap();
                    v.check_invariants().unwrap();
                    assert_eq!(v.flux(), b.flux());
                }
            }
        }
    }

    #[test]
    fn blocked_direct_sum_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_index(&mut rng, 2, Direction::In);
        let a = BlockTensor::random(
            vec![random_index(&mut rng, 2, Direction::In), p.clone(), random_index(&mut rng, 3, Direction::Out)],
            Qn::single(0),
            &mut rng,
        )
        .unwrap();
        let b = BlockTensor::random(
            vec![random_index(&mut rng, 1, Direction::In), p, random_index(&mut rng, 2, Direction::Out)],
            Qn::single(0),
            &mut rng,
        )
        .unwrap();
        let s = Tensor::direct_sum(&a.clone().into(), &b.clone().into(), &[0, 2]).unwrap();
        let d = direct_sum_dense(&a.to_dense(), &b.to_dense(), &[0, 2]).unwrap();
        assert_eq!(*s.to_dense(), d);
    }

    #[test]
    fn flat_values_round_trip_both_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Tensor::Dense(DenseTensor::random(vec![2, 2], &mut rng).unwrap());
        assert_eq!(d.with_flat_values(&d.flat_values()).unwrap(), d);
        let idx = vec![random_index(&mut rng, 3, Direction::In), random_index(&mut rng, 3, Direction::Out)];
        let b = Tensor::Block(BlockTensor::random(idx, Qn::single(0), &mut rng).unwrap());
        assert_eq!(*b.with_flat_values(&b.flat_values()).unwrap().to_dense(), *b.to_dense());
    }
}
