//! U(1) block-sparse tensors.
//!
//! Every index carries a direction and one quantum-number label per index
//! value. Elements survive only where incoming charge minus outgoing charge
//! plus the tensor flux vanishes. Nonzero elements are stored as dense
//! matrices, one per charge sector, for some split of the axes into row axes
//! and column axes; the sector key is the net charge of the row axes. The
//! canonical split puts every incoming axis on the rows, so canonical blocks
//! are keyed by total incoming charge.

use std::borrow::Cow;
use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Neg, Sub};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cache::{ReshapeCache, SectorKey};
use crate::dense::{row_major_strides, DenseTensor, C64};
use crate::error::{invalid, Result, TntError};
use crate::linalg::{contract_matrices, Backend};

pub const MAX_QN: usize = 4;

/// Quantum-number label: a tuple of `m` integer charges.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Qn {
    len: u8,
    c: [i32; MAX_QN],
}

impl Qn {
    pub fn new(charges: &[i32]) -> Result<Self> {
        if charges.is_empty() || charges.len() > MAX_QN {
            return Err(invalid(format!("a label needs 1..={MAX_QN} charges, got {}", charges.len())));
        }
        let mut c = [0; MAX_QN];
        c[..charges.len()].copy_from_slice(charges);
        Ok(Self { len: charges.len() as u8, c })
    }

    pub fn zero(m: usize) -> Self {
        assert!((1..=MAX_QN).contains(&m), "label length {m}");
        Self { len: m as u8, c: [0; MAX_QN] }
    }

    pub fn single(q: i32) -> Self {
        Self::new(&[q]).unwrap()
    }

    pub fn charges(&self) -> &[i32] {
        &self.c[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&x| x == 0)
    }

    fn times(self, sign: i32) -> Self {
        let mut c = self.c;
        c.iter_mut().for_each(|x| *x *= sign);
        Self { len: self.len, c }
    }
}

impl Add for Qn {
    type Output = Qn;
    fn add(self, rhs: Qn) -> Qn {
        debug_assert_eq!(self.len, rhs.len);
        let mut c = self.c;
        for (x, y) in c.iter_mut().zip(rhs.c) {
            *x += y;
        }
        Qn { len: self.len, c }
    }
}

impl Sub for Qn {
    type Output = Qn;
    fn sub(self, rhs: Qn) -> Qn {
        self + (-rhs)
    }
}

impl Neg for Qn {
    type Output = Qn;
    fn neg(self) -> Qn {
        self.times(-1)
    }
}

impl fmt::Debug for Qn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.charges().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Qn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn sign(self) -> i32 {
        match self {
            Direction::In => 1,
            Direction::Out => -1,
        }
    }

    pub fn flip(self) -> Direction {
        match self {
            Direction::In => Direction::Out,
            Direction::Out => Direction::In,
        }
    }
}

/// Index with a direction and one label per index value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChargedIndex {
    direction: Direction,
    labels: Arc<Vec<Qn>>,
}

impl ChargedIndex {
    pub fn new(direction: Direction, labels: Vec<Qn>) -> Result<Self> {
        let Some(first) = labels.first() else {
            return Err(invalid("a charged index needs at least one label"));
        };
        let m = first.len();
        if labels.iter().any(|l| l.len() != m) {
            return Err(invalid("labels on one index must all have the same number of charges"));
        }
        Ok(Self { direction, labels: Arc::new(labels) })
    }

    /// Single-component labels.
    pub fn from_charges(direction: Direction, charges: &[i32]) -> Result<Self> {
        Self::new(direction, charges.iter().map(|&q| Qn::single(q)).collect())
    }

    /// Parses rows of comma-separated charges separated by `;`, one row per
    /// component, e.g. `"0,0,0,1,1,1;0,1,2,0,1,2"`.
    pub fn parse(direction: Direction, spec: &str) -> Result<Self> {
        let rows: Vec<Vec<i32>> = spec
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|x| x.trim().parse::<i32>().map_err(|e| invalid(format!("bad charge '{x}': {e}"))))
                    .collect::<Result<Vec<i32>>>()
            })
            .collect::<Result<_>>()?;
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("all charge rows must have equal length"));
        }
        let labels = (0..dim)
            .map(|i| Qn::new(&rows.iter().map(|r| r[i]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(direction, labels)
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn labels(&self) -> &[Qn] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.labels[0].len()
    }

    pub fn flipped(&self) -> Self {
        Self { direction: self.direction.flip(), labels: self.labels.clone() }
    }

    pub fn with_direction(&self, direction: Direction) -> Self {
        Self { direction, labels: self.labels.clone() }
    }

    /// Charge contributed by index value `i` (positive when incoming).
    pub fn signed(&self, i: usize) -> Qn {
        self.labels[i].times(self.direction.sign())
    }

    /// Same labels, possibly different direction.
    pub fn same_labels(&self, other: &ChargedIndex) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }

    /// Can be contracted with `other`: equal labels, opposite directions.
    pub fn pairs_with(&self, other: &ChargedIndex) -> bool {
        self.direction != other.direction && self.same_labels(other)
    }
}

/// Charges of every multi-index over a list of axes, grouped by net charge.
pub(crate) struct SectorSpace {
    pub sectors: Vec<(Qn, Vec<u32>)>,
    pub pos: Vec<(u32, u32)>,
}

impl SectorSpace {
    pub fn build(indices: &[ChargedIndex], axes: &[usize], m: usize) -> Self {
        let mut charges = vec![Qn::zero(m)];
        for &a in axes {
            let idx = &indices[a];
            let mut next = Vec::with_capacity(charges.len() * idx.dim());
            for &c in &charges {
                for i in 0..idx.dim() {
                    next.push(c + idx.signed(i));
                }
            }
            charges = next;
        }
        let mut map: BTreeMap<Qn, Vec<u32>> = BTreeMap::new();
        for (off, q) in charges.iter().enumerate() {
            map.entry(*q).or_default().push(off as u32);
        }
        let sectors: Vec<(Qn, Vec<u32>)> = map.into_iter().collect();
        let mut pos = vec![(0u32, 0u32); charges.len()];
        for (s, (_, offs)) in sectors.iter().enumerate() {
            for (rank, &off) in offs.iter().enumerate() {
                pos[off as usize] = (s as u32, rank as u32);
            }
        }
        Self { sectors, pos }
    }

    pub fn find(&self, q: &Qn) -> Option<usize> {
        self.sectors.binary_search_by(|(k, _)| k.cmp(q)).ok()
    }

    pub fn size(&self, q: &Qn) -> usize {
        self.find(q).map_or(0, |s| self.sectors[s].1.len())
    }
}

/// Contribution of each multi-index over `axes` to offsets in two other layouts.
/// `weights[k]` is `(to_first, to_second)` for axis `axes[k]`.
fn offset_parts(dims: &[usize], weights: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut first = vec![0usize];
    let mut second = vec![0usize];
    for (&d, &(w1, w2)) in dims.iter().zip(weights) {
        let mut nf = Vec::with_capacity(first.len() * d);
        let mut ns = Vec::with_capacity(first.len() * d);
        for (&f, &s) in first.iter().zip(&second) {
            for i in 0..d {
                nf.push(f + i * w1);
                ns.push(s + i * w2);
            }
        }
        first = nf;
        second = ns;
    }
    (first, second)
}

/// Precomputed element moves between two row/column partitions of one charge structure.
#[derive(Debug)]
pub struct RepartitionPlan {
    targets: Vec<(Qn, usize, usize)>,
    sources: BTreeMap<Qn, SourceMoves>,
}

#[derive(Debug)]
struct SourceMoves {
    shape: (usize, usize),
    touched: Vec<u32>,
    moves: Vec<(u32, u32)>,
}

/// Dense block of one charge sector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTensor {
    indices: Vec<ChargedIndex>,
    flux: Qn,
    rows: Vec<usize>,
    cols: Vec<usize>,
    blocks: BTreeMap<Qn, Array2<C64>>,
}

fn canonical_partition(indices: &[ChargedIndex]) -> (Vec<usize>, Vec<usize>) {
    let rows = (0..indices.len()).filter(|&a| indices[a].direction() == Direction::In).collect();
    let cols = (0..indices.len()).filter(|&a| indices[a].direction() == Direction::Out).collect();
    (rows, cols)
}

fn validate_indices(indices: &[ChargedIndex], flux: &Qn) -> Result<usize> {
    let m = flux.len();
    if let Some(bad) = indices.iter().position(|i| i.m() != m) {
        return Err(invalid(format!(
            "index {bad} has labels with {} charges but the flux has {m}",
            indices[bad].m()
        )));
    }
    Ok(m)
}

impl BlockTensor {
    pub fn zeros(indices: Vec<ChargedIndex>, flux: Qn) -> Result<Self> {
        validate_indices(&indices, &flux)?;
        let (rows, cols) = canonical_partition(&indices);
        Ok(Self { indices, flux, rows, cols, blocks: BTreeMap::new() })
    }

    /// All symmetry-allowed elements drawn from a complex Gaussian.
    pub fn random<R: Rng + ?Sized>(indices: Vec<ChargedIndex>, flux: Qn, rng: &mut R) -> Result<Self> {
        let mut t = Self::zeros(indices, flux)?;
        t.fill_structure();
        for block in t.blocks.values_mut() {
            block.mapv_inplace(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        }
        Ok(t)
    }

    /// Keeps the symmetry-allowed elements of `t` and reports the Frobenius norm
    /// of the discarded ones. All-zero sectors are not stored.
    pub fn from_dense(t: &DenseTensor, indices: Vec<ChargedIndex>, flux: Qn) -> Result<(Self, f64)> {
        let m = validate_indices(&indices, &flux)?;
        if indices.len() != t.rank() || indices.iter().zip(t.dims()).any(|(i, &d)| i.dim() != d) {
            return Err(invalid(format!(
                "charges {:?} do not match tensor dims {:?}",
                indices.iter().map(ChargedIndex::dim).collect::<Vec<_>>(),
                t.dims()
            )));
        }
        let (rows, cols) = canonical_partition(&indices);
        let rspace = SectorSpace::build(&indices, &rows, m);
        let cspace = SectorSpace::build(&indices, &cols, m);
        let strides = row_major_strides(t.dims());
        let dims = t.dims();
        let (rpart, _) =
            offset_parts(&rows.iter().map(|&a| dims[a]).collect::<Vec<_>>(), &rows.iter().map(|&a| (strides[a], 0)).collect::<Vec<_>>());
        let (cpart, _) =
            offset_parts(&cols.iter().map(|&a| dims[a]).collect::<Vec<_>>(), &cols.iter().map(|&a| (strides[a], 0)).collect::<Vec<_>>());
        let values = t.values();
        let mut blocks = BTreeMap::new();
        for (q, roffs) in &rspace.sectors {
            let want = -self_flux_plus(flux, *q);
            let Some(cs) = cspace.find(&want) else { continue };
            let coffs = &cspace.sectors[cs].1;
            let mut block = Array2::<C64>::zeros((roffs.len(), coffs.len()));
            let mut nonzero = false;
            for (i, &r) in roffs.iter().enumerate() {
                for (j, &c) in coffs.iter().enumerate() {
                    let v = values[rpart[r as usize] + cpart[c as usize]];
                    nonzero |= v != C64::new(0.0, 0.0);
                    block[[i, j]] = v;
                }
            }
            if nonzero {
                blocks.insert(*q, block);
            }
        }
        let mut discarded = 0.0;
        for (r, &(rs, _)) in rspace.pos.iter().enumerate() {
            let qr = rspace.sectors[rs as usize].0;
            for (c, &(cs, _)) in cspace.pos.iter().enumerate() {
                let qc = cspace.sectors[cs as usize].0;
                if !(qr + qc + flux).is_zero() {
                    discarded += values[rpart[r] + cpart[c]].norm_sqr();
                }
            }
        }
        Ok((Self { indices, flux, rows, cols, blocks }, discarded.sqrt()))
    }

    pub fn to_dense(&self) -> DenseTensor {
        let dims = self.dims();
        let strides = row_major_strides(&dims);
        let mut values = vec![C64::new(0.0, 0.0); dims.iter().product()];
        let (rpart, _) = offset_parts(
            &self.rows.iter().map(|&a| dims[a]).collect::<Vec<_>>(),
            &self.rows.iter().map(|&a| (strides[a], 0)).collect::<Vec<_>>(),
        );
        let (cpart, _) = offset_parts(
            &self.cols.iter().map(|&a| dims[a]).collect::<Vec<_>>(),
            &self.cols.iter().map(|&a| (strides[a], 0)).collect::<Vec<_>>(),
        );
        if !self.blocks.is_empty() {
            let m = self.flux.len();
            let rspace = SectorSpace::build(&self.indices, &self.rows, m);
            let cspace = SectorSpace::build(&self.indices, &self.cols, m);
            for (q, block) in &self.blocks {
                let roffs = &rspace.sectors[rspace.find(q).expect("row sector")].1;
                let cq = -self_flux_plus(self.flux, *q);
                let coffs = &cspace.sectors[cspace.find(&cq).expect("column sector")].1;
                for (i, &r) in roffs.iter().enumerate() {
                    for (j, &c) in coffs.iter().enumerate() {
                        values[rpart[r as usize] + cpart[c as usize]] = block[[i, j]];
                    }
                }
            }
        }
        DenseTensor::new(values, dims).expect("dense dims")
    }

    pub fn indices(&self) -> &[ChargedIndex] {
        &self.indices
    }

    pub fn flux(&self) -> Qn {
        self.flux
    }

    pub fn m(&self) -> usize {
        self.flux.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.indices.iter().map(ChargedIndex::dim).collect()
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn partition(&self) -> (&[usize], &[usize]) {
        (&self.rows, &self.cols)
    }

    /// Blocks under the current partition, keyed by the net charge of the row axes.
    pub fn blocks(&self) -> &BTreeMap<Qn, Array2<C64>> {
        &self.blocks
    }

    /// Blocks keyed by total incoming charge (rows = incoming axes).
    pub fn canonical_blocks(&self) -> BTreeMap<Qn, Array2<C64>> {
        let (rows, cols) = canonical_partition(&self.indices);
        self.repartition(&rows, &cols, None).expect("canonical partition").into_owned().blocks
    }

    pub fn nnz(&self) -> usize {
        self.blocks.values().map(|b| b.len()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks.values().flat_map(|b| b.iter()).map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.flux.hash(&mut h);
        for idx in &self.indices {
            idx.direction.hash(&mut h);
            idx.labels.hash(&mut h);
        }
        h.finish()
    }

    /// Symmetry-allowed block shapes under the current partition.
    pub fn allowed_blocks(&self) -> Vec<(Qn, usize, usize)> {
        let m = self.m();
        let rspace = SectorSpace::build(&self.indices, &self.rows, m);
        let cspace = SectorSpace::build(&self.indices, &self.cols, m);
        rspace
            .sectors
            .iter()
            .filter_map(|(q, offs)| {
                let nc = cspace.size(&(-self_flux_plus(self.flux, *q)));
                (nc > 0).then_some((*q, offs.len(), nc))
            })
            .collect()
    }

    /// Stores explicit zero blocks for every allowed sector that is absent.
    pub fn fill_structure(&mut self) {
        for (q, nr, nc) in self.allowed_blocks() {
            self.blocks.entry(q).or_insert_with(|| Array2::zeros((nr, nc)));
        }
    }

    /// Panics unless every stored block has the shape and charge its sector requires.
    pub fn check_invariants(&self) -> Result<()> {
        let shapes: BTreeMap<Qn, (usize, usize)> =
            self.allowed_blocks().into_iter().map(|(q, r, c)| (q, (r, c))).collect();
        for (q, block) in &self.blocks {
            match shapes.get(q) {
                Some(&shape) if shape == block.dim() => {}
                Some(&shape) => {
                    return Err(TntError::SymmetryViolation(format!(
                        "block {q} has shape {:?}, sector requires {shape:?}",
                        block.dim()
                    )))
                }
                None => {
                    return Err(TntError::SymmetryViolation(format!("block {q} violates the flux equation")))
                }
            }
        }
        Ok(())
    }

    /// Same elements under a different split of axes into rows and columns.
    pub fn repartition(&self, rows: &[usize], cols: &[usize], cache: Option<&ReshapeCache>) -> Result<Cow<'_, BlockTensor>> {
        if rows == self.rows.as_slice() && cols == self.cols.as_slice() {
            return Ok(Cow::Borrowed(self));
        }
        let mut seen = vec![false; self.rank()];
        for &a in rows.iter().chain(cols) {
            if a >= self.rank() || std::mem::replace(&mut seen[a], true) {
                return Err(invalid(format!("{rows:?}|{cols:?} is not a partition of {} axes", self.rank())));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(invalid(format!("{rows:?}|{cols:?} does not cover all {} axes", self.rank())));
        }
        let build = || self.build_plan(rows, cols);
        let plan = match cache {
            Some(cache) => cache.repartition(
                SectorKey {
                    fingerprint: self.fingerprint(),
                    src_rows: self.rows.clone(),
                    src_cols: self.cols.clone(),
                    dst_rows: rows.to_vec(),
                    dst_cols: cols.to_vec(),
                },
                build,
            ),
            None => Arc::new(build()),
        };
        let mut out: Vec<Option<Array2<C64>>> = vec![None; plan.targets.len()];
        for (q, block) in &self.blocks {
            let moves = plan.sources.get(q).expect("source sector in plan");
            debug_assert_eq!(moves.shape, block.dim());
            for &t in &moves.touched {
                let (_, nr, nc) = plan.targets[t as usize];
                out[t as usize].get_or_insert_with(|| Array2::zeros((nr, nc)));
            }
            let src = block.as_standard_layout();
            for (k, &v) in src.iter().enumerate() {
                let (t, flat) = moves.moves[k];
                let target = out[t as usize].as_mut().unwrap();
                target.as_slice_mut().unwrap()[flat as usize] = v;
            }
        }
        let blocks = plan
            .targets
            .iter()
            .zip(out)
            .filter_map(|(&(q, _, _), b)| b.map(|b| (q, b)))
            .collect();
        Ok(Cow::Owned(Self {
            indices: self.indices.clone(),
            flux: self.flux,
            rows: rows.to_vec(),
            cols: cols.to_vec(),
            blocks,
        }))
    }

    fn build_plan(&self, rows: &[usize], cols: &[usize]) -> RepartitionPlan {
        let m = self.m();
        let dims = self.dims();
        let r1 = SectorSpace::build(&self.indices, &self.rows, m);
        let c1 = SectorSpace::build(&self.indices, &self.cols, m);
        let r2 = SectorSpace::build(&self.indices, rows, m);
        let c2 = SectorSpace::build(&self.indices, cols, m);
        let rstride = row_major_strides(&rows.iter().map(|&a| dims[a]).collect::<Vec<_>>());
        let cstride = row_major_strides(&cols.iter().map(|&a| dims[a]).collect::<Vec<_>>());
        let weight = |a: usize| -> (usize, usize) {
            if let Some(p) = rows.iter().position(|&x| x == a) {
                (rstride[p], 0)
            } else {
                let p = cols.iter().position(|&x| x == a).unwrap();
                (0, cstride[p])
            }
        };
        let (rr, rc) = offset_parts(
            &self.rows.iter().map(|&a| dims[a]).collect::<Vec<_>>(),
            &self.rows.iter().map(|&a| weight(a)).collect::<Vec<_>>(),
        );
        let (cr, cc) = offset_parts(
            &self.cols.iter().map(|&a| dims[a]).collect::<Vec<_>>(),
            &self.cols.iter().map(|&a| weight(a)).collect::<Vec<_>>(),
        );
        let mut targets = Vec::new();
        let mut target_of = vec![u32::MAX; r2.sectors.len()];
        for (s, (q, offs)) in r2.sectors.iter().enumerate() {
            let nc = c2.size(&(-self_flux_plus(self.flux, *q)));
            if nc > 0 {
                target_of[s] = targets.len() as u32;
                targets.push((*q, offs.len(), nc));
            }
        }
        let mut sources = BTreeMap::new();
        for (q, roffs) in &r1.sectors {
            let Some(cs) = c1.find(&(-self_flux_plus(self.flux, *q))) else { continue };
            let coffs = &c1.sectors[cs].1;
            let mut moves = Vec::with_capacity(roffs.len() * coffs.len());
            let mut touched = Vec::new();
            for &r in roffs {
                for &c in coffs {
                    let tr = rr[r as usize] + cr[c as usize];
                    let tc = rc[r as usize] + cc[c as usize];
                    let (sr, rank_r) = r2.pos[tr];
                    let (_, rank_c) = c2.pos[tc];
                    let t = target_of[sr as usize];
                    debug_assert_ne!(t, u32::MAX);
                    let ncols = targets[t as usize].2 as u32;
                    moves.push((t, rank_r * ncols + rank_c));
                    touched.push(t);
                }
            }
            touched.sort_unstable();
            touched.dedup();
            sources.insert(*q, SourceMoves { shape: (roffs.len(), coffs.len()), touched, moves });
        }
        RepartitionPlan { targets, sources }
    }

    /// Reorders axes so that result axis `k` is input axis `order[k]`. No values move.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        crate::dense::validate_permutation(order, self.rank())?;
        let inv = crate::dense::inverse_permutation(order);
        Ok(Self {
            indices: order.iter().map(|&o| self.indices[o].clone()).collect(),
            flux: self.flux,
            rows: self.rows.iter().map(|&a| inv[a]).collect(),
            cols: self.cols.iter().map(|&a| inv[a]).collect(),
            blocks: self.blocks.clone(),
        })
    }

    /// Complex conjugate: values conjugated, every direction and the flux reversed.
    pub fn conj(&self) -> Self {
        Self {
            indices: self.indices.iter().map(ChargedIndex::flipped).collect(),
            flux: -self.flux,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            blocks: self.blocks.iter().map(|(q, b)| (-*q, b.mapv(|v| v.conj()))).collect(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        self.map_blocks(|_, b| b.mapv(|v| v * factor))
    }

    /// Applies `f` to each stored sector independently.
    pub fn map_blocks(&self, mut f: impl FnMut(&Qn, &Array2<C64>) -> Array2<C64>) -> Self {
        Self {
            indices: self.indices.clone(),
            flux: self.flux,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|(q, b)| {
                    let out = f(q, b);
                    assert_eq!(out.dim(), b.dim(), "blockwise map must preserve sector shape");
                    (*q, out)
                })
                .collect(),
        }
    }

    pub fn same_structure(&self, other: &BlockTensor) -> bool {
        self.flux == other.flux
            && self.indices.len() == other.indices.len()
            && self
                .indices
                .iter()
                .zip(&other.indices)
                .all(|(a, b)| a.direction == b.direction && a.same_labels(b))
    }

    /// Sector-by-sector sum.
    pub fn add(&self, other: &BlockTensor, cache: Option<&ReshapeCache>) -> Result<Self> {
        if !self.same_structure(other) {
            return Err(TntError::IncompatibleBlocks("addition needs identical charge structure".into()));
        }
        let other = other.repartition(&self.rows, &self.cols, cache)?;
        let mut blocks = self.blocks.clone();
        for (q, b) in &other.blocks {
            match blocks.get_mut(q) {
                Some(a) => *a += b,
                None => {
                    blocks.insert(*q, b.clone());
                }
            }
        }
        Ok(Self { indices: self.indices.clone(), flux: self.flux, rows: self.rows.clone(), cols: self.cols.clone(), blocks })
    }

    /// Sums over axis pairs `(a_axes[k], b_axes[k])`. Result axes: free axes of
    /// `a` in order, then free axes of `b`.
    pub fn contract(
        a: &BlockTensor,
        a_axes: &[usize],
        b: &BlockTensor,
        b_axes: &[usize],
        cache: Option<&ReshapeCache>,
    ) -> Result<BlockTensor> {
        if a_axes.len() != b_axes.len() {
            return Err(invalid("contracted axis lists differ in length"));
        }
        if a.m() != b.m() {
            return Err(TntError::IncompatibleBlocks("operands use different label lengths".into()));
        }
        for (&x, &y) in a_axes.iter().zip(b_axes) {
            if x >= a.rank() || y >= b.rank() {
                return Err(invalid("contracted axis out of range"));
            }
            if !a.indices[x].pairs_with(&b.indices[y]) {
                return Err(TntError::IncompatibleBlocks(format!(
                    "axis {x} ({:?}) cannot contract with axis {y} ({:?}): need equal labels and opposite directions",
                    a.indices[x].direction, b.indices[y].direction
                )));
            }
        }
        let a_free: Vec<usize> = (0..a.rank()).filter(|k| !a_axes.contains(k)).collect();
        let b_free: Vec<usize> = (0..b.rank()).filter(|k| !b_axes.contains(k)).collect();
        let am = a.repartition(&a_free, a_axes, cache)?;
        let bm = b.repartition(b_axes, &b_free, cache)?;
        let backend = Backend::from_env();
        let mut blocks = BTreeMap::new();
        for (q, ablock) in &am.blocks {
            let key = a.flux + *q;
            if let Some(bblock) = bm.blocks.get(&key) {
                debug_assert_eq!(ablock.ncols(), bblock.nrows());
                let c = if backend == Backend::Blas {
                    ablock.dot(bblock)
                } else {
                    contract_matrices(ablock.view(), bblock.view())?
                };
                blocks.insert(*q, c);
            }
        }
        let mut indices: Vec<ChargedIndex> = a_free.iter().map(|&k| a.indices[k].clone()).collect();
        indices.extend(b_free.iter().map(|&k| b.indices[k].clone()));
        let na = a_free.len();
        Ok(BlockTensor {
            indices,
            flux: a.flux + b.flux,
            rows: (0..na).collect(),
            cols: (na..na + b_free.len()).collect(),
            blocks,
        })
    }

    /// Trace over pairs of axes of this tensor.
    pub fn partial_trace(&self, pairs: &[(usize, usize)]) -> Result<BlockTensor> {
        // contract against an identity with matching, reversed legs
        let mut id_indices = Vec::new();
        let mut a_axes = Vec::new();
        let mut b_axes = Vec::new();
        for (k, &(x, y)) in pairs.iter().enumerate() {
            if !self.indices[x].pairs_with(&self.indices[y]) {
                return Err(TntError::IncompatibleBlocks(format!("axes {x} and {y} cannot be traced")));
            }
            id_indices.push(self.indices[x].flipped());
            id_indices.push(self.indices[y].flipped());
            a_axes.extend([x, y]);
            b_axes.extend([2 * k, 2 * k + 1]);
        }
        let dense_id = {
            let dims: Vec<usize> = id_indices.iter().map(ChargedIndex::dim).collect();
            let mut t = DenseTensor::zeros(dims.clone())?;
            let mut values = t.values().to_vec();
            let n = pairs.len();
            let mut idx = vec![0usize; n];
            loop {
                let full: Vec<usize> = idx.iter().flat_map(|&i| [i, i]).collect();
                values[t.offset(&full)?] = C64::new(1.0, 0.0);
                let mut k = n;
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < dims[2 * k] {
                        break;
                    }
                    idx[k] = 0;
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if k == usize::MAX || n == 0 {
                    break;
                }
            }
            t = DenseTensor::new(values, dims)?;
            t
        };
        let (id, _) = BlockTensor::from_dense(&dense_id, id_indices, Qn::zero(self.m()))?;
        BlockTensor::contract(self, &a_axes, &id, &b_axes, None)
    }

    /// Inserts a dimension-one axis at `pos`. The flux absorbs its charge, so no values move.
    pub fn insert_singleton(&self, pos: usize, index: ChargedIndex) -> Result<Self> {
        if index.dim() != 1 || index.m() != self.m() {
            return Err(invalid("singleton axis needs exactly one label of matching length"));
        }
        if pos > self.rank() {
            return Err(invalid(format!("axis position {pos} beyond rank {}", self.rank())));
        }
        let shift = |a: usize| if a >= pos { a + 1 } else { a };
        let mut indices = self.indices.clone();
        let charge = index.signed(0);
        indices.insert(pos, index);
        let mut cols: Vec<usize> = self.cols.iter().map(|&a| shift(a)).collect();
        cols.push(pos);
        Ok(Self {
            indices,
            flux: self.flux - charge,
            rows: self.rows.iter().map(|&a| shift(a)).collect(),
            cols,
            blocks: self.blocks.clone(),
        })
    }

    /// Removes the dimension-one axis at `pos`.
    pub fn remove_singleton(&self, pos: usize) -> Result<Self> {
        if pos >= self.rank() || self.indices[pos].dim() != 1 {
            return Err(invalid(format!("axis {pos} is not a singleton")));
        }
        let charge = self.indices[pos].signed(0);
        let shift = |a: usize| if a > pos { a - 1 } else { a };
        let mut indices = self.indices.clone();
        indices.remove(pos);
        let in_rows = self.rows.contains(&pos);
        let blocks = if in_rows {
            self.blocks.iter().map(|(q, b)| (*q - charge, b.clone())).collect()
        } else {
            self.blocks.clone()
        };
        Ok(Self {
            indices,
            flux: self.flux + charge,
            rows: self.rows.iter().filter(|&&a| a != pos).map(|&a| shift(a)).collect(),
            cols: self.cols.iter().filter(|&&a| a != pos).map(|&a| shift(a)).collect(),
            blocks,
        })
    }

    /// Merges `count` consecutive axes starting at `first` into one axis whose
    /// labels are the net charges of the merged multi-indices (row-major).
    pub fn merge_axes(&self, first: usize, count: usize, cache: Option<&ReshapeCache>) -> Result<Self> {
        if count == 0 || first + count > self.rank() {
            return Err(invalid("merge range out of bounds"));
        }
        let group: Vec<usize> = (first..first + count).collect();
        let all_out = group.iter().all(|&a| self.indices[a].direction == Direction::Out);
        let direction = if all_out { Direction::Out } else { Direction::In };
        let mut labels = vec![Qn::zero(self.m())];
        for &a in &group {
            let idx = &self.indices[a];
            labels = labels
                .iter()
                .flat_map(|&c| (0..idx.dim()).map(move |i| c + idx.signed(i)))
                .collect();
        }
        if all_out {
            labels.iter_mut().for_each(|l| *l = -*l);
        }
        let merged = ChargedIndex::new(direction, labels)?;
        // put the group alone on the rows so the merged axis enumerates identically
        let rest: Vec<usize> = (0..self.rank()).filter(|a| !group.contains(a)).collect();
        let t = self.repartition(&group, &rest, cache)?;
        let map = |a: usize| if a >= first + count { a - count + 1 } else { a };
        let mut indices: Vec<ChargedIndex> = self.indices[..first].to_vec();
        indices.push(merged);
        indices.extend(self.indices[first + count..].iter().cloned());
        let blocks = if all_out {
            // key is the net charge of the single row axis: unchanged, it is a sum of signed charges
            t.blocks.clone()
        } else {
            t.blocks.clone()
        };
        Ok(Self {
            indices,
            flux: self.flux,
            rows: vec![first],
            cols: rest.iter().map(|&a| map(a)).collect(),
            blocks,
        })
    }

    /// Flattened values of every allowed sector (absent sectors read as zero), in key order.
    pub fn flat_values(&self) -> Vec<C64> {
        let mut out = Vec::new();
        for (q, nr, nc) in self.allowed_blocks() {
            match self.blocks.get(&q) {
                Some(b) => out.extend(b.iter().copied()),
                None => out.extend(std::iter::repeat_n(C64::new(0.0, 0.0), nr * nc)),
            }
        }
        out
    }

    /// Inverse of [`BlockTensor::flat_values`] for this structure and partition.
    pub fn with_flat_values(&self, values: &[C64]) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        let mut at = 0;
        for (q, nr, nc) in self.allowed_blocks() {
            let n = nr * nc;
            if at + n > values.len() {
                return Err(invalid("flat vector too short for block structure"));
            }
            blocks.insert(q, Array2::from_shape_vec((nr, nc), values[at..at + n].to_vec()).unwrap());
            at += n;
        }
        if at != values.len() {
            return Err(invalid("flat vector too long for block structure"));
        }
        Ok(Self { indices: self.indices.clone(), flux: self.flux, rows: self.rows.clone(), cols: self.cols.clone(), blocks })
    }

    /// Tensor whose blocks are the given matrices under an explicit partition.
    pub fn from_blocks(
        indices: Vec<ChargedIndex>,
        flux: Qn,
        rows: Vec<usize>,
        cols: Vec<usize>,
        blocks: BTreeMap<Qn, Array2<C64>>,
    ) -> Result<Self> {
        validate_indices(&indices, &flux)?;
        let t = Self { indices, flux, rows, cols, blocks };
        t.check_invariants()?;
        Ok(t)
    }
}

#[inline]
fn self_flux_plus(flux: Qn, q: Qn) -> Qn {
    flux + q
}

/// Keeps the symmetry-allowed elements of `t`; emits a warning when anything is discarded.
pub fn impose_symmetry(t: &DenseTensor, indices: Vec<ChargedIndex>) -> Result<(BlockTensor, f64)> {
    let m = indices.first().map_or(1, ChargedIndex::m);
    impose_symmetry_with_flux(t, indices, Qn::zero(m))
}

pub fn impose_symmetry_with_flux(t: &DenseTensor, indices: Vec<ChargedIndex>, flux: Qn) -> Result<(BlockTensor, f64)> {
    let (b, discarded) = BlockTensor::from_dense(t, indices, flux)?;
    if discarded > 0.0 {
        log::warn!("imposing symmetry discarded elements with Frobenius norm {discarded:e}");
    }
    Ok((b, discarded))
}

/// Charge change `out - in` shared by every nonzero element of `t`.
pub fn covariant_shift(t: &DenseTensor, indices: &[ChargedIndex]) -> Result<Qn> {
    if indices.len() != t.rank() || indices.iter().zip(t.dims()).any(|(i, &d)| i.dim() != d) {
        return Err(invalid("charges do not match tensor dims"));
    }
    let m = indices.first().map_or(1, ChargedIndex::m);
    let all: Vec<usize> = (0..indices.len()).collect();
    let space = SectorSpace::build(indices, &all, m);
    let mut shift: Option<Qn> = None;
    for (off, v) in t.values().iter().enumerate() {
        if *v == C64::new(0.0, 0.0) {
            continue;
        }
        let net = space.sectors[space.pos[off].0 as usize].0;
        let delta = -net;
        match shift {
            None => shift = Some(delta),
            Some(s) if s != delta => {
                return Err(TntError::NotCovariant(format!("elements shift charge by both {s} and {delta}")))
            }
            _ => {}
        }
    }
    Ok(shift.unwrap_or_else(|| Qn::zero(m)))
}

/// Makes a covariant operator invariant by appending an incoming singleton axis
/// labelled with the operator's charge shift. Returns the tensor and that shift.
pub fn promote_covariant(t: &DenseTensor, indices: Vec<ChargedIndex>) -> Result<(BlockTensor, Qn)> {
    let delta = covariant_shift(t, &indices)?;
    let mut dims = t.dims().to_vec();
    dims.push(1);
    let extended = t.reshape(dims)?;
    let mut all = indices;
    all.push(ChargedIndex::new(Direction::In, vec![delta])?);
    let (b, discarded) = BlockTensor::from_dense(&extended, all, Qn::zero(delta.len()))?;
    debug_assert_eq!(discarded, 0.0);
    Ok((b, delta))
}

/// One connected component of a thresholded matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Array2<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoBlocking {
    pub blocks: Vec<AutoBlock>,
    /// Row order placing the blocks on the diagonal; rows without entries last.
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
}

impl AutoBlocking {
    /// Thresholded matrix rebuilt from the blocks in the original row/column order.
    pub fn assemble(&self, nrows: usize, ncols: usize) -> Array2<C64> {
        let mut m = Array2::zeros((nrows, ncols));
        for b in &self.blocks {
            for (i, &r) in b.rows.iter().enumerate() {
                for (j, &c) in b.cols.iter().enumerate() {
                    m[[r, c]] = b.values[[i, j]];
                }
            }
        }
        m
    }

    /// Block-diagonal matrix in permuted order.
    pub fn permuted(&self, nrows: usize, ncols: usize) -> Array2<C64> {
        let m = self.assemble(nrows, ncols);
        let mut out = Array2::zeros((nrows, ncols));
        for (i, &r) in self.row_perm.iter().enumerate() {
            for (j, &c) in self.col_perm.iter().enumerate() {
                out[[i, j]] = m[[r, c]];
            }
        }
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Splits a matrix into independent blocks after zeroing entries with magnitude `<= tol`.
/// Blocks are connected components of the row-column graph of surviving entries,
/// ordered by their first row. A negative `tol` returns the whole matrix as one block.
pub fn auto_block(m: ArrayView2<C64>, tol: f64) -> AutoBlocking {
    let (nr, nc) = m.dim();
    if tol < 0.0 {
        return AutoBlocking {
            blocks: vec![AutoBlock { rows: (0..nr).collect(), cols: (0..nc).collect(), values: m.to_owned() }],
            row_perm: (0..nr).collect(),
            col_perm: (0..nc).collect(),
        };
    }
    let mut parent: Vec<usize> = (0..nr + nc).collect();
    let mut row_used = vec![false; nr];
    let mut col_used = vec![false; nc];
    for ((i, j), v) in m.indexed_iter() {
        if v.norm() > tol {
            row_used[i] = true;
            col_used[j] = true;
            let (a, b) = (find(&mut parent, i), find(&mut parent, nr + j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in (0..nr).filter(|&i| row_used[i]) {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().0.push(i);
    }
    for j in (0..nc).filter(|&j| col_used[j]) {
        let root = find(&mut parent, nr + j);
        groups.entry(root).or_default().1.push(j);
    }
    let mut blocks: Vec<AutoBlock> = groups
        .into_values()
        .map(|(rows, cols)| {
            let mut values = Array2::zeros((rows.len(), cols.len()));
            for (a, &r) in rows.iter().enumerate() {
                for (b, &c) in cols.iter().enumerate() {
                    let v = m[[r, c]];
                    values[[a, b]] = if v.norm() > tol { v } else { C64::new(0.0, 0.0) };
                }
            }
            AutoBlock { rows, cols, values }
        })
        .collect();
    blocks.sort_by_key(|b| b.rows[0]);
    let mut row_perm: Vec<usize> = blocks.iter().flat_map(|b| b.rows.iter().copied()).collect();
    row_perm.extend((0..nr).filter(|&i| !row_used[i]));
    let mut col_perm: Vec<usize> = blocks.iter().flat_map(|b| b.cols.iter().copied()).collect();
    col_perm.extend((0..nc).filter(|&j| !col_used[j]));
    AutoBlocking { blocks, row_perm, col_perm }
}
