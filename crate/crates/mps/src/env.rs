//! Partial contractions of `<psi|O|psi>` from either end of the chain.
//!
//! Operator environments have axes `[ket, mpo, bra]`, overlap environments
//! `[ket, bra]`. The bra is the complex conjugate of the site tensor.

use tnt_core::{BlockTensor, ChargedIndex, DenseTensor, Qn, ReshapeCache, Tensor, C64};

use crate::Result;

fn unit(indices: Option<Vec<ChargedIndex>>, rank: usize) -> Result<Tensor> {
    let d = DenseTensor::new(vec![C64::new(1.0, 0.0)], vec![1; rank])?;
    Ok(match indices {
        None => Tensor::Dense(d),
        Some(idx) => {
            let m = idx[0].m();
            Tensor::Block(BlockTensor::from_dense(&d, idx, Qn::zero(m))?.0)
        }
    })
}

fn index(t: &Tensor, axis: usize) -> Option<ChargedIndex> {
    t.charges().map(|c| c[axis].clone())
}

/// Left end of `<psi|psi>` for first site `a`.
pub fn overlap_left_boundary(a: &Tensor) -> Result<Tensor> {
    unit(index(a, 0).map(|l| vec![l.flipped(), l]), 2)
}

/// Right end of `<psi|psi>` for last site `a`.
pub fn overlap_right_boundary(a: &Tensor) -> Result<Tensor> {
    unit(index(a, 2).map(|r| vec![r.flipped(), r]), 2)
}

/// Left end of `<psi|W|psi>` for first site `a` and first MPO tensor `w`.
pub fn left_boundary(a: &Tensor, w: &Tensor) -> Result<Tensor> {
    let idx = match (index(a, 0), index(w, 0)) {
        (Some(l), Some(wl)) => Some(vec![l.flipped(), wl.flipped(), l]),
        _ => None,
    };
    unit(idx, 3)
}

pub fn right_boundary(a: &Tensor, w: &Tensor) -> Result<Tensor> {
    let idx = match (index(a, 2), index(w, 1)) {
        (Some(r), Some(wr)) => Some(vec![r.flipped(), wr.flipped(), r]),
        _ => None,
    };
    unit(idx, 3)
}

/// `t[a, t, b] = Σ_s op[t, s] a[a, s, b]`.
pub fn apply_local(op: &Tensor, a: &Tensor, cache: Option<&ReshapeCache>) -> Result<Tensor> {
    let t = Tensor::contract(op, &[1], a, &[1], cache)?;
    Ok(t.permute(&[1, 0, 2], cache)?)
}

/// Absorbs one more site (optionally with a one-site operator on the ket)
/// into an overlap environment growing to the right.
pub fn overlap_extend_left(e: &Tensor, a: &Tensor, op: Option<&Tensor>, cache: Option<&ReshapeCache>) -> Result<Tensor> {
    let ket = match op {
        Some(o) => apply_local(o, a, cache)?,
        None => a.clone(),
    };
    let t = Tensor::contract(e, &[0], &ket, &[0], cache)?;
    Ok(Tensor::contract(&t, &[0, 1], &a.conj(), &[0, 1], cache)?)
}

/// As [`overlap_extend_left`] for an environment growing to the left.
pub fn overlap_extend_right(e: &Tensor, a: &Tensor, op: Option<&Tensor>, cache: Option<&ReshapeCache>) -> Result<Tensor> {
    let ket = match op {
        Some(o) => apply_local(o, a, cache)?,
        None => a.clone(),
    };
    let t = Tensor::contract(&ket, &[2], e, &[0], cache)?;
    Ok(Tensor::contract(&t, &[1, 2], &a.conj(), &[1, 2], cache)?)
}

/// Joins a left and a right overlap environment meeting at the same bond.
pub fn overlap_close(left: &Tensor, right: &Tensor, cache: Option<&ReshapeCache>) -> Result<C64> {
    Ok(scalar(&Tensor::contract(left, &[0, 1], right, &[0, 1], cache)?))
}

/// First value of a tensor whose axes all have dimension one (zero if the
/// only element is symmetry-forbidden).
pub fn scalar(t: &Tensor) -> C64 {
    t.to_dense().values().first().copied().unwrap_or_default()
}

/// `E[a, w, a'] A[a, s, b] W[w, v, s, t] conj(A)[a', t, b'] -> E'[b, v, b']`.
pub fn extend_left(e: &Tensor, a: &Tensor, w: &Tensor, cache: Option<&ReshapeCache>) -> Result<Tensor> {
    let t1 = Tensor::contract(e, &[0], a, &[0], cache)?;
    let t2 = Tensor::contract(&t1, &[0, 2], w, &[0, 2], cache)?;
    Ok(Tensor::contract(&t2, &[0, 3], &a.conj(), &[0, 1], cache)?)
}

/// `A[a, s, b] W[w, v, s, t] conj(A)[a', t, b'] E[b, v, b'] -> E'[a, w, a']`.
pub fn extend_right(e: &Tensor, a: &Tensor, w: &Tensor, cache: Option<&ReshapeCache>) -> Result<Tensor> {
    let t1 = Tensor::contract(a, &[2], e, &[0], cache)?;
    let t2 = Tensor::contract(&t1, &[1, 2], w, &[2, 1], cache)?;
    Ok(Tensor::contract(&t2, &[1, 3], &a.conj(), &[2, 1], cache)?)
}

/// Effective Hamiltonian of one site applied to `a`; the result has the
/// layout of `a`.
pub fn apply_heff(left: &Tensor, w: &Tensor, right: &Tensor, a: &Tensor, cache: Option<&ReshapeCache>) -> Result<Tensor> {
    let t1 = Tensor::contract(left, &[0], a, &[0], cache)?;
    let t2 = Tensor::contract(&t1, &[0, 2], w, &[0, 2], cache)?;
    Ok(Tensor::contract(&t2, &[1, 2], right, &[0, 1], cache)?)
}

/// `Σ left[a, w, ·] A[a, s, ·] W[w, v, s, t]`, arranged as `[a', t, (v b)]`:
/// the expansion term for a sweep moving right.
pub fn expansion_right(left: &Tensor, w: &Tensor, a: &Tensor, cache: Option<&ReshapeCache>) -> Result<Tensor> {
    let t1 = Tensor::contract(left, &[0], a, &[0], cache)?;
    let t2 = Tensor::contract(&t1, &[0, 2], w, &[0, 2], cache)?;
    // [a', b, v, t] -> [a', t, v, b]
    let t3 = t2.permute(&[0, 3, 2, 1], cache)?;
    Ok(t3.merge_axes(2, 2, cache)?)
}

/// Expansion term for a sweep moving left, arranged as `[(w a), t, b']`.
pub fn expansion_left(right: &Tensor, w: &Tensor, a: &Tensor, cache: Option<&ReshapeCache>) -> Result<Tensor> {
    let t1 = Tensor::contract(a, &[2], right, &[0], cache)?;
    let t2 = Tensor::contract(&t1, &[1, 2], w, &[2, 1], cache)?;
    // [a, b', w, t] -> [w, a, t, b']
    let t3 = t2.permute(&[2, 0, 3, 1], cache)?;
    Ok(t3.merge_axes(0, 2, cache)?)
}
