//! The three-layer network `<psi|O|psi>` built from graph nodes, and the
//! effective one-site operator obtained by contracting all but one column.

use tnt_core::{DenseTensor, Graph, Network, NodeId, Tensor};

use crate::mpo::Mpo;
use crate::state::Mps;
use crate::{Error, Result};

/// Node columns of `<psi|O|psi>`. Ket legs are `L D R`, operator legs
/// `M N U V` (left, right, ket side, bra side) and bra legs `l d r`. The
/// chain ends are closed by two unit nodes with legs `R N r` and `L M l`.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub ket: Vec<NodeId>,
    pub op: Vec<NodeId>,
    pub bra: Vec<NodeId>,
    pub left_end: NodeId,
    pub right_end: NodeId,
}

/// Effective operator of one site: left block with legs `R N r`, the site's
/// operator node and the right block with legs `L M l`.
#[derive(Debug, Clone)]
pub struct Heff {
    pub site: usize,
    pub left: NodeId,
    pub op: NodeId,
    pub right: NodeId,
}

/// Interior nodes of a chain network in order.
fn chain(g: &Graph, net: &Network) -> Result<Vec<NodeId>> {
    let mut out = Vec::new();
    let mut cur = g.find_first(net)?;
    while let Some(n) = cur {
        out.push(n);
        let next = g.find_conn(n, 'R')?;
        cur = if next == net.end() { None } else { Some(next) };
    }
    Ok(out)
}

fn detach(g: &mut Graph, net: Network) -> Result<Vec<NodeId>> {
    let nodes = chain(g, &net)?;
    g.free(net.start())?;
    g.free(net.end())?;
    Ok(nodes)
}

fn unit_node(g: &mut Graph, labels: &str, peers: &[(NodeId, char)]) -> Result<NodeId> {
    let indices: Option<Vec<_>> = peers
        .iter()
        .map(|&(p, l)| g.leg_index(p, l).map(|i| i.map(|i| i.flipped())))
        .collect::<tnt_core::Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let d = DenseTensor::new(vec![tnt_core::C64::new(1.0, 0.0)], vec![1; peers.len()])?;
    let t = match indices {
        Some(idx) if g.is_blocked(peers[0].0)? => {
            let m = idx[0].m();
            Tensor::Block(tnt_core::BlockTensor::from_dense(&d, idx, tnt_core::Qn::zero(m))?.0)
        }
        _ => Tensor::Dense(d),
    };
    let node = g.create(t, labels)?;
    for (c, &(p, l)) in labels.chars().zip(peers) {
        g.join(node, c, p, l)?;
    }
    Ok(node)
}

/// Builds `<psi|O|psi>` from copies of the state and operator; the originals
/// are not modified.
pub fn mps_mpo_mps_connect(g: &mut Graph, psi: &Mps, op: &Mpo) -> Result<Sandwich> {
    if psi.len() != op.len() {
        return Err(Error::InvalidArgument(format!("state has {} sites, operator {}", psi.len(), op.len())));
    }
    if psi.basis.dim() != op.basis.dim() {
        return Err(Error::InvalidArgument("state and operator have different physical dimensions".into()));
    }
    let ket_net = g.network_copy(&psi.net, false)?;
    let bra_net = g.network_copy(&psi.net, true)?;
    let op_net = g.network_copy(&op.net, false)?;
    let ket = detach(g, ket_net)?;
    let bra = detach(g, bra_net)?;
    let ops = detach(g, op_net)?;
    for &b in &bra {
        g.relabel(b, "LDR=ldr")?;
    }
    for &o in &ops {
        g.relabel(o, "LRUD=MNUV")?;
    }
    for k in 0..ket.len() {
        g.join(ket[k], 'D', ops[k], 'U')?;
        g.join(ops[k], 'V', bra[k], 'd')?;
    }
    let n = ket.len() - 1;
    let left_end = unit_node(g, "RNr", &[(ket[0], 'L'), (ops[0], 'M'), (bra[0], 'l')])?;
    let right_end = unit_node(g, "LMl", &[(ket[n], 'R'), (ops[n], 'N'), (bra[n], 'r')])?;
    Ok(Sandwich { ket, op: ops, bra, left_end, right_end })
}

impl Sandwich {
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut v = vec![self.left_end];
        v.extend(&self.ket);
        v.extend(&self.op);
        v.extend(&self.bra);
        v.push(self.right_end);
        v
    }

    /// Contracts the whole network to `<psi|O|psi>`, consuming it.
    pub fn value(self, g: &mut Graph) -> Result<tnt_core::C64> {
        let r = g.contract_list("", &self.nodes())?;
        let v = g.first_value(r)?;
        g.free(r)?;
        Ok(v)
    }

    pub fn free(self, g: &mut Graph) -> Result<()> {
        for n in self.nodes() {
            g.free(n)?;
        }
        Ok(())
    }
}

/// Contracts every column except `site` into a left and a right block and
/// drops the ket and bra nodes of `site`.
pub fn heff_prepare(g: &mut Graph, sw: Sandwich, site: usize) -> Result<Heff> {
    if site >= sw.ket.len() {
        return Err(Error::InvalidArgument(format!("site {site} outside chain of length {}", sw.ket.len())));
    }
    let mut left_nodes = vec![sw.left_end];
    left_nodes.extend(&sw.ket[..site]);
    left_nodes.extend(&sw.op[..site]);
    left_nodes.extend(&sw.bra[..site]);
    let mut right_nodes: Vec<NodeId> = sw.ket[site + 1..].to_vec();
    right_nodes.extend(&sw.op[site + 1..]);
    right_nodes.extend(&sw.bra[site + 1..]);
    right_nodes.push(sw.right_end);
    g.free(sw.ket[site])?;
    g.free(sw.bra[site])?;
    let left = g.contract_list("RNr", &left_nodes)?;
    let right = g.contract_list("LMl", &right_nodes)?;
    Ok(Heff { site, left, op: sw.op[site], right })
}

/// Applies the effective operator to a site node with legs `L D R`; returns
/// a new node with the same legs. The inputs are left untouched.
pub fn heff_contract(g: &mut Graph, a: NodeId, heff: &Heff) -> Result<NodeId> {
    let a = g.copy(a, false, None)?;
    let left = g.copy(heff.left, false, None)?;
    let op = g.copy(heff.op, false, None)?;
    let right = g.copy(heff.right, false, None)?;
    g.join(left, 'N', op, 'M')?;
    g.join(op, 'N', right, 'M')?;
    g.join(a, 'L', left, 'R')?;
    g.join(a, 'R', right, 'L')?;
    g.join(a, 'D', op, 'U')?;
    let r = g.contract_list("rVl", &[left, a, op, right])?;
    g.relabel(r, "rVl=LDR")?;
    Ok(r)
}

impl Heff {
    pub fn free(self, g: &mut Graph) -> Result<()> {
        g.free(self.left)?;
        g.free(self.op)?;
        g.free(self.right)?;
        Ok(())
    }
}
